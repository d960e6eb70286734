#include "voxsim/netgen.hpp"
#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace voxsim {

using nlohmann::json;

namespace {

// Cumulative-weight categorical. Weights are fixed per draw site, so the
// upper_bound pick is deterministic.
struct Categorical {
    std::vector<double> cdf;
    double total = 0.0;

    void build(const std::vector<double>& w) {
        cdf.resize(w.size());
        double acc = 0.0;
        for (size_t i = 0; i < w.size(); ++i) {
            if (!(w[i] >= 0.0)) throw ConfigError("negative categorical weight");
            acc += w[i];
            cdf[i] = acc;
        }
        total = acc;
    }
    bool empty() const { return total <= 0.0; }
    size_t pick(double u01) const {
        double x = u01 * total;
        size_t i = static_cast<size_t>(
            std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
        return i < cdf.size() ? i : cdf.size() - 1;
    }
};

uint32_t inter_picks(double rho, uint32_t k_in) {
    // ceil with a guard against fractions that are integers up to rounding.
    return static_cast<uint32_t>(std::ceil(rho * k_in - 1e-9));
}

} // namespace

GlobalNetwork sample_synapses(const NetworkLayout& layout,
                              const ConnectomeGraph& graph,
                              const IntraMatrices& intra,
                              uint64_t seed) {
    if (graph.voxel_count != layout.voxels.size())
        throw ConfigError("connectome / layout voxel count mismatch");
    const uint32_t voxel_count = graph.voxel_count;
    auto in_base = graph.in_base();

    // Per-voxel inter-voxel source distribution.
    std::vector<Categorical> in_cat(voxel_count);
    std::vector<std::vector<uint32_t>> in_srcs(voxel_count);
    std::vector<std::vector<uint64_t>> in_exc(voxel_count);   // exc counts per src
    for (uint32_t v = 0; v < voxel_count; ++v) {
        std::vector<double> w;
        for (size_t e = in_base[v]; e < in_base[v + 1]; ++e) {
            w.push_back(graph.edges[e].weight);
            in_srcs[v].push_back(graph.edges[e].src);
        }
        in_cat[v].build(w);
        for (uint32_t s : in_srcs[v])
            in_exc[v].push_back(layout.excitatory_count(s));
    }

    GlobalNetwork net;
    net.rows.resize(voxel_count);

    for (uint32_t v = 0; v < voxel_count; ++v) {
        const VoxelSpec& vx = layout.voxels[v];
        const uint32_t k_in = vx.k_in;
        const uint32_t m = inter_picks(vx.rho, k_in);
        if (m > 0 && in_cat[v].empty())
            throw ConfigError("voxel " + std::to_string(v) +
                              ": rho > 0 but no weighted inter-voxel in-edges");
        const auto& pmat = intra.of(vx.region);
        const uint32_t unit_from = layout.voxel_unit_base[v];
        const uint32_t unit_to = layout.voxel_unit_base[v + 1];
        const size_t pops = vx.populations.size();
        if (pmat.size() != pops)
            throw ConfigError("population matrix size does not match region layout");

        // Intra-voxel source distribution per target population.
        std::vector<Categorical> pop_cat(pops);
        for (size_t tp = 0; tp < pops; ++tp) {
            std::vector<double> w(pops);
            for (size_t sp = 0; sp < pops; ++sp)
                w[sp] = pmat[tp][sp] *
                        static_cast<double>(layout.units[unit_from + sp].neurons);
            pop_cat[tp].build(w);
        }

        uint64_t voxel_neurons = 0;
        for (uint32_t u = unit_from; u < unit_to; ++u)
            voxel_neurons += layout.units[u].neurons;
        auto& rows = net.rows[v];
        rows.resize(voxel_neurons * static_cast<uint64_t>(k_in));

        uint64_t row_cursor = 0;
        for (uint32_t u = unit_from; u < unit_to; ++u) {
            const Unit& unit = layout.units[u];
            const uint16_t tgt_pop = unit.pop;
            if (m < k_in && pop_cat[tgt_pop].empty())
                throw ConfigError("voxel " + std::to_string(v) + " population " +
                                  std::to_string(tgt_pop) +
                                  ": intra picks required but matrix row is empty");
            for (uint32_t j = 0; j < unit.neurons; ++j) {
                const uint64_t gid = unit.gid_base + j;
                const uint64_t
                    key_voxel = mix_key(seed, rngstream::pick_voxel, gid),
                    key_neuron = mix_key(seed, rngstream::pick_neuron, gid),
                    key_pop = mix_key(seed, rngstream::pick_pop, gid),
                    key_weight = mix_key(seed, rngstream::weight, gid);

                GlobalSynapse* row = rows.data() + row_cursor;
                row_cursor += k_in;
                for (uint32_t k = 0; k < k_in; ++k) {
                    uint64_t src_gid = 0;
                    if (k < m) {
                        size_t pick = in_cat[v].pick(
                            stream_u01(key_voxel, k));
                        uint32_t sv = in_srcs[v][pick];
                        uint64_t n_exc = in_exc[v][pick];
                        if (n_exc == 0)
                            throw ConfigError(
                                "voxel " + std::to_string(sv) +
                                " has no excitatory neurons but is an in-edge source");
                        uint64_t idx = stream_below(
                            key_neuron, static_cast<uint64_t>(k) * 64, n_exc);
                        src_gid = layout.excitatory_gid(sv, idx);
                    } else {
                        // Intra pick; redraw on self-connection.
                        uint32_t attempt = 0;
                        for (;;) {
                            uint64_t word = static_cast<uint64_t>(k) * 64 + attempt;
                            size_t sp = pop_cat[tgt_pop].pick(
                                stream_u01(key_pop, word));
                            const Unit& su = layout.units[unit_from + sp];
                            uint64_t idx = stream_below(key_neuron, word, su.neurons);
                            src_gid = su.gid_base + idx;
                            if (src_gid != gid) break;
                            if (++attempt >= 63)
                                throw ConfigError(
                                    "cannot draw a non-self intra-voxel source "
                                    "(population too small)");
                        }
                    }

                    const Unit& src_unit = layout.unit_of_gid(src_gid);
                    const PopulationSpec& sp = layout.pop_of_unit(src_unit.id);
                    const bool exc = src_unit.excitatory;
                    const int rf = exc ? AMPA : GABAA;
                    const int rs = exc ? NMDA : GABAB;

                    bool want_fast = true, want_slow = true;
                    if (!sp.dual_receptor) {
                        double u = stream_u01(key_weight,
                                              static_cast<uint64_t>(k) * 6 + 4);
                        want_fast = u < sp.split_ratio;
                        want_slow = !want_fast;
                    }
                    auto draw = [&](int rc, uint64_t norm_idx) {
                        double w = sp.weight_mean[rc] +
                                   sp.weight_spread[rc] *
                                       stream_normal(key_weight, norm_idx);
                        return quantize_weight(w);
                    };
                    GlobalSynapse& gs = row[k];
                    gs.src = static_cast<uint32_t>(src_gid);
                    gs.cls = exc ? 0 : 1;
                    gs.wq_fast =
                        want_fast ? draw(rf, static_cast<uint64_t>(k) * 3) : 0;
                    gs.wq_slow =
                        want_slow ? draw(rs, static_cast<uint64_t>(k) * 3 + 1) : 0;
                }
            }
        }
        net.synapse_count += rows.size();
    }
    if (layout.total_neurons > 0xffffffffull)
        throw ConfigError("global neuron ids exceed 32-bit source addressing");
    return net;
}

// --- tables ------------------------------------------------------------------

NetworkTables emit_tables(const NetworkLayout& layout, GlobalNetwork& net,
                          const PartitionMap& partition, uint64_t seed) {
    const uint32_t units = layout.unit_count();
    partition.validate(units);
    const uint16_t workers = partition.worker_count;
    if (workers > 64)
        throw ConfigError("worker counts above 64 are unsupported (mask width)");
    if (net.rows.size() != layout.voxels.size())
        throw SimError("global network / layout mismatch");

    NetworkTables out;
    out.unit_worker = partition.unit_worker;
    out.unit_local_base.assign(units, 0);
    std::vector<uint32_t> worker_fill(workers, 0);
    for (uint32_t u = 0; u < units; ++u) {
        uint16_t w = partition.unit_worker[u];
        out.unit_local_base[u] = worker_fill[w];
        worker_fill[w] += layout.units[u].neurons;
    }

    auto locate = [&](uint64_t gid) -> std::pair<uint16_t, uint32_t> {
        const Unit& u = layout.unit_of_gid(gid);
        return {out.unit_worker[u.id],
                out.unit_local_base[u.id] +
                    static_cast<uint32_t>(gid - u.gid_base)};
    };

    // Destination-worker masks need the global table: bit w of masks[src]
    // is set iff some neuron on worker w lists src in its row.
    std::vector<uint64_t> masks(layout.total_neurons, 0);
    for (uint32_t v = 0; v < layout.voxels.size(); ++v) {
        uint32_t unit_from = layout.voxel_unit_base[v];
        uint32_t unit_to = layout.voxel_unit_base[v + 1];
        uint64_t cursor = 0;
        const auto& rows = net.rows[v];
        for (uint32_t u = unit_from; u < unit_to; ++u) {
            uint16_t w = out.unit_worker[u];
            uint64_t row_words =
                static_cast<uint64_t>(layout.units[u].neurons) *
                layout.voxels[v].k_in;
            for (uint64_t i = 0; i < row_words; ++i)
                masks[rows[cursor + i].src] |= (1ull << w);
            cursor += row_words;
        }
    }

    out.workers.resize(workers);
    for (uint16_t w = 0; w < workers; ++w) {
        out.workers[w].worker = w;
        out.workers[w].worker_count = workers;
        out.workers[w].seed = seed;
        out.workers[w].neurons.reserve(worker_fill[w]);
        out.workers[w].row_base.push_back(0);
    }

    uint64_t init_key = mix_key(seed, rngstream::init_state, 0);
    for (uint32_t u = 0; u < units; ++u) {
        const Unit& unit = layout.units[u];
        const VoxelSpec& vx = layout.voxels[unit.voxel];
        const PopulationSpec& pop = vx.populations[unit.pop];
        WorkerTable& tbl = out.workers[out.unit_worker[u]];

        std::array<std::vector<float>, kReceptors> g;
        for (int r = 0; r < kReceptors; ++r)
            g[r] = sample_conductances(seed, 0, u, r, pop.g_location[r],
                                       pop.g_scale[r], unit.neurons);

        const auto& rows = net.rows[unit.voxel];
        // Row offset of this unit inside its voxel's row block.
        uint64_t unit_row0 = 0;
        for (uint32_t p = layout.voxel_unit_base[unit.voxel]; p < u; ++p)
            unit_row0 += static_cast<uint64_t>(layout.units[p].neurons) * vx.k_in;

        for (uint32_t j = 0; j < unit.neurons; ++j) {
            uint64_t gid = unit.gid_base + j;
            NeuronRecord rec;
            rec.gid = gid;
            rec.voxel = unit.voxel;
            rec.pop = unit.pop;
            rec.excitatory = unit.excitatory ? 1 : 0;
            rec.unit = u;
            rec.row_len = vx.k_in;
            rec.dst_mask = masks[gid];
            const NeuronParams& np = pop.neuron;
            rec.capacitance = static_cast<float>(np.capacitance);
            rec.g_leak = static_cast<float>(np.g_leak);
            rec.e_leak = static_cast<float>(np.e_leak);
            rec.v_threshold = static_cast<float>(np.v_threshold);
            rec.v_reset = static_cast<float>(np.v_reset);
            rec.refractory_steps = np.refractory_steps;
            for (int r = 0; r < kReceptors; ++r) {
                rec.e_rev[r] = static_cast<float>(np.e_rev[r]);
                rec.tau[r] = static_cast<float>(np.tau[r]);
                rec.omega[r] = static_cast<float>(np.omega[r]);
                rec.g[r] = g[r][j];
            }
            rec.ou_mean = static_cast<float>(pop.ou.mean);
            rec.ou_sigma = static_cast<float>(pop.ou.sigma);
            rec.ou_tau = static_cast<float>(pop.ou.tau);
            double u01 = stream_u01(init_key, gid);
            rec.v_init = static_cast<float>(
                np.v_reset + u01 * (np.v_threshold - np.v_reset));
            tbl.neurons.push_back(rec);

            uint64_t row0 = unit_row0 + static_cast<uint64_t>(j) * vx.k_in;
            for (uint32_t k = 0; k < vx.k_in; ++k) {
                const GlobalSynapse& gs = rows[row0 + k];
                auto [sw, sl] = locate(gs.src);
                SynEntry e;
                e.src_local = sl;
                e.src_worker = sw;
                e.cls = gs.cls;
                e.wq_fast = gs.wq_fast;
                e.wq_slow = gs.wq_slow;
                tbl.synapses.push_back(e);
            }
            tbl.row_base.push_back(tbl.synapses.size());
        }
    }
    return out;
}

std::vector<float> sample_conductances(uint64_t seed, uint64_t salt,
                                       uint32_t unit, int receptor,
                                       double location, double scale,
                                       uint32_t count) {
    uint64_t base = mix_key(mix_key(seed, rngstream::conductance, salt), unit,
                            static_cast<uint64_t>(receptor));
    std::vector<float> out(count);
    for (uint32_t i = 0; i < count; ++i)
        out[i] = static_cast<float>(
            std::exp(location + scale * stream_normal(base, i)));
    return out;
}

std::vector<std::vector<uint64_t>> crossing_matrix(const NetworkLayout& layout,
                                                   const GlobalNetwork& net,
                                                   const PartitionMap& partition) {
    const uint16_t workers = partition.worker_count;
    std::vector<std::vector<uint64_t>> m(workers,
                                         std::vector<uint64_t>(workers, 0));
    for (uint32_t v = 0; v < layout.voxels.size(); ++v) {
        uint64_t cursor = 0;
        const auto& rows = net.rows[v];
        for (uint32_t u = layout.voxel_unit_base[v];
             u < layout.voxel_unit_base[v + 1]; ++u) {
            uint16_t dst_w = partition.unit_worker[u];
            uint64_t row_words =
                static_cast<uint64_t>(layout.units[u].neurons) *
                layout.voxels[v].k_in;
            for (uint64_t i = 0; i < row_words; ++i) {
                uint16_t src_w =
                    partition.unit_worker[layout.unit_of_gid(rows[cursor + i].src).id];
                m[src_w][dst_w] += 1;
            }
            cursor += row_words;
        }
    }
    return m;
}

// --- binary files ------------------------------------------------------------

static constexpr uint32_t kTableMagic = 0x42545856;   // "VXTB" little-endian
static constexpr uint32_t kTableVersion = 1;

void save_worker_table(const WorkerTable& t, const std::string& path) {
    std::vector<unsigned char> buf;
    buf.reserve(64 + t.neurons.size() * 136 + t.synapses.size() * 16);
    put_le<uint32_t>(buf, kTableMagic);
    put_le<uint32_t>(buf, kTableVersion);
    put_le<uint16_t>(buf, t.worker);
    put_le<uint16_t>(buf, t.worker_count);
    put_le<uint64_t>(buf, t.seed);
    put_le<uint64_t>(buf, t.neurons.size());
    put_le<uint64_t>(buf, t.synapses.size());
    for (const NeuronRecord& r : t.neurons) {
        put_le<uint64_t>(buf, r.gid);
        put_le<uint32_t>(buf, r.voxel);
        put_le<uint16_t>(buf, r.pop);
        buf.push_back(r.excitatory);
        buf.push_back(0);
        put_le<uint32_t>(buf, r.unit);
        put_le<uint32_t>(buf, r.row_len);
        put_le<uint64_t>(buf, r.dst_mask);
        put_f32(buf, r.capacitance);
        put_f32(buf, r.g_leak);
        put_f32(buf, r.e_leak);
        put_f32(buf, r.v_threshold);
        put_f32(buf, r.v_reset);
        put_le<uint32_t>(buf, r.refractory_steps);
        for (int i = 0; i < kReceptors; ++i) put_f32(buf, r.e_rev[i]);
        for (int i = 0; i < kReceptors; ++i) put_f32(buf, r.tau[i]);
        for (int i = 0; i < kReceptors; ++i) put_f32(buf, r.omega[i]);
        for (int i = 0; i < kReceptors; ++i) put_f32(buf, r.g[i]);
        put_f32(buf, r.ou_mean);
        put_f32(buf, r.ou_sigma);
        put_f32(buf, r.ou_tau);
        put_f32(buf, r.v_init);
    }
    for (const SynEntry& e : t.synapses) {
        put_le<uint32_t>(buf, e.src_local);
        put_le<uint16_t>(buf, e.src_worker);
        buf.push_back(e.cls);
        buf.push_back(0);
        put_le<int32_t>(buf, e.wq_fast);
        put_le<int32_t>(buf, e.wq_slow);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("cannot write table file: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw SimError("write failed: " + path);
}

WorkerTable load_worker_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError("cannot open table file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    size_t off = 0;
    auto need = [&](size_t n) {
        if (off + n > buf.size()) throw SimError("truncated table file: " + path);
    };
    auto u16 = [&] { need(2); uint16_t v = get_le<uint16_t>(buf.data() + off); off += 2; return v; };
    auto u32 = [&] { need(4); uint32_t v = get_le<uint32_t>(buf.data() + off); off += 4; return v; };
    auto i32 = [&] { need(4); int32_t v = get_le<int32_t>(buf.data() + off); off += 4; return v; };
    auto u64 = [&] { need(8); uint64_t v = get_le<uint64_t>(buf.data() + off); off += 8; return v; };
    auto f32 = [&] { need(4); float v = get_f32(buf.data() + off); off += 4; return v; };
    auto u8 = [&] { need(1); return buf[off++]; };

    if (u32() != kTableMagic) throw SimError("not a worker table file: " + path);
    if (u32() != kTableVersion) throw SimError("unsupported table version: " + path);
    WorkerTable t;
    t.worker = u16();
    t.worker_count = u16();
    t.seed = u64();
    uint64_t n_neurons = u64();
    uint64_t n_syn = u64();
    t.neurons.resize(n_neurons);
    t.row_base.reserve(n_neurons + 1);
    t.row_base.push_back(0);
    for (NeuronRecord& r : t.neurons) {
        r.gid = u64();
        r.voxel = u32();
        r.pop = u16();
        r.excitatory = u8();
        (void)u8();
        r.unit = u32();
        r.row_len = u32();
        r.dst_mask = u64();
        r.capacitance = f32();
        r.g_leak = f32();
        r.e_leak = f32();
        r.v_threshold = f32();
        r.v_reset = f32();
        r.refractory_steps = u32();
        for (int i = 0; i < kReceptors; ++i) r.e_rev[i] = f32();
        for (int i = 0; i < kReceptors; ++i) r.tau[i] = f32();
        for (int i = 0; i < kReceptors; ++i) r.omega[i] = f32();
        for (int i = 0; i < kReceptors; ++i) r.g[i] = f32();
        r.ou_mean = f32();
        r.ou_sigma = f32();
        r.ou_tau = f32();
        r.v_init = f32();
        t.row_base.push_back(t.row_base.back() + r.row_len);
    }
    if (t.row_base.back() != n_syn)
        throw SimError("row lengths do not add up to synapse count: " + path);
    t.synapses.resize(n_syn);
    for (SynEntry& e : t.synapses) {
        e.src_local = u32();
        e.src_worker = u16();
        e.cls = u8();
        (void)u8();
        e.wq_fast = i32();
        e.wq_slow = i32();
    }
    if (off != buf.size()) throw SimError("trailing bytes in table file: " + path);
    return t;
}

void save_tables(const NetworkTables& tables, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = kTableVersion;
    manifest["workers"] = tables.workers.size();
    uint64_t neurons = 0, synapses = 0;
    json files = json::array();
    for (const WorkerTable& t : tables.workers) {
        char name[32];
        std::snprintf(name, sizeof name, "worker_%03u.bin", t.worker);
        std::string path = (fs::path(dir) / name).string();
        save_worker_table(t, path);
        json f;
        f["file"] = name;
        f["worker"] = t.worker;
        f["neurons"] = t.neurons.size();
        f["synapses"] = t.synapses.size();
        f["fnv1a"] = hex64(fnv1a_file(path));
        files.push_back(f);
        neurons += t.neurons.size();
        synapses += t.synapses.size();
    }
    manifest["seed"] = tables.workers.empty() ? 0 : tables.workers[0].seed;
    manifest["neurons"] = neurons;
    manifest["synapses"] = synapses;
    manifest["files"] = files;
    manifest["unit_worker"] = tables.unit_worker;
    manifest["unit_local_base"] = tables.unit_local_base;
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw SimError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

NetworkTables load_tables(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw SimError("cannot open manifest in " + dir);
    json manifest = json::parse(in);
    NetworkTables out;
    for (const auto& f : manifest.at("files")) {
        std::string path = (fs::path(dir) / f.at("file").get<std::string>()).string();
        uint64_t want = std::stoull(f.at("fnv1a").get<std::string>(), nullptr, 16);
        uint64_t got = fnv1a_file(path);
        if (want != got)
            throw SimError("table hash mismatch for " + path + ": manifest " +
                           hex64(want) + " vs file " + hex64(got));
        out.workers.push_back(load_worker_table(path));
    }
    out.unit_worker = manifest.at("unit_worker").get<std::vector<uint16_t>>();
    out.unit_local_base =
        manifest.at("unit_local_base").get<std::vector<uint32_t>>();
    std::sort(out.workers.begin(), out.workers.end(),
              [](const WorkerTable& a, const WorkerTable& b) {
                  return a.worker < b.worker;
              });
    for (size_t w = 0; w < out.workers.size(); ++w)
        if (out.workers[w].worker != w ||
            out.workers[w].worker_count != out.workers.size())
            throw SimError("manifest worker set is inconsistent");
    return out;
}

} // namespace voxsim
