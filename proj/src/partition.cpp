#include "voxsim/partition.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace voxsim {

// Capacity byte model: per-neuron dynamic state (V, currents, four gating
// values and four pending accumulators), per-synapse table entry, and the
// per-neuron spike-buffer share (id slot + destination mask).
static constexpr uint64_t kStateBytesPerNeuron = 48;
static constexpr uint64_t kEntryBytes = 16;
static constexpr uint64_t kBufferBytesPerNeuron = 12;

double CapacityModel::load(const UnitGraph& g, uint32_t unit) const {
    return alpha * static_cast<double>(g.state_bytes[unit]) +
           beta * static_cast<double>(g.table_bytes[unit]) +
           mu * static_cast<double>(g.buffer_bytes[unit]);
}

void PartitionMap::validate(uint32_t unit_count) const {
    if (worker_count == 0) throw ConfigError("partition with zero workers");
    if (worker_count > kMaxWorkers)
        throw ConfigError("worker count exceeds the routing mask limit of " +
                          std::to_string(kMaxWorkers));
    if (unit_worker.size() != unit_count)
        throw ConfigError("partition size does not match unit count");
    std::vector<uint32_t> fill(worker_count, 0);
    for (uint16_t w : unit_worker) {
        if (w >= worker_count) throw ConfigError("partition worker id out of range");
        fill[w] += 1;
    }
    for (uint16_t w = 0; w < worker_count; ++w)
        if (fill[w] == 0)
            throw ConfigError("worker " + std::to_string(w) +
                              " has no units assigned");
}

UnitGraph build_unit_graph(const NetworkLayout& layout,
                           const ConnectomeGraph& graph,
                           const IntraMatrices& intra,
                           double rate_hz, double dt_ms) {
    if (rate_hz < 0.0) throw ConfigError("negative traffic rate");
    const uint32_t units = layout.unit_count();
    UnitGraph g;
    g.unit_count = units;
    g.neurons.resize(units);
    g.state_bytes.resize(units);
    g.table_bytes.resize(units);
    g.buffer_bytes.resize(units);
    for (uint32_t u = 0; u < units; ++u) {
        const Unit& unit = layout.units[u];
        uint64_t n = unit.neurons;
        g.neurons[u] = n;
        g.state_bytes[u] = n * kStateBytesPerNeuron;
        g.table_bytes[u] = n * layout.voxels[unit.voxel].k_in * kEntryBytes;
        g.buffer_bytes[u] = n * kBufferBytesPerNeuron;
    }
    g.traffic.assign(units, std::vector<int64_t>(units, 0));

    auto in_base = graph.in_base();
    const double dt_s = dt_ms / 1000.0;
    // Expected number of distinct values after `picks` uniform draws over n.
    auto distinct = [](double n, double picks) {
        if (n <= 0.0 || picks <= 0.0) return 0.0;
        return n * (1.0 - std::pow(1.0 - 1.0 / n, picks));
    };

    for (uint32_t v = 0; v < graph.voxel_count; ++v) {
        const VoxelSpec& vx = layout.voxels[v];
        const uint32_t m = static_cast<uint32_t>(std::ceil(vx.rho * vx.k_in - 1e-9));
        double in_total = 0.0;
        for (size_t e = in_base[v]; e < in_base[v + 1]; ++e)
            in_total += graph.edges[e].weight;
        uint64_t voxel_neurons = 0;
        for (uint32_t u = layout.voxel_unit_base[v];
             u < layout.voxel_unit_base[v + 1]; ++u)
            voxel_neurons += layout.units[u].neurons;

        // Inter-voxel picks land on the source voxel's excitatory units in
        // proportion to their size.
        if (m > 0 && in_total > 0.0) {
            for (size_t e = in_base[v]; e < in_base[v + 1]; ++e) {
                uint32_t sv = graph.edges[e].src;
                double p_vox = graph.edges[e].weight / in_total;
                double exc = static_cast<double>(layout.excitatory_count(sv));
                if (exc <= 0.0) continue;
                double picks_vox =
                    static_cast<double>(voxel_neurons) * m * p_vox;
                for (uint32_t su = layout.voxel_unit_base[sv];
                     su < layout.voxel_unit_base[sv + 1]; ++su) {
                    if (!layout.units[su].excitatory) continue;
                    double n_u = layout.units[su].neurons;
                    double picks_u = picks_vox * (n_u / exc);
                    double sources = distinct(n_u, picks_u);
                    double bytes = rate_hz * dt_s * sources * 4.0;
                    for (uint32_t du = layout.voxel_unit_base[v];
                         du < layout.voxel_unit_base[v + 1]; ++du) {
                        // Apportion target rows by unit size.
                        double share =
                            static_cast<double>(layout.units[du].neurons) /
                            static_cast<double>(voxel_neurons);
                        g.traffic[su][du] += std::llround(bytes * share * 1e6);
                    }
                }
            }
        }

        // Intra-voxel picks via the population matrix.
        const auto& pmat = intra.of(vx.region);
        uint32_t base_u = layout.voxel_unit_base[v];
        size_t pops = vx.populations.size();
        for (size_t tp = 0; tp < pops; ++tp) {
            double n_t = layout.units[base_u + tp].neurons;
            if (n_t <= 0.0) continue;
            double wsum = 0.0;
            for (size_t sp = 0; sp < pops; ++sp)
                wsum += pmat[tp][sp] *
                        static_cast<double>(layout.units[base_u + sp].neurons);
            if (wsum <= 0.0) continue;
            double picks_per_neuron = static_cast<double>(vx.k_in - m);
            for (size_t sp = 0; sp < pops; ++sp) {
                double n_s = layout.units[base_u + sp].neurons;
                double q = pmat[tp][sp] * n_s / wsum;
                double picks = n_t * picks_per_neuron * q;
                double sources = distinct(n_s, picks);
                double bytes = rate_hz * dt_s * sources * 4.0;
                g.traffic[base_u + sp][base_u + tp] += std::llround(bytes * 1e6);
            }
        }
    }
    return g;
}

int64_t partition_objective(const UnitGraph& g, const PartitionMap& p) {
    std::vector<int64_t> recv(p.worker_count, 0);
    for (uint32_t i = 0; i < g.unit_count; ++i)
        for (uint32_t j = 0; j < g.unit_count; ++j) {
            if (i == j) continue;
            if (p.unit_worker[i] != p.unit_worker[j])
                recv[p.unit_worker[j]] += g.traffic[i][j];
        }
    return recv.empty() ? 0 : *std::max_element(recv.begin(), recv.end());
}

namespace {

struct Placement {
    std::vector<int> worker;          // -1 = unplaced
    std::vector<int64_t> recv;        // objective term per worker
    std::vector<double> load;         // capacity load per worker
    std::vector<uint32_t> count;      // units per worker
};

} // namespace

PartitionMap partition_greedy(const UnitGraph& g, uint16_t workers,
                              const CapacityModel& cap) {
    if (workers == 0) throw ConfigError("zero workers");
    if (g.unit_count < workers)
        throw ConfigError("fewer units than workers");
    std::vector<uint32_t> order(g.unit_count);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        double la = cap.load(g, a), lb = cap.load(g, b);
        if (la != lb) return la > lb;
        return a < b;
    });

    Placement st;
    st.worker.assign(g.unit_count, -1);
    st.recv.assign(workers, 0);
    st.load.assign(workers, 0.0);
    st.count.assign(workers, 0);

    uint32_t remaining = g.unit_count;
    for (uint32_t u : order) {
        uint32_t empty = 0;
        for (uint16_t w = 0; w < workers; ++w)
            if (st.count[w] == 0) empty += 1;
        bool must_fill = empty >= remaining;

        int best_w = -1;
        int64_t best_f = 0;
        double best_load = 0.0;
        for (uint16_t w = 0; w < workers; ++w) {
            if (must_fill && st.count[w] != 0) continue;
            double new_load = st.load[w] + cap.load(g, u);
            if (cap.gamma > 0.0 && new_load > cap.gamma) continue;
            // Candidate objective if u joins w.
            int64_t recv_w = st.recv[w];
            std::vector<int64_t> delta(workers, 0);
            for (uint32_t i = 0; i < g.unit_count; ++i) {
                int wi = st.worker[i];
                if (wi < 0 || i == u) continue;
                if (wi != w) {
                    recv_w += g.traffic[i][u];
                    delta[wi] += g.traffic[u][i];
                }
            }
            int64_t f = recv_w;
            for (uint16_t x = 0; x < workers; ++x)
                if (x != w) f = std::max(f, st.recv[x] + delta[x]);
            if (best_w < 0 || f < best_f ||
                (f == best_f && new_load < best_load)) {
                best_w = w;
                best_f = f;
                best_load = new_load;
            }
        }
        if (best_w < 0)
            throw ConfigError("capacity budget cannot fit unit " +
                              std::to_string(u));
        uint16_t w = static_cast<uint16_t>(best_w);
        for (uint32_t i = 0; i < g.unit_count; ++i) {
            int wi = st.worker[i];
            if (wi < 0 || i == u) continue;
            if (wi != w) {
                st.recv[w] += g.traffic[i][u];
                st.recv[wi] += g.traffic[u][i];
            }
        }
        st.worker[u] = w;
        st.load[w] += cap.load(g, u);
        st.count[w] += 1;
        remaining -= 1;
    }

    PartitionMap p;
    p.worker_count = workers;
    p.unit_worker.resize(g.unit_count);
    for (uint32_t u = 0; u < g.unit_count; ++u)
        p.unit_worker[u] = static_cast<uint16_t>(st.worker[u]);
    p.validate(g.unit_count);
    return p;
}

PartitionMap partition_exact(const UnitGraph& g, uint16_t workers,
                             const CapacityModel& cap) {
    if (workers == 0) throw ConfigError("zero workers");
    if (g.unit_count < workers) throw ConfigError("fewer units than workers");
    if (g.unit_count > 12)
        throw ConfigError("exact partitioning is limited to 12 units");

    std::vector<double> unit_load(g.unit_count);
    for (uint32_t u = 0; u < g.unit_count; ++u) unit_load[u] = cap.load(g, u);

    std::vector<uint16_t> assign(g.unit_count, 0), best;
    std::vector<int64_t> recv(workers, 0);
    std::vector<double> load(workers, 0.0);
    std::vector<uint32_t> count(workers, 0);
    int64_t best_f = std::numeric_limits<int64_t>::max();

    // Depth-first over restricted growth strings; recv[] only grows with
    // depth, so a partial max >= best_f prunes.
    auto dfs = [&](auto&& self, uint32_t u, uint16_t used) -> void {
        if (u == g.unit_count) {
            if (used != workers) return;
            int64_t f = *std::max_element(recv.begin(), recv.end());
            if (f < best_f) {
                best_f = f;
                best = assign;
            }
            return;
        }
        // Not enough units left to occupy every worker?
        if (static_cast<uint32_t>(workers - used) > g.unit_count - u) return;
        uint16_t limit = std::min<uint16_t>(workers, used + 1);
        for (uint16_t w = 0; w < limit; ++w) {
            double new_load = load[w] + unit_load[u];
            if (cap.gamma > 0.0 && new_load > cap.gamma) continue;
            std::vector<int64_t> undo(workers, 0);
            for (uint32_t i = 0; i < u; ++i) {
                if (assign[i] != w) {
                    undo[w] += g.traffic[i][u];
                    undo[assign[i]] += g.traffic[u][i];
                }
            }
            int64_t partial = 0;
            for (uint16_t x = 0; x < workers; ++x) {
                recv[x] += undo[x];
                partial = std::max(partial, recv[x]);
            }
            if (partial < best_f) {
                assign[u] = w;
                load[w] = new_load;
                count[w] += 1;
                self(self, u + 1, std::max<uint16_t>(used, w + 1));
                count[w] -= 1;
                load[w] = new_load - unit_load[u];
            }
            for (uint16_t x = 0; x < workers; ++x) recv[x] -= undo[x];
        }
    };
    dfs(dfs, 0, 0);
    if (best.empty())
        throw ConfigError("no feasible partition under the capacity budget");

    PartitionMap p;
    p.worker_count = workers;
    p.unit_worker = best;
    p.validate(g.unit_count);
    return p;
}

PartitionMap partition_sequential(const UnitGraph& g, uint16_t workers,
                                  const CapacityModel& cap) {
    if (workers == 0) throw ConfigError("zero workers");
    if (g.unit_count < workers) throw ConfigError("fewer units than workers");
    double total = 0.0;
    for (uint32_t u = 0; u < g.unit_count; ++u) total += cap.load(g, u);
    double share = cap.gamma > 0.0 ? cap.gamma : total / workers;

    PartitionMap p;
    p.worker_count = workers;
    p.unit_worker.resize(g.unit_count);
    uint16_t w = 0;
    double cum = 0.0;
    for (uint32_t u = 0; u < g.unit_count; ++u) {
        double l = cap.load(g, u);
        bool over = cap.gamma > 0.0 ? (cum + l > share)
                                    : (cum + l > share * (w + 1) + 1e-9);
        uint32_t left_after = g.unit_count - u - 1;
        if (w + 1 < workers && over) {
            w += 1;
            if (cap.gamma > 0.0) cum = 0.0;
        }
        // Leave enough units for the remaining workers.
        if (static_cast<uint32_t>(workers - 1 - w) > left_after)
            throw ConfigError("sequential partition leaves a worker empty");
        p.unit_worker[u] = w;
        cum += l;
        if (cap.gamma > 0.0 && cum > share)
            throw ConfigError("capacity budget cannot fit unit " +
                              std::to_string(u));
    }
    p.validate(g.unit_count);
    return p;
}

PartitionMap make_partition(const UnitGraph& g, uint16_t workers,
                            const CapacityModel& cap, const std::string& method) {
    if (method == "greedy") return partition_greedy(g, workers, cap);
    if (method == "exact") return partition_exact(g, workers, cap);
    if (method == "sequential") return partition_sequential(g, workers, cap);
    throw ConfigError("unknown partition method: " + method);
}

void save_partition(const PartitionMap& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError("cannot write partition file: " + path);
    out << "workers " << p.worker_count << "\n";
    out << "units " << p.unit_worker.size() << "\n";
    for (size_t u = 0; u < p.unit_worker.size(); ++u)
        out << u << " " << p.unit_worker[u] << "\n";
    if (!out) throw SimError("write failed: " + path);
}

PartitionMap load_partition(const std::string& path, uint32_t unit_count) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open partition file: " + path);
    std::string word;
    PartitionMap p;
    uint32_t units = 0;
    in >> word >> p.worker_count;
    if (word != "workers" || in.fail())
        throw ConfigError("partition file: expected 'workers N'");
    in >> word >> units;
    if (word != "units" || in.fail() || units != unit_count)
        throw ConfigError("partition file: unit count mismatch");
    p.unit_worker.resize(units);
    for (uint32_t i = 0; i < units; ++i) {
        uint32_t u = 0, w = 0;
        in >> u >> w;
        if (in.fail() || u != i)
            throw ConfigError("partition file: bad unit line");
        p.unit_worker[i] = static_cast<uint16_t>(w);
    }
    p.validate(unit_count);
    return p;
}

} // namespace voxsim
