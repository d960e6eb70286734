#include "voxsim/connectome.hpp"
#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace voxsim {

void ConnectomeGraph::validate() const {
    if (voxel_count == 0) throw ConfigError("connectome with zero voxels");
    if (region.size() != voxel_count || neuron_count.size() != voxel_count ||
        gm_weight.size() != voxel_count)
        throw ConfigError("connectome metadata size mismatch");
    for (uint32_t v = 0; v < voxel_count; ++v) {
        if (neuron_count[v] == 0)
            throw ConfigError("voxel " + std::to_string(v) + " has zero neurons");
        if (!(gm_weight[v] >= 0.0))
            throw ConfigError("negative gm weight on voxel " + std::to_string(v));
    }
    const ConnectomeEdge* prev = nullptr;
    for (const auto& e : edges) {
        if (e.src >= voxel_count || e.dst >= voxel_count)
            throw ConfigError("edge endpoint out of range");
        if (e.src == e.dst)
            throw ConfigError("self-loop edge on voxel " + std::to_string(e.src));
        if (!(e.weight >= 0.0)) throw ConfigError("negative edge weight");
        if (prev) {
            if (e.dst < prev->dst || (e.dst == prev->dst && e.src <= prev->src))
                throw ConfigError("edges must be sorted by (dst, src), unique");
        }
        prev = &e;
    }
}

std::vector<size_t> ConnectomeGraph::in_base() const {
    std::vector<size_t> base(voxel_count + 1, 0);
    for (const auto& e : edges) base[e.dst + 1] += 1;
    for (uint32_t v = 0; v < voxel_count; ++v) base[v + 1] += base[v];
    return base;
}

uint64_t ConnectomeGraph::total_neurons() const {
    uint64_t n = 0;
    for (uint32_t c : neuron_count) n += c;
    return n;
}

static void sort_edges(ConnectomeGraph& g) {
    std::sort(g.edges.begin(), g.edges.end(),
              [](const ConnectomeEdge& a, const ConnectomeEdge& b) {
                  return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
              });
}

static ConnectomeGraph blank_graph(uint32_t voxels, uint32_t neurons_per_voxel) {
    ConnectomeGraph g;
    g.voxel_count = voxels;
    g.region.assign(voxels, Region::subcortex);
    g.neuron_count.assign(voxels, neurons_per_voxel);
    g.gm_weight.assign(voxels, 1.0);
    return g;
}

ConnectomeGraph make_ring(uint32_t voxels, uint32_t neurons_per_voxel) {
    if (voxels < 3) throw ConfigError("ring connectome needs >= 3 voxels");
    ConnectomeGraph g = blank_graph(voxels, neurons_per_voxel);
    for (uint32_t v = 0; v < voxels; ++v) {
        uint32_t left = (v + voxels - 1) % voxels;
        uint32_t right = (v + 1) % voxels;
        g.edges.push_back({v, left, 1.0});
        g.edges.push_back({v, right, 1.0});
    }
    sort_edges(g);
    g.validate();
    return g;
}

ConnectomeGraph make_uniform(uint32_t voxels, uint32_t neurons_per_voxel,
                             double sparsity, double weight_sigma,
                             double gm_sigma, uint64_t seed) {
    if (voxels < 2) throw ConfigError("uniform connectome needs >= 2 voxels");
    if (sparsity < 0.0 || sparsity > 1.0)
        throw ConfigError("sparsity outside [0, 1]");
    ConnectomeGraph g = blank_graph(voxels, neurons_per_voxel);
    uint64_t present = mix_key(seed, rngstream::connectome, 0);
    uint64_t weight = mix_key(seed, rngstream::connectome, 3);
    uint64_t k = 0;
    for (uint32_t s = 0; s < voxels; ++s) {
        for (uint32_t d = 0; d < voxels; ++d, ++k) {
            if (s == d) continue;
            if (stream_u01(present, k) >= sparsity) continue;
            double w = std::exp(weight_sigma * stream_normal(weight, k));
            g.edges.push_back({s, d, w});
        }
    }
    // A voxel the sparsity draw left without any in-edge gets its ring
    // neighbour, so rho > 0 stays satisfiable on every voxel.
    std::vector<bool> has_in(voxels, false);
    for (const auto& e : g.edges) has_in[e.dst] = true;
    for (uint32_t v = 0; v < voxels; ++v)
        if (!has_in[v]) g.edges.push_back({(v + 1) % voxels, v, 1.0});
    if (gm_sigma > 0.0) {
        uint64_t gbase = mix_key(seed, rngstream::connectome, 1);
        for (uint32_t v = 0; v < voxels; ++v)
            g.gm_weight[v] = std::exp(gm_sigma * stream_normal(gbase, v));
    }
    sort_edges(g);
    g.validate();
    return g;
}

ConnectomeGraph make_two_block(uint32_t voxels, uint32_t neurons_per_voxel,
                               double cross_weight, bool scramble,
                               uint64_t seed) {
    if (voxels < 4) throw ConfigError("two_block connectome needs >= 4 voxels");
    if (cross_weight < 0.0) throw ConfigError("negative cross_weight");
    // Deterministic permutation: identity, or a keyed Fisher-Yates shuffle.
    std::vector<uint32_t> perm(voxels);
    std::iota(perm.begin(), perm.end(), 0u);
    if (scramble) {
        uint64_t base = mix_key(seed, rngstream::connectome, 2);
        for (uint32_t i = voxels - 1; i > 0; --i)
            std::swap(perm[i], perm[stream_below(base, i, i + 1)]);
    }
    ConnectomeGraph g = blank_graph(voxels, neurons_per_voxel);
    uint32_t half = voxels / 2;
    auto block = [&](uint32_t v) { return v < half ? 0u : 1u; };
    for (uint32_t s = 0; s < voxels; ++s) {
        for (uint32_t d = 0; d < voxels; ++d) {
            if (s == d) continue;
            double w = block(s) == block(d) ? 1.0 : cross_weight;
            if (w > 0.0) g.edges.push_back({perm[s], perm[d], w});
        }
    }
    sort_edges(g);
    g.validate();
    return g;
}

ConnectomeGraph make_single(uint32_t neurons_per_voxel) {
    ConnectomeGraph g = blank_graph(1, neurons_per_voxel);
    g.validate();
    return g;
}

ConnectomeGraph load_connectome(std::istream& in) {
    auto next_line = [&](std::string& line) {
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto end = line.find_last_not_of(" \t\r");
            if (end == std::string::npos) continue;
            line.erase(end + 1);
            return true;
        }
        return false;
    };

    std::string line, word;
    if (!next_line(line)) throw ConfigError("connectome file: empty");
    std::istringstream head(line);
    uint32_t voxels = 0;
    head >> word >> voxels;
    if (word != "voxels" || head.fail() || voxels == 0)
        throw ConfigError("connectome file: expected 'voxels N'");

    ConnectomeGraph g = blank_graph(voxels, 0);
    std::vector<bool> seen(voxels, false);
    for (uint32_t i = 0; i < voxels; ++i) {
        if (!next_line(line))
            throw ConfigError("connectome file: missing voxel lines");
        std::istringstream row(line);
        uint32_t id = 0, n = 0;
        std::string region;
        double gm = 1.0;
        row >> id >> region >> n;
        if (row.fail()) throw ConfigError("connectome file: bad voxel line: " + line);
        row >> gm;   // optional
        if (id >= voxels || seen[id])
            throw ConfigError("connectome file: bad or duplicate voxel id");
        seen[id] = true;
        g.region[id] = region_from_name(region);
        g.neuron_count[id] = n;
        g.gm_weight[id] = gm;
    }
    if (!next_line(line)) throw ConfigError("connectome file: missing 'edges M'");
    std::istringstream ehead(line);
    uint64_t edge_count = 0;
    ehead >> word >> edge_count;
    if (word != "edges" || ehead.fail())
        throw ConfigError("connectome file: expected 'edges M'");
    for (uint64_t i = 0; i < edge_count; ++i) {
        if (!next_line(line))
            throw ConfigError("connectome file: missing edge lines");
        std::istringstream row(line);
        ConnectomeEdge e;
        row >> e.src >> e.dst >> e.weight;
        if (row.fail()) throw ConfigError("connectome file: bad edge line: " + line);
        g.edges.push_back(e);
    }
    sort_edges(g);
    g.validate();
    return g;
}

ConnectomeGraph load_connectome_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open connectome file: " + path);
    return load_connectome(in);
}

void save_connectome(const ConnectomeGraph& g, std::ostream& out) {
    // max_digits10: weights and gm factors must survive a text round trip
    // bit-exactly, or regenerating from a saved connectome rewires the net.
    out.precision(17);
    out << "voxels " << g.voxel_count << "\n";
    for (uint32_t v = 0; v < g.voxel_count; ++v)
        out << v << " " << region_name(g.region[v]) << " " << g.neuron_count[v]
            << " " << g.gm_weight[v] << "\n";
    out << "edges " << g.edges.size() << "\n";
    for (const auto& e : g.edges)
        out << e.src << " " << e.dst << " " << e.weight << "\n";
}

void save_connectome_file(const ConnectomeGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError("cannot write connectome file: " + path);
    save_connectome(g, out);
    if (!out) throw SimError("write failed: " + path);
}

} // namespace voxsim
