#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxsim/layout.hpp"

namespace voxsim {

struct ConnectomeEdge {
    uint32_t src = 0;
    uint32_t dst = 0;
    double weight = 0.0;         // nonnegative; relative pull on dst's inter picks
};

// Voxel-level directed graph plus per-voxel metadata. Edges are stored sorted
// by (dst, src); weights into one voxel are used as a categorical over source
// voxels, so only their ratios matter.
struct ConnectomeGraph {
    uint32_t voxel_count = 0;
    std::vector<ConnectomeEdge> edges;            // sorted by (dst, src), unique
    std::vector<Region> region;                   // per voxel
    std::vector<uint32_t> neuron_count;           // per voxel
    std::vector<double> gm_weight;                // per voxel, >= 0

    // Rejects: src/dst out of range, negative weights, self-loops, duplicate
    // (src, dst) pairs, zero voxels.
    void validate() const;

    // In-edge span of a voxel: [in_base[v], in_base[v+1]) into `edges`.
    std::vector<size_t> in_base() const;

    uint64_t total_neurons() const;
};

// --- generators -----------------------------------------------------------

// `voxels` voxels in a ring; each has out-edges to its two neighbours with
// equal weight. Regions all subcortex unless remapped later.
ConnectomeGraph make_ring(uint32_t voxels, uint32_t neurons_per_voxel);

// Erdos-Renyi style: each ordered pair (u, v), u != v, carries an edge with
// probability `sparsity`; weights are log-normal with spread `weight_sigma`;
// per-voxel gm weights log-normal with spread `gm_sigma`. Deterministic in
// `seed`. Guarantees every voxel at least one in-edge (falls back to the
// ring neighbour when the draw leaves a voxel isolated).
ConnectomeGraph make_uniform(uint32_t voxels, uint32_t neurons_per_voxel,
                             double sparsity, double weight_sigma,
                             double gm_sigma, uint64_t seed);

// Two dense blocks with weak cross-links: block-local edges carry weight 1,
// cross-block edges weight `cross_weight`. With `scramble` set, voxel ids are
// deterministically permuted so block membership is not contiguous in id
// order (consecutive-id partitions then cut through both blocks).
ConnectomeGraph make_two_block(uint32_t voxels, uint32_t neurons_per_voxel,
                               double cross_weight, bool scramble,
                               uint64_t seed);

// One voxel, no edges (intra-voxel wiring only; requires rho == 0).
ConnectomeGraph make_single(uint32_t neurons_per_voxel);

// --- text format -----------------------------------------------------------
//
//   voxels N
//   <id> <region> <neuron_count> [gm_weight]     (N lines)
//   edges M
//   <src> <dst> <weight>                         (M lines)
//
// '#' starts a comment; blank lines are skipped.
ConnectomeGraph load_connectome(std::istream& in);
ConnectomeGraph load_connectome_file(const std::string& path);
void save_connectome(const ConnectomeGraph& g, std::ostream& out);
void save_connectome_file(const ConnectomeGraph& g, const std::string& path);

} // namespace voxsim
