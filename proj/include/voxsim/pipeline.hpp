#pragma once

#include <string>

#include "voxsim/config.hpp"
#include "voxsim/engine.hpp"
#include "voxsim/netgen.hpp"

namespace voxsim {

// Everything generate-side produced from one config + seed: the connectome,
// the deterministic layout, the partition and the per-worker tables.
struct BuiltNetwork {
    ConnectomeGraph graph;
    NetworkLayout layout;
    IntraMatrices intra;
    UnitGraph unit_graph;
    PartitionMap partition;
    NetworkTables tables;
    uint64_t synapse_count = 0;
    // Per-worker-pair synapse counts [src worker][dst worker].
    std::vector<std::vector<uint64_t>> crossing;
};

ConnectomeGraph build_connectome(const RunConfig& cfg);
NetworkLayout build_layout(const RunConfig& cfg, const ConnectomeGraph& graph,
                           const MicrocolumnSpec& mc);

// Runs the full generation pipeline. The sampled wiring depends only on
// (config, seed), never on the worker count or the partition method.
BuiltNetwork build_network(const RunConfig& cfg);

SimOptions sim_options_from(const RunConfig& cfg);

} // namespace voxsim
