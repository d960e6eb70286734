#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxsim/connectome.hpp"
#include "voxsim/layout.hpp"

namespace voxsim {

// Unit-level traffic/size graph fed to the partitioners. Traffic weights are
// integer micro-bytes per step so objective comparisons are exact.
struct UnitGraph {
    uint32_t unit_count = 0;
    std::vector<uint64_t> neurons;                    // per unit
    std::vector<uint64_t> state_bytes;                // s1 per unit
    std::vector<uint64_t> table_bytes;                // s2 per unit
    std::vector<uint64_t> buffer_bytes;               // s3 per unit
    // Dense traffic matrix, micro-bytes/step, [src][dst]; diagonal ignored.
    std::vector<std::vector<int64_t>> traffic;
};

struct CapacityModel {
    double alpha = 1.0;   // weight on state bytes
    double beta = 1.0;    // weight on table bytes
    double mu = 1.0;      // weight on buffer bytes
    double gamma = 0.0;   // per-worker budget; 0 = unlimited

    double load(const UnitGraph& g, uint32_t unit) const;
};

// Destination routing is a 64-bit worker mask, so worker counts above 64
// are rejected everywhere.
inline constexpr int kMaxWorkers = 64;

struct PartitionMap {
    uint16_t worker_count = 1;
    std::vector<uint16_t> unit_worker;                // per unit

    void validate(uint32_t unit_count) const;         // every worker nonempty
};

// Expected bytes/step flowing unit -> unit under a firing-rate estimate:
// rate_hz * dt * (#source neurons with >= 1 target in dst) * 4 bytes. The
// distinct-source count uses the closed-form expectation of the sampler.
UnitGraph build_unit_graph(const NetworkLayout& layout,
                           const ConnectomeGraph& graph,
                           const IntraMatrices& intra,
                           double rate_hz, double dt_ms);

// Objective: F(P) = max over workers j of sum of traffic into j from units
// placed elsewhere (diagonal excluded).
int64_t partition_objective(const UnitGraph& g, const PartitionMap& p);

// Greedy: units in descending capacity-load order; each placed on the worker
// minimizing F, ties -> lower load, then lower worker id.
PartitionMap partition_greedy(const UnitGraph& g, uint16_t workers,
                              const CapacityModel& cap);

// Exhaustive search over canonical assignments (restricted growth strings),
// feasible for <= 12 units; returns the lexicographically smallest optimum.
PartitionMap partition_exact(const UnitGraph& g, uint16_t workers,
                             const CapacityModel& cap);

// First-fit in unit id order: fill worker 0 to its capacity share, then 1, ...
PartitionMap partition_sequential(const UnitGraph& g, uint16_t workers,
                                  const CapacityModel& cap);

PartitionMap make_partition(const UnitGraph& g, uint16_t workers,
                            const CapacityModel& cap, const std::string& method);

// Text format: "workers N" / "units M" / one "unit worker" line per unit.
void save_partition(const PartitionMap& p, const std::string& path);
PartitionMap load_partition(const std::string& path, uint32_t unit_count);

} // namespace voxsim
