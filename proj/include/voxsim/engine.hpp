#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "voxsim/netgen.hpp"
#include "voxsim/stats.hpp"
#include "voxsim/transport.hpp"

namespace voxsim {

// Constant current (pA) added to every neuron of a voxel over [from, to).
struct Injection {
    uint32_t from_step = 0;
    uint32_t to_step = 0;
    uint32_t voxel = 0;
    float current_pa = 0.0f;
};

// Force a neuron to spike at a given step (test hook; replaces the threshold
// decision for that neuron at that step).
struct ForcedSpike {
    uint32_t step = 0;
    uint64_t gid = 0;
};

struct SimOptions {
    uint32_t steps = 0;
    double dt_ms = 1.0;
    // "threads": one compute + sender + receiver thread per worker.
    // "loopback": serial phase sweeps on the calling thread, same transport
    // and accounting code paths.
    std::string scheduler = "threads";
    std::string transport = "queue";
    uint16_t workers_per_node = 4;
    int recv_timeout_ms = 30000;       // deadlock guard on the step barrier
    bool record_raster = true;
    bool record_timings = true;
    std::vector<uint64_t> probe_gids;  // membrane/current traces
    std::vector<Injection> injections;
    std::vector<ForcedSpike> forced_spikes;
};

struct ProbeTrace {
    uint64_t gid = 0;
    std::vector<float> v;              // per step, after the update
    // Synaptic current computed at that step (consumed by the next step's
    // membrane update); a spike delivered at step t first shows here at t+1.
    std::vector<float> i_syn;
};

struct RunResult {
    std::vector<RasterEvent> raster;       // sorted (step, worker, local)
    std::vector<StepTimings> timings;      // sorted (step, worker)
    std::vector<ProbeTrace> probes;
    RateSeries rates;
    FlopCounters flops;
    uint64_t total_spikes = 0;
    uint32_t steps_done = 0;
};

// A loaded multi-worker simulation whose state persists across advance()
// calls; absolute step numbers key the noise streams, so a run advanced in
// pieces is bit-identical to one advanced in a single call.
class SimInstance {
public:
    SimInstance(const NetworkTables& tables, const NetworkLayout& layout,
                SimOptions options);
    ~SimInstance();
    SimInstance(const SimInstance&) = delete;
    SimInstance& operator=(const SimInstance&) = delete;

    RunResult advance(uint32_t steps);
    uint32_t current_step() const;

    // Overwrite per-neuron conductance scales of one unit (assimilation).
    // `values` holds unit_neuron_count entries for one receptor.
    void set_conductances(uint32_t unit, int receptor,
                          const std::vector<float>& values);
    // Read back a worker's full membrane state (oracle comparisons).
    std::vector<float> membrane_snapshot(uint16_t worker) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Load tables + run in one call.
RunResult run_simulation(const NetworkTables& tables, const NetworkLayout& layout,
                         const SimOptions& options);

} // namespace voxsim
