#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "voxsim/pipeline.hpp"
#include "voxsim/stats.hpp"

namespace voxsim {

// One experiment grid row: the configuration axis values plus the timing
// report of the run.
struct ExperimentRow {
    uint16_t workers = 0;
    uint64_t neurons = 0;
    uint64_t synapses = 0;
    double rate_hz = 0;                // measured network mean over the window
    std::string label;                 // partition method / topology tag
    TimingReport report;
};

struct ExperimentResult {
    std::string name;
    std::vector<ExperimentRow> rows;
};

// Fixed per-worker size, worker counts swept: voxel count scales with N.
ExperimentResult weak_scaling(const RunConfig& base,
                              const std::vector<uint16_t>& worker_counts);

// Fixed total size, worker counts swept.
ExperimentResult strong_scaling(const RunConfig& base,
                                const std::vector<uint16_t>& worker_counts);

// Fixed network, OU drive swept to move the firing rate; reports traffic and
// timing against measured rate.
ExperimentResult rate_sweep(const RunConfig& base,
                            const std::vector<double>& ou_means);

// Same network, partition methods compared on the traffic objective and the
// measured per-step communication stats.
ExperimentResult partition_compare(const RunConfig& base,
                                   const std::vector<std::string>& methods);

void write_experiment_csv(const ExperimentResult& r, std::ostream& out);

} // namespace voxsim
