#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxsim/engine.hpp"
#include "voxsim/hemo.hpp"

namespace voxsim {

// A (unit, receptor) pair whose log-space conductance location parameter is
// estimated. Scale parameters stay fixed at the prior.
struct AssimTarget {
    uint32_t unit = 0;
    int receptor = 0;
};

struct AssimOptions {
    int members = 8;
    uint32_t windows = 50;
    uint32_t window_steps = 800;       // observation cadence in sim steps
    double dt_ms = 1.0;
    double obs_noise_sd = 2e-4;        // observation error std, BOLD units
    double inflation = 1.05;           // multiplicative ensemble inflation
    double min_spread = 1e-3;          // log-space spread floor
    double prior_sd = 0.25;            // initial ensemble spread in log space
    double baseline_hz = 5.0;          // rate normalization for hemo drive
    int divergence_patience = 5;       // windows of worsening innovation
    double divergence_factor = 10.0;   // vs the first window's innovation
    uint64_t seed = 1;
    HemoParams hemo;
    std::vector<AssimTarget> targets;
};

struct AssimWindowStat {
    uint32_t window = 0;
    double innovation_rms = 0;         // obs - forecast mean, RMS over voxels
    double pearson_r = 0;              // forecast vs obs across voxels
    double mean_spread = 0;            // ensemble spread, log space
    std::vector<double> target_mean;   // posterior mean location per target
};

struct AssimResult {
    std::vector<AssimWindowStat> windows;
    std::vector<double> final_mean;    // per target
    std::vector<double> final_spread;  // per target
    bool diverged = false;
    uint32_t diverged_window = 0;
};

// Per-member surrogate: owns a SimInstance plus hemodynamic state per voxel;
// exposes one observation window: apply member parameters, advance, return
// per-voxel BOLD samples.
class EnsembleMember {
public:
    EnsembleMember(const NetworkTables& tables, const NetworkLayout& layout,
                   SimOptions sim, const AssimOptions& opts, int member_index);

    // params: log-space location per target. Resamples the targeted
    // conductances (keyed by assim seed, member, window) and advances one
    // window; returns BOLD per voxel at the window end.
    std::vector<double> run_window(const std::vector<double>& params,
                                   uint32_t window);

private:
    const NetworkLayout& layout_;
    const AssimOptions& opts_;
    SimInstance sim_;
    std::vector<HemoState> hemo_;
    std::vector<double> scale_;        // fixed per-target log-space scale
    int member_ = 0;
};

// Serial deterministic ensemble square-root filter over the target vector,
// processing scalar observations sequentially. Zero innovation leaves the
// ensemble mean unchanged exactly.
struct EnsrfUpdate {
    // ensemble: [member][param]; forecasts: [member][obs]; obs: [obs].
    static void apply(std::vector<std::vector<double>>& ensemble,
                      const std::vector<std::vector<double>>& forecasts,
                      const std::vector<double>& obs, double obs_var,
                      double inflation, double min_spread);
};

// Full loop: build members from the surrogate tables, assimilate the observed
// per-(window, voxel) BOLD matrix, return the trajectory.
AssimResult assimilate(const NetworkTables& tables, const NetworkLayout& layout,
                       const std::vector<std::vector<double>>& observed,
                       const AssimOptions& opts);

// Forward model used by twin experiments and the report command: run the
// network, return per-(window, voxel) BOLD. With true_params set, the target
// conductances are resampled each window from those locations (the "truth"
// run of a twin experiment, keyed separately from every ensemble member);
// otherwise the table conductances are kept.
std::vector<std::vector<double>> run_forward_bold(
    const NetworkTables& tables, const NetworkLayout& layout,
    const AssimOptions& opts, uint32_t windows,
    const std::vector<double>* true_params = nullptr);

void write_assim_csv(const AssimResult& r, std::ostream& out);

} // namespace voxsim
