#pragma once

#include <cstdint>
#include <vector>

namespace voxsim {

// Balloon-Windkessel hemodynamics, one instance per voxel. Drive z is the
// voxel's population activity (mean firing rate normalized by a baseline).
struct HemoParams {
    double kappa = 0.65;     // signal decay, 1/s
    double gamma = 0.41;     // flow-dependent elimination, 1/s
    double tau = 0.98;       // hemodynamic transit time, s
    double alpha = 0.32;     // Grubb's exponent
    double e0 = 0.34;        // resting oxygen extraction
    double v0 = 0.02;        // resting venous volume fraction

    double k1() const { return 7.0 * e0; }
    double k2() const { return 2.0; }
    double k3() const { return 2.0 * e0 - 0.2; }

    void validate() const;
};

struct HemoState {
    double s = 0.0;   // vasodilatory signal
    double f = 1.0;   // inflow
    double v = 1.0;   // venous volume
    double q = 1.0;   // deoxyhemoglobin content
};

// One forward-Euler step of length dt_s with drive z (dimensionless).
void step_hemodynamics(HemoState& h, double z, double dt_s, const HemoParams& p);

// BOLD signal for the current state.
double bold_signal(const HemoState& h, const HemoParams& p);

// Convenience: run a drive series through the model, sampling BOLD every
// `sample_every` steps (after the step). Returns the sampled series.
std::vector<double> bold_from_drive(const std::vector<double>& z,
                                    double dt_s, uint32_t sample_every,
                                    const HemoParams& p, HemoState* state = nullptr);

} // namespace voxsim
