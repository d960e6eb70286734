#include "voxsim/hemo.hpp"
#include "voxsim/util.hpp"

#include <cmath>

namespace voxsim {

void HemoParams::validate() const {
    if (!(tau > 0)) throw ConfigError("hemodynamics: tau must be > 0");
    if (!(alpha > 0) || alpha > 1)
        throw ConfigError("hemodynamics: alpha must be in (0, 1]");
    if (!(e0 > 0) || e0 >= 1)
        throw ConfigError("hemodynamics: E0 must be in (0, 1)");
    if (!(v0 > 0)) throw ConfigError("hemodynamics: V0 must be > 0");
    if (kappa < 0 || gamma < 0)
        throw ConfigError("hemodynamics: decay rates must be >= 0");
}

void step_hemodynamics(HemoState& h, double z, double dt_s, const HemoParams& p) {
    // Forward Euler on the four-state balloon model. Flow and volume stay
    // positive for the step sizes used here; clamp guards the pow calls.
    const double f = std::max(h.f, 1e-9);
    const double v = std::max(h.v, 1e-9);
    const double extraction = 1.0 - std::pow(1.0 - p.e0, 1.0 / f);
    const double v_outflow = std::pow(v, 1.0 / p.alpha);

    const double ds = z - p.kappa * h.s - p.gamma * (f - 1.0);
    const double df = h.s;
    const double dv = (f - v_outflow) / p.tau;
    const double dq = (f * extraction / p.e0 - v_outflow * h.q / v) / p.tau;

    h.s += dt_s * ds;
    h.f += dt_s * df;
    h.v += dt_s * dv;
    h.q += dt_s * dq;
    if (!std::isfinite(h.s) || !std::isfinite(h.f) || !std::isfinite(h.v) ||
        !std::isfinite(h.q))
        throw SimError("hemodynamic state diverged");
}

double bold_signal(const HemoState& h, const HemoParams& p) {
    const double v = std::max(h.v, 1e-9);
    return p.v0 * (p.k1() * (1.0 - h.q) + p.k2() * (1.0 - h.q / v) +
                   p.k3() * (1.0 - v));
}

std::vector<double> bold_from_drive(const std::vector<double>& z, double dt_s,
                                    uint32_t sample_every, const HemoParams& p,
                                    HemoState* state) {
    if (sample_every == 0)
        throw ConfigError("hemodynamics: sample_every must be >= 1");
    p.validate();
    HemoState local;
    HemoState& h = state ? *state : local;
    std::vector<double> out;
    for (size_t t = 0; t < z.size(); ++t) {
        step_hemodynamics(h, z[t], dt_s, p);
        if ((t + 1) % sample_every == 0) out.push_back(bold_signal(h, p));
    }
    return out;
}

} // namespace voxsim
