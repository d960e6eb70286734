#include "voxsim/model.hpp"

#include <cmath>

namespace voxsim {

void NeuronParams::validate(float dt_ms) const {
    if (!(capacitance > 0))
        throw ConfigError("neuron params: capacitance must be > 0");
    if (g_leak < 0)
        throw ConfigError("neuron params: leak conductance must be >= 0");
    if (!(v_reset < v_threshold))
        throw ConfigError("neuron params: V_reset must be below V_th");
    for (int u = 0; u < kReceptors; ++u) {
        if (!(tau[u] > 0))
            throw ConfigError("neuron params: receptor tau must be > 0");
        if (!(dt_ms < tau[u]))
            throw ConfigError("neuron params: dt must be below every receptor tau (explicit Euler)");
        if (g[u] < 0 || omega[u] < 0)
            throw ConfigError("neuron params: receptor conductance and jump weights must be >= 0");
    }
    if (e_rev[AMPA] <= v_threshold || e_rev[NMDA] <= v_threshold)
        throw ConfigError("neuron params: excitatory reversals must lie above V_th");
    if (e_rev[GABAA] >= e_leak || e_rev[GABAB] >= e_leak)
        throw ConfigError("neuron params: inhibitory reversals must lie below E_L");
}

void step_gating(NeuronState& state, const NeuronParams& params, float dt) {
    for (int u = 0; u < kReceptors; ++u) {
        if (!(dt < params.tau[u]))
            throw ConfigError("step_gating: dt >= tau makes explicit Euler unstable");
        state.gating[u] = gating_kernel(state.gating[u], dt, params.tau[u], params.omega[u],
                                        state.pending[u]);
        state.pending[u] = 0.0f;
    }
}

float synaptic_current(const NeuronState& state, const NeuronParams& params) {
    return current_kernel(state.v, state.gating, params.g, params.e_rev);
}

bool step_membrane(NeuronState& state, const NeuronParams& params, float i_syn,
                   float i_ou, float dt) {
    if (state.refractory_left > 0) {
        --state.refractory_left;
        state.v = params.v_reset;
        return false;
    }
    const float dt_over_c = dt / params.capacitance;
    state.v = membrane_kernel(state.v, dt_over_c, params.g_leak, params.e_leak, i_syn, i_ou);
    if (!std::isfinite(state.v))
        throw SimError("membrane potential diverged");
    if (state.v >= params.v_threshold) {
        state.v = params.v_reset;
        state.refractory_left = params.refractory_steps;
        return true;
    }
    return false;
}

void step_ou(OuProcess& proc, uint64_t step, float dt) {
    const float xi = proc.params.sigma > 0
                         ? static_cast<float>(stream_normal(proc.stream, step))
                         : 0.0f;
    proc.current = ou_kernel(proc.current, dt, proc.params, xi);
}

} // namespace voxsim
