#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

namespace voxsim {

// Receptor channels. Order is fixed; tables, configs and stats all index by it.
enum Receptor : int { AMPA = 0, NMDA = 1, GABAA = 2, GABAB = 3 };
inline constexpr int kReceptors = 4;
inline constexpr const char* kReceptorNames[kReceptors] = {"ampa", "nmda", "gabaa", "gabab"};

// Synapse weights are quantized to this grid at generation time so spike
// contributions can be accumulated exactly in int64 (order-independent;
// see engine). 2^-16 keeps relative quantization error ~1e-5.
inline constexpr double kWeightQuantum = 1.0 / 65536.0;
inline constexpr int32_t quantize_weight(double w) {
    if (w < 0) w = 0;
    return static_cast<int32_t>(std::lround(w * 65536.0));
}
inline float dequantize_weight(int64_t q) {
    // int64 -> double is exact below 2^53; a single rounding to float.
    return static_cast<float>(static_cast<double>(q) * kWeightQuantum);
}

struct NeuronParams {
    float capacitance = 250.0f;   // C [pF]
    float g_leak = 25.0f;         // g_L [nS]
    float e_leak = -65.0f;        // E_L [mV]
    float v_threshold = -50.0f;   // V_th [mV]
    float v_reset = -65.0f;       // V_reset [mV]
    uint32_t refractory_steps = 2;                           // T_ref / dt
    std::array<float, kReceptors> e_rev{0.0f, 0.0f, -70.0f, -70.0f};   // E_u [mV]
    std::array<float, kReceptors> tau{4.0f, 100.0f, 10.0f, 200.0f};    // tau_u [ms]
    std::array<float, kReceptors> omega{0.5f, 0.05f, 0.5f, 0.05f};     // jump weights
    std::array<float, kReceptors> g{1.0f, 0.15f, 4.0f, 0.5f};          // per-neuron scales [nS]

    // Throws ConfigError on violated invariants; dt needed to check tau bounds.
    void validate(float dt_ms) const;
};

struct NeuronState {
    float v = -65.0f;                                 // membrane potential [mV]
    std::array<float, kReceptors> gating{};           // j_u, fraction of open channels
    std::array<float, kReceptors> pending{};          // weighted spikes waiting for the next gating step
    uint32_t refractory_left = 0;                     // steps of reset hold remaining
};

struct OuParams {
    float mean = 225.0f;          // mu [pA]
    float sigma = 120.0f;         // volatility [pA]
    float tau = 10.0f;            // correlation time [ms]
};

struct OuProcess {
    OuParams params;
    float current = 0.0f;         // I_ou [pA]
    uint64_t stream = 0;          // per-neuron noise stream base
};

// --- update kernels -------------------------------------------------------
// Single definition shared by the scalar ops below and the engine's array
// loops, so a one-neuron engine run is bit-identical to a scalar loop.

inline float gating_kernel(float j, float dt, float tau, float omega, float pending) {
    return j * (1.0f - dt / tau) + omega * pending;
}

inline float current_kernel(float v, const std::array<float, kReceptors>& gating,
                            const std::array<float, kReceptors>& g,
                            const std::array<float, kReceptors>& e_rev) {
    // I_syn = -sum_u g_u j_u (V - E_u): open excitatory channels depolarize.
    float i = 0.0f;
    for (int u = 0; u < kReceptors; ++u)
        i += g[u] * gating[u] * (e_rev[u] - v);
    return i;
}

inline float membrane_kernel(float v, float dt_over_c, float g_leak, float e_leak,
                             float i_syn, float i_ou) {
    return v + dt_over_c * (g_leak * (e_leak - v) + i_syn + i_ou);
}

inline float ou_kernel(float i, float dt, const OuParams& p, float xi) {
    return i + (dt / p.tau) * (p.mean - i) + p.sigma * std::sqrt(2.0f * dt / p.tau) * xi;
}

// --- scalar operations ----------------------------------------------------

// j_u <- j_u (1 - dt/tau_u) + omega_u * pending_u; pending cleared.
void step_gating(NeuronState& state, const NeuronParams& params, float dt);

float synaptic_current(const NeuronState& state, const NeuronParams& params);

// Forward-Euler membrane update with threshold/reset/refractory handling.
// Returns true if the neuron fired this step. Throws SimError if V leaves
// the finite range (caller adds neuron id / step context).
bool step_membrane(NeuronState& state, const NeuronParams& params, float i_syn,
                   float i_ou, float dt);

// One OU step; the normal variate is word `step` of the process stream, so
// identical (stream, step) always reproduces identical noise.
void step_ou(OuProcess& proc, uint64_t step, float dt);

// FLOP counts per update, additions + multiplications in the kernels above.
inline constexpr int64_t kFlopsMembrane = 6;             // per neuron
inline constexpr int64_t kFlopsGatingDecay = 3 * kReceptors;  // per neuron
inline constexpr int64_t kFlopsSynCurrent = 4 * kReceptors;   // per neuron

} // namespace voxsim
