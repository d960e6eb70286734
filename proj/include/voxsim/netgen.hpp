#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxsim/connectome.hpp"
#include "voxsim/layout.hpp"
#include "voxsim/partition.hpp"

namespace voxsim {

// One in-synapse before partition assignment: source is a global neuron id.
#pragma pack(push, 1)
struct GlobalSynapse {
    uint32_t src = 0;            // global neuron id (fits: desk-scale < 2^32)
    uint8_t cls = 0;             // 0 = excitatory source, 1 = inhibitory
    int32_t wq_fast = 0;         // quantized weight, AMPA or GABA_A
    int32_t wq_slow = 0;         // quantized weight, NMDA or GABA_B
};
#pragma pack(pop)
static_assert(sizeof(GlobalSynapse) == 13);

// One in-synapse in a worker's table: source named by (worker, local id).
#pragma pack(push, 1)
struct SynEntry {
    uint32_t src_local = 0;
    uint16_t src_worker = 0;
    uint8_t cls = 0;
    uint8_t pad = 0;
    int32_t wq_fast = 0;
    int32_t wq_slow = 0;
};
#pragma pack(pop)
static_assert(sizeof(SynEntry) == 16);

// Per-neuron record in a worker table. Locals are ordered by (unit id,
// index within unit); rows in the synapse block follow the same order.
struct NeuronRecord {
    uint64_t gid = 0;
    uint32_t voxel = 0;
    uint16_t pop = 0;
    uint8_t excitatory = 1;
    uint32_t unit = 0;
    uint32_t row_len = 0;                       // in-degree (K of its voxel)
    uint64_t dst_mask = 0;                      // bit w: has >=1 target on worker w
    float capacitance = 0, g_leak = 0, e_leak = 0, v_threshold = 0, v_reset = 0;
    uint32_t refractory_steps = 0;
    std::array<float, kReceptors> e_rev{}, tau{}, omega{}, g{};
    float ou_mean = 0, ou_sigma = 0, ou_tau = 0;
    float v_init = 0;
};

struct WorkerTable {
    uint16_t worker = 0;
    uint16_t worker_count = 1;
    uint64_t seed = 0;
    std::vector<NeuronRecord> neurons;          // local id order
    std::vector<SynEntry> synapses;             // row-major, rows per neuron
    std::vector<uint64_t> row_base;             // neurons.size()+1 prefix sums

    uint64_t synapse_count() const { return synapses.size(); }
};

struct NetworkTables {
    std::vector<WorkerTable> workers;
    // gid -> (worker, local) resolver data, unit-granular.
    std::vector<uint16_t> unit_worker;          // per unit
    std::vector<uint32_t> unit_local_base;      // per unit, on its worker
};

// The sampled global network, organized per voxel for memory locality.
struct GlobalNetwork {
    std::vector<std::vector<GlobalSynapse>> rows;   // per voxel: neuron-major
    uint64_t synapse_count = 0;
};

// Draws every in-row: ceil(rho_v * K_v) inter-voxel picks (source voxel by
// in-edge weight, then uniform over its excitatory neurons), remainder
// intra-voxel via the region's population matrix weighted by population size.
// Self-connections are redrawn; multiple edges are allowed. Deterministic in
// (seed, gid, slot) only — independent of voxel order and partitioning.
GlobalNetwork sample_synapses(const NetworkLayout& layout,
                              const ConnectomeGraph& graph,
                              const IntraMatrices& intra,
                              uint64_t seed);

// Rewrites global sources to (worker, local) addressing, samples per-neuron
// conductances and initial state, computes destination-worker masks.
NetworkTables emit_tables(const NetworkLayout& layout, GlobalNetwork& net,
                          const PartitionMap& partition, uint64_t seed);

// Draw per-neuron conductance scales for one (unit, receptor) from a
// log-normal with the given location/scale. Keyed by (seed, salt, unit,
// receptor) with the neuron index as counter, so a prefix of the values is
// stable when the population grows. salt 0 is the generation draw;
// assimilation redraws pass a nonzero salt.
std::vector<float> sample_conductances(uint64_t seed, uint64_t salt,
                                       uint32_t unit, int receptor,
                                       double location, double scale,
                                       uint32_t count);

// Per-worker-pair crossing synapse counts, for wiring statistics.
std::vector<std::vector<uint64_t>> crossing_matrix(const NetworkLayout& layout,
                                                   const GlobalNetwork& net,
                                                   const PartitionMap& partition);

// --- binary table files ----------------------------------------------------

void save_worker_table(const WorkerTable& t, const std::string& path);
WorkerTable load_worker_table(const std::string& path);

// manifest.json: seed, counts, per-worker file names + FNV-1a hashes.
void save_tables(const NetworkTables& tables, const std::string& dir);
NetworkTables load_tables(const std::string& dir);

} // namespace voxsim
