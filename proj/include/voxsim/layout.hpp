#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxsim/model.hpp"

namespace voxsim {

enum class Region : int { cortex = 0, subcortex = 1, brainstem = 2, cerebellum = 3 };
inline constexpr int kRegions = 4;
const char* region_name(Region r);
Region region_from_name(const std::string& name);

struct PopulationSpec {
    std::string label;          // "E", "I", "L2/3E", ...
    bool excitatory = true;
    double fraction = 0.0;      // of the voxel's neurons
    int layer = -1;             // micro-column layer tag; -1 outside cortex
    NeuronParams neuron;        // base parameters; per-neuron g sampled below
    OuParams ou;
    // Log-normal hyper-parameters for per-neuron conductance scales g_u.
    // Medians 1.0 / 0.15 / 8.0 / 0.5 nS; the strong GABA_A median keeps the
    // default recurrent network inhibition-dominated (noise-driven regime).
    std::array<double, kReceptors> g_location{0.0, -1.8971199848858813, 2.0794415416798357, -0.6931471805599453};
    std::array<double, kReceptors> g_scale{0.2, 0.2, 0.2, 0.2};
    // Source-side synapse weight draw, per receptor: mean + spread * N(0,1),
    // clamped at 0 and quantized.
    std::array<double, kReceptors> weight_mean{1.0, 1.0, 1.0, 1.0};
    std::array<double, kReceptors> weight_spread{0.2, 0.2, 0.2, 0.2};
    // Receptor composition of outgoing synapses: "dual" gives every synapse
    // both its fast and slow component; "split" draws one of the two with
    // P(fast) = split_ratio.
    bool dual_receptor = true;
    double split_ratio = 0.5;
};

struct VoxelSpec {
    uint32_t id = 0;
    Region region = Region::subcortex;
    uint32_t neurons = 0;        // n_v
    uint32_t k_in = 0;           // K_v, in-degree per neuron
    double rho = 0.0;            // inter-voxel input fraction
    std::vector<PopulationSpec> populations;

    void validate(uint64_t total_neurons) const;
};

// One population instance: the atomic unit for partitioning, statistics and
// conductance hyper-parameters.
struct Unit {
    uint32_t id = 0;
    uint32_t voxel = 0;
    uint16_t pop = 0;            // index into the voxel's population list
    bool excitatory = true;
    uint32_t neurons = 0;
    uint64_t gid_base = 0;       // global ids [gid_base, gid_base + neurons)
};

// Deterministic global indexing of a voxel list: voxels in id order,
// populations in listed order, neurons consecutive.
struct NetworkLayout {
    std::vector<VoxelSpec> voxels;
    std::vector<Unit> units;
    std::vector<uint32_t> voxel_unit_base;   // first unit index per voxel
    uint64_t total_neurons = 0;

    static NetworkLayout build(std::vector<VoxelSpec> voxels);

    const Unit& unit_of_gid(uint64_t gid) const;   // binary search
    uint32_t unit_count() const { return static_cast<uint32_t>(units.size()); }

    // Excitatory neurons of a voxel, as (gid_base, count) spans in unit order.
    uint64_t excitatory_count(uint32_t voxel) const;
    uint64_t excitatory_gid(uint32_t voxel, uint64_t index) const;

    const PopulationSpec& pop_of_unit(uint32_t unit) const {
        const Unit& u = units[unit];
        return voxels[u.voxel].populations[u.pop];
    }
};

// Region-level defaults for in-degree and inter-voxel fraction
// (overridable per region in config).
struct RegionDefaults {
    uint32_t k_in;
    double rho;
};
RegionDefaults region_defaults(Region r);

// The default non-cortex layout: 80% excitatory / 20% inhibitory.
std::vector<PopulationSpec> two_population_layout(const PopulationSpec& base);

// Micro-column layout for cortex voxels: paired (E, I) populations per layer.
// Fractions and the population-to-population probability matrix come from a
// config file; see configs/microcolumn.json for the shipped default.
struct MicrocolumnSpec {
    std::vector<std::string> labels;
    std::vector<double> fractions;
    std::vector<bool> excitatory;
    std::vector<int> layer;
    std::vector<std::vector<double>> probability;   // [target pop][source pop]
};

std::vector<PopulationSpec> microcolumn_layout(const MicrocolumnSpec& mc,
                                               const PopulationSpec& base);

// Intra-voxel population-to-population connection matrices, one per region,
// indexed [target pop][source pop]. Source choice for an intra pick is a
// categorical over matrix[tgt][src] * neurons(src).
struct IntraMatrices {
    std::array<std::vector<std::vector<double>>, kRegions> matrix;

    // Cortex row comes from the micro-column spec; the two-population regions
    // use all-ones (choice proportional to population size).
    static IntraMatrices defaults(const MicrocolumnSpec& cortex);

    const std::vector<std::vector<double>>& of(Region r) const {
        return matrix[static_cast<int>(r)];
    }
};

} // namespace voxsim
