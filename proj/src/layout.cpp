#include "voxsim/layout.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace voxsim {

const char* region_name(Region r) {
    switch (r) {
        case Region::cortex: return "cortex";
        case Region::subcortex: return "subcortex";
        case Region::brainstem: return "brainstem";
        case Region::cerebellum: return "cerebellum";
    }
    throw ConfigError("bad region value");
}

Region region_from_name(const std::string& name) {
    for (int i = 0; i < kRegions; ++i) {
        Region r = static_cast<Region>(i);
        if (name == region_name(r)) return r;
    }
    throw ConfigError("unknown region: " + name);
}

RegionDefaults region_defaults(Region r) {
    switch (r) {
        case Region::cortex: return {1000, 2.0 / 7.0};
        case Region::subcortex: return {1000, 6.0 / 25.0};
        case Region::brainstem: return {100, 14.0 / 25.0};
        case Region::cerebellum: return {100, 16.0 / 125.0};
    }
    throw ConfigError("bad region value");
}

void VoxelSpec::validate(uint64_t) const {
    if (neurons == 0) throw ConfigError("voxel with zero neurons");
    if (rho < 0.0 || rho > 1.0) throw ConfigError("rho outside [0, 1]");
    if (populations.empty()) throw ConfigError("voxel with no populations");
    double total = 0.0;
    for (const auto& p : populations) {
        if (p.fraction < 0.0) throw ConfigError("negative population fraction");
        total += p.fraction;
        p.neuron.validate(1.0);
        for (int r = 0; r < kReceptors; ++r) {
            if (p.g_scale[r] < 0.0) throw ConfigError("negative conductance scale");
            if (p.weight_spread[r] < 0.0) throw ConfigError("negative weight spread");
        }
        if (p.split_ratio < 0.0 || p.split_ratio > 1.0)
            throw ConfigError("split_ratio outside [0, 1]");
        if (p.ou.sigma < 0.0 || p.ou.tau <= 0.0)
            throw ConfigError("bad noise parameters");
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("population fractions must sum to 1");
}

// Largest-remainder split of n over fractions; every positive-fraction
// population with n >= #pops gets at least the floor, remainders assigned in
// descending-remainder order (ties toward the lower population index).
static std::vector<uint32_t> split_counts(uint32_t n,
                                          const std::vector<PopulationSpec>& pops) {
    size_t k = pops.size();
    std::vector<uint32_t> counts(k, 0);
    std::vector<std::pair<double, size_t>> rem(k);
    uint32_t assigned = 0;
    for (size_t i = 0; i < k; ++i) {
        double exact = pops[i].fraction * n;
        counts[i] = static_cast<uint32_t>(exact);
        assigned += counts[i];
        rem[i] = {exact - counts[i], i};
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
    });
    for (uint32_t j = 0; assigned < n; ++j) {
        counts[rem[j % k].second] += 1;
        assigned += 1;
    }
    return counts;
}

NetworkLayout NetworkLayout::build(std::vector<VoxelSpec> voxels) {
    if (voxels.empty()) throw ConfigError("layout with zero voxels");
    std::sort(voxels.begin(), voxels.end(),
              [](const VoxelSpec& a, const VoxelSpec& b) { return a.id < b.id; });
    for (size_t i = 0; i < voxels.size(); ++i) {
        if (voxels[i].id != i)
            throw ConfigError("voxel ids must be 0..V-1 without gaps");
    }

    NetworkLayout out;
    out.voxels = std::move(voxels);
    out.voxel_unit_base.reserve(out.voxels.size() + 1);
    uint64_t gid = 0;
    for (const VoxelSpec& v : out.voxels) {
        v.validate(0);
        out.voxel_unit_base.push_back(static_cast<uint32_t>(out.units.size()));
        auto counts = split_counts(v.neurons, v.populations);
        for (size_t p = 0; p < v.populations.size(); ++p) {
            Unit u;
            u.id = static_cast<uint32_t>(out.units.size());
            u.voxel = v.id;
            u.pop = static_cast<uint16_t>(p);
            u.excitatory = v.populations[p].excitatory;
            u.neurons = counts[p];
            u.gid_base = gid;
            gid += counts[p];
            out.units.push_back(u);
        }
    }
    out.voxel_unit_base.push_back(static_cast<uint32_t>(out.units.size()));
    out.total_neurons = gid;
    return out;
}

const Unit& NetworkLayout::unit_of_gid(uint64_t gid) const {
    if (gid >= total_neurons) throw SimError("gid out of range");
    auto it = std::upper_bound(units.begin(), units.end(), gid,
                               [](uint64_t g, const Unit& u) { return g < u.gid_base; });
    // upper_bound gives the first unit starting after gid; step back, then
    // skip over any empty units sharing that gid_base.
    size_t i = static_cast<size_t>(it - units.begin()) - 1;
    while (units[i].neurons == 0) --i;
    return units[i];
}

uint64_t NetworkLayout::excitatory_count(uint32_t voxel) const {
    uint64_t n = 0;
    for (uint32_t u = voxel_unit_base[voxel]; u < voxel_unit_base[voxel + 1]; ++u)
        if (units[u].excitatory) n += units[u].neurons;
    return n;
}

uint64_t NetworkLayout::excitatory_gid(uint32_t voxel, uint64_t index) const {
    for (uint32_t u = voxel_unit_base[voxel]; u < voxel_unit_base[voxel + 1]; ++u) {
        if (!units[u].excitatory) continue;
        if (index < units[u].neurons) return units[u].gid_base + index;
        index -= units[u].neurons;
    }
    throw SimError("excitatory index out of range");
}

std::vector<PopulationSpec> two_population_layout(const PopulationSpec& base) {
    PopulationSpec e = base, i = base;
    e.label = "E";
    e.excitatory = true;
    e.fraction = 0.8;
    i.label = "I";
    i.excitatory = false;
    i.fraction = 0.2;
    return {e, i};
}

std::vector<PopulationSpec> microcolumn_layout(const MicrocolumnSpec& mc,
                                               const PopulationSpec& base) {
    size_t k = mc.labels.size();
    if (k == 0 || mc.fractions.size() != k || mc.excitatory.size() != k ||
        mc.layer.size() != k)
        throw ConfigError("micro-column spec with inconsistent sizes");
    if (mc.probability.size() != k)
        throw ConfigError("micro-column probability matrix must be square");
    for (const auto& row : mc.probability)
        if (row.size() != k)
            throw ConfigError("micro-column probability matrix must be square");

    std::vector<PopulationSpec> pops(k, base);
    for (size_t p = 0; p < k; ++p) {
        pops[p].label = mc.labels[p];
        pops[p].fraction = mc.fractions[p];
        pops[p].excitatory = mc.excitatory[p];
        pops[p].layer = mc.layer[p];
    }
    return pops;
}

IntraMatrices IntraMatrices::defaults(const MicrocolumnSpec& cortex) {
    IntraMatrices m;
    m.matrix[static_cast<int>(Region::cortex)] = cortex.probability;
    std::vector<std::vector<double>> flat(2, std::vector<double>(2, 1.0));
    for (Region r : {Region::subcortex, Region::brainstem, Region::cerebellum})
        m.matrix[static_cast<int>(r)] = flat;
    return m;
}

} // namespace voxsim
