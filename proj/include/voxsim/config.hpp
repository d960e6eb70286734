#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxsim/connectome.hpp"
#include "voxsim/layout.hpp"
#include "voxsim/partition.hpp"

namespace voxsim {

// Connectome source selection.
struct ConnectomeConfig {
    std::string kind = "ring";          // ring|uniform|two_block|single|file
    uint32_t voxels = 4;
    uint32_t neurons_per_voxel = 100;
    double sparsity = 0.0072;           // uniform
    double weight_sigma = 0.5;          // uniform
    double gm_sigma = 0.0;              // uniform
    double cross_weight = 0.01;         // two_block
    bool scramble = false;              // two_block
    std::string path;                   // file
    // Region override: map every voxel to this region (empty = generator
    // default, subcortex).
    std::string region;
};

struct PartitionConfig {
    std::string method = "greedy";      // greedy|exact|sequential|file
    std::string path;                   // method == file
    double alpha = 1.0, beta = 1.0, mu = 1.0, gamma = 0.0;
    double rate_hz = 7.0;               // traffic estimate
};

// Per-region overrides of K, rho and population parameters. Anything not set
// falls back to region defaults.
struct RegionConfig {
    std::optional<uint32_t> k_in;
    std::optional<double> rho;
    std::optional<double> ou_mean, ou_sigma, ou_tau;
    std::optional<std::array<double, kReceptors>> g_location;
    std::optional<std::array<double, kReceptors>> g_scale;
    std::optional<std::array<double, kReceptors>> weight_mean;
    std::optional<std::array<double, kReceptors>> weight_spread;
    std::optional<bool> dual_receptor;
    std::optional<double> split_ratio;
};

struct RunConfig {
    uint64_t seed = 1;
    double dt_ms = 1.0;
    uint32_t steps = 1000;
    uint16_t workers = 1;
    uint16_t workers_per_node = 4;
    std::string scheduler = "threads";
    std::string transport = "queue";
    uint32_t stats_window = 800;
    int recv_timeout_ms = 30000;
    ConnectomeConfig connectome;
    PartitionConfig partition;
    std::map<std::string, RegionConfig> regions;   // keyed by region name
    std::string microcolumn_path;                  // default configs/microcolumn.json
    std::vector<uint64_t> probe_gids;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);
std::string dump_config(const RunConfig& c);       // round-trips via parse

MicrocolumnSpec load_microcolumn(const std::string& path);

} // namespace voxsim
