#include "voxsim/pipeline.hpp"
#include "voxsim/util.hpp"

#include <cstdlib>
#include <filesystem>

namespace voxsim {

namespace {

constexpr const char* kDefaultMicrocolumn = "configs/microcolumn.json";

void apply_region_overrides(const RegionConfig& rc, VoxelSpec& vs,
                            PopulationSpec& base) {
    if (rc.k_in) vs.k_in = *rc.k_in;
    if (rc.rho) vs.rho = *rc.rho;
    if (rc.ou_mean) base.ou.mean = static_cast<float>(*rc.ou_mean);
    if (rc.ou_sigma) base.ou.sigma = static_cast<float>(*rc.ou_sigma);
    if (rc.ou_tau) base.ou.tau = static_cast<float>(*rc.ou_tau);
    if (rc.g_location) base.g_location = *rc.g_location;
    if (rc.g_scale) base.g_scale = *rc.g_scale;
    if (rc.weight_mean) base.weight_mean = *rc.weight_mean;
    if (rc.weight_spread) base.weight_spread = *rc.weight_spread;
    if (rc.dual_receptor) base.dual_receptor = *rc.dual_receptor;
    if (rc.split_ratio) base.split_ratio = *rc.split_ratio;
}

bool has_cortex(const ConnectomeGraph& g) {
    for (Region r : g.region)
        if (r == Region::cortex) return true;
    return false;
}

MicrocolumnSpec resolve_microcolumn(const RunConfig& cfg, bool needed) {
    if (!cfg.microcolumn_path.empty()) return load_microcolumn(cfg.microcolumn_path);
    if (!needed) return MicrocolumnSpec{};
    if (const char* env = std::getenv("VOXSIM_MICROCOLUMN"))
        return load_microcolumn(env);
    if (std::filesystem::exists(kDefaultMicrocolumn))
        return load_microcolumn(kDefaultMicrocolumn);
    throw ConfigError(
        "network has cortex voxels but no micro-column file was found; set "
        "microcolumn_path or run from a directory containing " +
        std::string(kDefaultMicrocolumn));
}

} // namespace

ConnectomeGraph build_connectome(const RunConfig& cfg) {
    const ConnectomeConfig& c = cfg.connectome;
    ConnectomeGraph g;
    if (c.kind == "ring") {
        g = make_ring(c.voxels, c.neurons_per_voxel);
    } else if (c.kind == "uniform") {
        g = make_uniform(c.voxels, c.neurons_per_voxel, c.sparsity,
                         c.weight_sigma, c.gm_sigma, cfg.seed);
    } else if (c.kind == "two_block") {
        g = make_two_block(c.voxels, c.neurons_per_voxel, c.cross_weight,
                           c.scramble, cfg.seed);
    } else if (c.kind == "single") {
        g = make_single(c.neurons_per_voxel);
    } else if (c.kind == "file") {
        g = load_connectome_file(c.path);
    } else {
        throw ConfigError("unknown connectome kind: " + c.kind);
    }
    if (!c.region.empty()) {
        Region r = region_from_name(c.region);
        for (Region& x : g.region) x = r;
    }
    g.validate();
    return g;
}

NetworkLayout build_layout(const RunConfig& cfg, const ConnectomeGraph& graph,
                           const MicrocolumnSpec& mc) {
    std::vector<VoxelSpec> voxels;
    voxels.reserve(graph.voxel_count);
    for (uint32_t v = 0; v < graph.voxel_count; ++v) {
        VoxelSpec vs;
        vs.id = v;
        vs.region = graph.region[v];
        vs.neurons = graph.neuron_count[v];
        RegionDefaults d = region_defaults(vs.region);
        vs.k_in = d.k_in;
        vs.rho = d.rho;
        PopulationSpec base;
        auto it = cfg.regions.find(region_name(vs.region));
        if (it != cfg.regions.end()) apply_region_overrides(it->second, vs, base);
        vs.populations = vs.region == Region::cortex
                             ? microcolumn_layout(mc, base)
                             : two_population_layout(base);
        voxels.push_back(std::move(vs));
    }
    return NetworkLayout::build(std::move(voxels));
}

BuiltNetwork build_network(const RunConfig& cfg) {
    BuiltNetwork b;
    b.graph = build_connectome(cfg);
    MicrocolumnSpec mc = resolve_microcolumn(cfg, has_cortex(b.graph));
    b.layout = build_layout(cfg, b.graph, mc);
    b.intra = IntraMatrices::defaults(mc);

    GlobalNetwork net = sample_synapses(b.layout, b.graph, b.intra, cfg.seed);
    b.synapse_count = net.synapse_count;

    b.unit_graph = build_unit_graph(b.layout, b.graph, b.intra,
                                    cfg.partition.rate_hz, cfg.dt_ms);
    CapacityModel cap;
    cap.alpha = cfg.partition.alpha;
    cap.beta = cfg.partition.beta;
    cap.mu = cfg.partition.mu;
    cap.gamma = cfg.partition.gamma;
    if (cfg.partition.method == "file")
        b.partition = load_partition(cfg.partition.path, b.layout.unit_count());
    else
        b.partition = make_partition(b.unit_graph, cfg.workers, cap,
                                     cfg.partition.method);
    b.partition.validate(b.layout.unit_count());

    b.crossing = crossing_matrix(b.layout, net, b.partition);
    b.tables = emit_tables(b.layout, net, b.partition, cfg.seed);
    return b;
}

SimOptions sim_options_from(const RunConfig& cfg) {
    SimOptions o;
    o.steps = cfg.steps;
    o.dt_ms = cfg.dt_ms;
    o.scheduler = cfg.scheduler;
    o.transport = cfg.transport;
    o.workers_per_node = cfg.workers_per_node;
    o.recv_timeout_ms = cfg.recv_timeout_ms;
    o.probe_gids = cfg.probe_gids;
    return o;
}

} // namespace voxsim
