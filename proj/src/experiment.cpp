#include "voxsim/experiment.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace voxsim {

namespace {

ExperimentRow run_one(const RunConfig& cfg, std::string label) {
    BuiltNetwork net = build_network(cfg);
    SimOptions opts = sim_options_from(cfg);
    opts.record_raster = false;   // rates are enough for the grids
    SimInstance sim(net.tables, net.layout, opts);
    RunResult run = sim.advance(cfg.steps);

    ExperimentRow row;
    row.workers = net.tables.workers.empty()
                      ? cfg.workers
                      : static_cast<uint16_t>(net.tables.workers.size());
    row.neurons = net.layout.total_neurons;
    row.synapses = net.synapse_count;
    uint32_t window = std::min(cfg.stats_window, run.rates.steps);
    row.rate_hz = run.rates.network_mean_hz(run.rates.steps - window);
    row.label = std::move(label);
    row.report = aggregate_timings(run.timings, row.workers, cfg.stats_window,
                                   cfg.workers_per_node, run.flops);
    VOXSIM_INFO("experiment row: workers=%u neurons=%llu rate=%.2f Hz",
                unsigned(row.workers),
                static_cast<unsigned long long>(row.neurons), row.rate_hz);
    return row;
}

} // namespace

ExperimentResult weak_scaling(const RunConfig& base,
                              const std::vector<uint16_t>& worker_counts) {
    if (worker_counts.empty()) throw ConfigError("empty worker grid");
    ExperimentResult res;
    res.name = "weak_scaling";
    for (uint16_t n : worker_counts) {
        if (n == 0) throw ConfigError("worker count must be >= 1");
        RunConfig cfg = base;
        cfg.workers = n;
        // Per-worker share stays fixed: the voxel count scales with the
        // worker count.
        cfg.connectome.voxels = base.connectome.voxels * n;
        res.rows.push_back(run_one(cfg, "x" + std::to_string(n)));
    }
    return res;
}

ExperimentResult strong_scaling(const RunConfig& base,
                                const std::vector<uint16_t>& worker_counts) {
    if (worker_counts.empty()) throw ConfigError("empty worker grid");
    ExperimentResult res;
    res.name = "strong_scaling";
    for (uint16_t n : worker_counts) {
        if (n == 0) throw ConfigError("worker count must be >= 1");
        RunConfig cfg = base;
        cfg.workers = n;
        res.rows.push_back(run_one(cfg, "x" + std::to_string(n)));
    }
    return res;
}

ExperimentResult rate_sweep(const RunConfig& base,
                            const std::vector<double>& ou_means) {
    if (ou_means.empty()) throw ConfigError("empty OU mean grid");
    ExperimentResult res;
    res.name = "rate_sweep";
    for (double mean : ou_means) {
        RunConfig cfg = base;
        for (int r = 0; r < kRegions; ++r)
            cfg.regions[region_name(static_cast<Region>(r))].ou_mean = mean;
        std::ostringstream label;
        label << "ou" << mean;
        res.rows.push_back(run_one(cfg, label.str()));
    }
    return res;
}

ExperimentResult partition_compare(const RunConfig& base,
                                   const std::vector<std::string>& methods) {
    if (methods.empty()) throw ConfigError("empty method list");
    ExperimentResult res;
    res.name = "partition_compare";
    for (const std::string& m : methods) {
        RunConfig cfg = base;
        cfg.partition.method = m;
        res.rows.push_back(run_one(cfg, m));
    }
    return res;
}

void write_experiment_csv(const ExperimentResult& r, std::ostream& out) {
    out << "name,label,workers,neurons,synapses,rate_hz,t_sim,t_com,t_send,"
           "t_rec,that_sim,that_com,t_send_intra,t_send_inter,t_rec_intra,"
           "t_rec_inter,t_max,t_std,bytes_intra,bytes_inter,flops_per_sec,"
           "steps_per_sec\n";
    for (const ExperimentRow& row : r.rows) {
        const TimingReport& t = row.report;
        out << r.name << ',' << row.label << ',' << row.workers << ','
            << row.neurons << ',' << row.synapses << ',' << row.rate_hz << ','
            << t.t_sim << ',' << t.t_com << ',' << t.t_send << ',' << t.t_rec
            << ',' << t.that_sim << ',' << t.that_com << ',' << t.t_send_intra
            << ',' << t.t_send_inter << ',' << t.t_rec_intra << ','
            << t.t_rec_inter << ',' << t.t_max << ',' << t.t_std << ','
            << t.bytes_intra << ',' << t.bytes_inter << ',' << t.flops_per_sec
            << ',' << t.steps_per_sec << "\n";
    }
}

} // namespace voxsim
