// voxsim: command-line front end. Subcommands cover the full pipeline:
// generate tables, inspect partitions, simulate, run experiment grids,
// assimilate BOLD observations, aggregate reports, and cross-check runs
// against the single-worker reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "voxsim/assim.hpp"
#include "voxsim/config.hpp"
#include "voxsim/engine.hpp"
#include "voxsim/experiment.hpp"
#include "voxsim/pipeline.hpp"
#include "voxsim/stats.hpp"
#include "voxsim/util.hpp"

namespace fs = std::filesystem;
using namespace voxsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSim = 3;
constexpr int kExitMismatch = 4;

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<uint16_t> workers;
    std::optional<std::string> transport;
    std::optional<std::string> scheduler;
    std::optional<uint32_t> steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration");
    cmd->add_option("--seed", f.seed, "override the config seed");
    cmd->add_option("--out", f.out, "output directory (or file where noted)");
    cmd->add_option("--workers", f.workers, "override the worker count");
    cmd->add_option("--transport", f.transport, "override the transport");
    cmd->add_option("--scheduler", f.scheduler, "override the scheduler");
    cmd->add_option("--steps", f.steps, "override the step count");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg = f.config ? load_config(*f.config) : RunConfig{};
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) cfg.workers = *f.workers;
    if (f.transport) cfg.transport = *f.transport;
    if (f.scheduler) cfg.scheduler = *f.scheduler;
    if (f.steps) cfg.steps = *f.steps;
    // Round-trip so every run sees exactly what dump_config records.
    return parse_config(dump_config(cfg));
}

std::string need_out(const CommonFlags& f, const char* cmd) {
    if (!f.out) throw ConfigError(std::string(cmd) + " needs --out");
    fs::create_directories(*f.out);
    return *f.out;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("cannot write " + path);
    out << text;
}

void write_crossing_csv(const std::vector<std::vector<uint64_t>>& m,
                        std::ostream& out) {
    out << "src_worker,dst_worker,synapses\n";
    for (size_t s = 0; s < m.size(); ++s)
        for (size_t d = 0; d < m[s].size(); ++d)
            out << s << ',' << d << ',' << m[s][d] << "\n";
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonFlags& f) {
    RunConfig cfg = resolve_config(f);
    std::string dir = need_out(f, "generate");
    BuiltNetwork net = build_network(cfg);
    save_tables(net.tables, dir);
    save_partition(net.partition, dir + "/partition.txt");
    save_connectome_file(net.graph, dir + "/connectome.txt");
    write_file(dir + "/config.json", dump_config(cfg) + "\n");
    {
        std::ofstream out(dir + "/crossing.csv");
        write_crossing_csv(net.crossing, out);
    }
    std::cout << "generated: voxels=" << net.graph.voxel_count
              << " units=" << net.layout.unit_count()
              << " neurons=" << net.layout.total_neurons
              << " synapses=" << net.synapse_count
              << " workers=" << net.partition.worker_count
              << " objective=" << partition_objective(net.unit_graph, net.partition)
              << "\n";
    return kExitOk;
}

int cmd_partition(const CommonFlags& f) {
    RunConfig cfg = resolve_config(f);
    ConnectomeGraph graph = build_connectome(cfg);
    // Layout without synapse sampling is enough for the unit graph.
    BuiltNetwork scratch;
    RunConfig probe = cfg;
    MicrocolumnSpec mc;
    NetworkLayout layout;
    {
        // Reuse the pipeline helpers so overrides apply identically.
        probe.partition.method = "sequential";
        scratch = build_network(probe);
        layout = scratch.layout;
    }
    UnitGraph g = scratch.unit_graph;
    CapacityModel cap{cfg.partition.alpha, cfg.partition.beta,
                      cfg.partition.mu, cfg.partition.gamma};
    PartitionMap p = cfg.partition.method == "file"
                         ? load_partition(cfg.partition.path, layout.unit_count())
                         : make_partition(g, cfg.workers, cap, cfg.partition.method);
    p.validate(layout.unit_count());
    std::cout << "method=" << cfg.partition.method
              << " workers=" << p.worker_count
              << " objective=" << partition_objective(g, p) << "\n";
    std::vector<double> load(p.worker_count, 0.0);
    for (uint32_t u = 0; u < layout.unit_count(); ++u)
        load[p.unit_worker[u]] += cap.load(g, u);
    for (uint16_t w = 0; w < p.worker_count; ++w)
        std::cout << "worker " << w << " load=" << load[w] << "\n";
    if (f.out) {
        fs::path path(*f.out);
        if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
        save_partition(p, *f.out);
    }
    return kExitOk;
}

int cmd_simulate(const CommonFlags& f, const std::string& tables_dir) {
    RunConfig cfg = resolve_config(f);
    BuiltNetwork net = build_network(cfg);
    if (!tables_dir.empty()) {
        // Tables generated earlier (same config and seed); the layout is
        // rebuilt deterministically from the config.
        net.tables = load_tables(tables_dir);
    }
    SimOptions opts = sim_options_from(cfg);
    SimInstance sim(net.tables, net.layout, opts);
    RunResult run = sim.advance(cfg.steps);
    TimingReport rep =
        aggregate_timings(run.timings, net.partition.worker_count,
                          cfg.stats_window, cfg.workers_per_node, run.flops);

    uint32_t window = std::min(cfg.stats_window, run.rates.steps);
    double rate = run.rates.network_mean_hz(run.rates.steps - window);
    std::cout << "steps=" << run.steps_done << " spikes=" << run.total_spikes
              << " mean_rate_hz=" << rate << "\n";
    write_report(rep, std::cout);

    if (f.out) {
        std::string dir = need_out(f, "simulate");
        std::ofstream tcsv(dir + "/timings.csv");
        write_timings_csv(run.timings, tcsv);
        std::ofstream rcsv(dir + "/raster.csv");
        write_raster_csv(run.raster, rcsv);
        std::ofstream rates(dir + "/rates.csv");
        rates << "unit,neurons,mean_hz\n";
        for (uint32_t u = 0; u < run.rates.counts.size(); ++u)
            rates << u << ',' << run.rates.unit_neurons[u] << ','
                  << run.rates.unit_mean_hz(u, run.rates.steps - window) << "\n";
        std::ostringstream reptext;
        write_report(rep, reptext);
        write_file(dir + "/report.txt", reptext.str());
        std::ofstream cross(dir + "/crossing.csv");
        write_crossing_csv(net.crossing, cross);
    }
    return kExitOk;
}

int cmd_experiment(const CommonFlags& f, const std::string& kind,
                   std::vector<uint16_t> worker_grid,
                   std::vector<double> ou_grid,
                   std::vector<std::string> methods) {
    RunConfig cfg = resolve_config(f);
    if (worker_grid.empty()) worker_grid = {1, 2, 4, 8};
    if (ou_grid.empty()) ou_grid = {150, 250, 350, 450, 550};
    if (methods.empty()) methods = {"greedy", "sequential"};
    ExperimentResult res;
    if (kind == "weak")
        res = weak_scaling(cfg, worker_grid);
    else if (kind == "strong")
        res = strong_scaling(cfg, worker_grid);
    else if (kind == "rate")
        res = rate_sweep(cfg, ou_grid);
    else if (kind == "partition")
        res = partition_compare(cfg, methods);
    else
        throw ConfigError("unknown experiment kind: " + kind);
    if (f.out) {
        fs::path path(*f.out);
        if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
        std::ofstream out(*f.out);
        if (!out) throw SimError("cannot write " + *f.out);
        write_experiment_csv(res, out);
    } else {
        write_experiment_csv(res, std::cout);
    }
    return kExitOk;
}

std::vector<std::vector<double>> load_bold_csv(const std::string& path,
                                               size_t voxels) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open observed BOLD file: " + path);
    // window,voxel,value with a header line.
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string wtok, vtok, xtok;
        if (!std::getline(ss, wtok, ',') || !std::getline(ss, vtok, ',') ||
            !std::getline(ss, xtok, ','))
            throw ConfigError("bad BOLD row: " + line);
        size_t w = std::stoul(wtok), v = std::stoul(vtok);
        if (v >= voxels) throw ConfigError("BOLD voxel out of range: " + line);
        if (rows.size() <= w) rows.resize(w + 1, std::vector<double>(voxels, 0.0));
        rows[w][v] = std::stod(xtok);
    }
    return rows;
}

int cmd_assimilate(const CommonFlags& f, const std::string& observed_path,
                   int members, uint32_t windows, uint32_t window_steps,
                   int receptor, double truth_shift) {
    RunConfig cfg = resolve_config(f);
    BuiltNetwork net = build_network(cfg);

    AssimOptions opts;
    opts.members = members;
    opts.windows = windows;
    opts.window_steps = window_steps;
    opts.dt_ms = cfg.dt_ms;
    opts.seed = cfg.seed;
    for (uint32_t u = 0; u < net.layout.unit_count(); ++u)
        opts.targets.push_back({u, receptor});

    std::vector<std::vector<double>> observed;
    std::vector<double> truth;
    if (!observed_path.empty()) {
        observed = load_bold_csv(observed_path, net.layout.voxels.size());
    } else {
        // Twin experiment: synthesize observations from shifted locations.
        for (const AssimTarget& t : opts.targets)
            truth.push_back(net.layout.pop_of_unit(t.unit).g_location[t.receptor] +
                            truth_shift);
        observed = run_forward_bold(net.tables, net.layout, opts, windows, &truth);
        std::cout << "twin: synthesized " << observed.size()
                  << " observation windows (location shift " << truth_shift
                  << ")\n";
    }

    AssimResult res = assimilate(net.tables, net.layout, observed, opts);
    if (f.out) {
        std::string dir = need_out(f, "assimilate");
        std::ofstream csv(dir + "/assim.csv");
        write_assim_csv(res, csv);
        std::ofstream obs(dir + "/observed.csv");
        obs << "window,voxel,bold\n";
        for (size_t w = 0; w < observed.size(); ++w)
            for (size_t v = 0; v < observed[w].size(); ++v)
                obs << w << ',' << v << ',' << observed[w][v] << "\n";
    } else {
        write_assim_csv(res, std::cout);
    }
    if (res.diverged)
        std::cout << "diverged at window " << res.diverged_window << "\n";
    for (size_t t = 0; t < res.final_mean.size(); ++t) {
        std::cout << "target " << t << " (unit " << opts.targets[t].unit
                  << ", receptor " << opts.targets[t].receptor
                  << "): mean=" << res.final_mean[t]
                  << " spread=" << res.final_spread[t];
        if (!truth.empty()) std::cout << " truth=" << truth[t];
        std::cout << "\n";
    }
    return kExitOk;
}

std::vector<StepTimings> load_timings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open timings file: " + path);
    std::string line;
    std::getline(in, line);   // header
    std::vector<StepTimings> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<long long> x;
        std::string tok;
        while (std::getline(ss, tok, ',')) x.push_back(std::stoll(tok));
        if (x.size() != 22) throw ConfigError("bad timings row: " + line);
        StepTimings r;
        r.step = static_cast<uint32_t>(x[0]);
        r.worker = static_cast<uint16_t>(x[1]);
        r.t1 = x[2]; r.t2 = x[3]; r.t3 = x[4]; r.t4 = x[5]; r.t5 = x[6];
        r.t6 = x[7]; r.t7 = x[8]; r.t8 = x[9]; r.t9 = x[10]; r.t10 = x[11];
        r.t11 = x[12];
        r.send_intra_ns = x[13]; r.send_inter_ns = x[14];
        r.recv_intra_ns = x[15]; r.recv_inter_ns = x[16];
        r.bytes_sent_intra = static_cast<uint64_t>(x[17]);
        r.bytes_sent_inter = static_cast<uint64_t>(x[18]);
        r.bytes_recv_intra = static_cast<uint64_t>(x[19]);
        r.bytes_recv_inter = static_cast<uint64_t>(x[20]);
        r.spikes = static_cast<uint32_t>(x[21]);
        rows.push_back(r);
    }
    return rows;
}

int cmd_report(const CommonFlags& f, const std::string& run_dir,
               uint32_t window) {
    std::vector<StepTimings> rows = load_timings_csv(run_dir + "/timings.csv");
    uint16_t workers = 0;
    for (const StepTimings& r : rows)
        workers = std::max<uint16_t>(workers, static_cast<uint16_t>(r.worker + 1));
    RunConfig cfg = f.config ? load_config(*f.config) : RunConfig{};
    if (window == 0) window = cfg.stats_window;
    TimingReport rep = aggregate_timings(rows, workers, window,
                                         cfg.workers_per_node, FlopCounters{});
    write_report(rep, std::cout);
    if (f.out) {
        std::string dir = need_out(f, "report");
        std::ostringstream text;
        write_report(rep, text);
        write_file(dir + "/report.txt", text.str());
    }
    return kExitOk;
}

int cmd_verify(const CommonFlags& f) {
    RunConfig cfg = resolve_config(f);
    if (cfg.probe_gids.empty())
        cfg.probe_gids = {0};   // always check at least one trajectory

    RunConfig ref_cfg = cfg;
    ref_cfg.workers = 1;
    ref_cfg.scheduler = "loopback";
    ref_cfg.partition.method = "sequential";

    VOXSIM_INFO("verify: reference run (1 worker, loopback)");
    BuiltNetwork ref_net = build_network(ref_cfg);
    SimInstance ref_sim(ref_net.tables, ref_net.layout, sim_options_from(ref_cfg));
    RunResult ref = ref_sim.advance(ref_cfg.steps);

    VOXSIM_INFO("verify: candidate run (%u workers, %s)", unsigned(cfg.workers),
                cfg.scheduler.c_str());
    BuiltNetwork net = build_network(cfg);
    SimInstance sim(net.tables, net.layout, sim_options_from(cfg));
    RunResult got = sim.advance(cfg.steps);

    auto key = [](const RasterEvent& e) { return std::pair(e.step, e.gid); };
    std::vector<std::pair<uint32_t, uint64_t>> a, b;
    for (const RasterEvent& e : ref.raster) a.push_back(key(e));
    for (const RasterEvent& e : got.raster) b.push_back(key(e));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    bool raster_ok = a == b;
    std::cout << "raster: ref=" << a.size() << " got=" << b.size() << " "
              << (raster_ok ? "MATCH" : "MISMATCH") << "\n";

    bool probes_ok = true;
    for (size_t p = 0; p < ref.probes.size(); ++p) {
        const ProbeTrace& r = ref.probes[p];
        const ProbeTrace& g = got.probes[p];
        double num = 0, den = 0;
        bool bitwise = r.v.size() == g.v.size();
        for (size_t t = 0; t < r.v.size() && t < g.v.size(); ++t) {
            double d = double(r.v[t]) - double(g.v[t]);
            num += d * d;
            den += double(r.v[t]) * double(r.v[t]);
            if (r.v[t] != g.v[t]) bitwise = false;
        }
        double rel_mse = den > 0 ? num / den : num;
        bool ok = bitwise || rel_mse < 1e-4;
        probes_ok = probes_ok && ok;
        std::cout << "probe gid=" << r.gid << " rel_mse=" << rel_mse
                  << (bitwise ? " bitwise" : "") << " "
                  << (ok ? "MATCH" : "MISMATCH") << "\n";
    }
    if (raster_ok && probes_ok) {
        std::cout << "verify: PASS\n";
        return kExitOk;
    }
    std::cout << "verify: FAIL\n";
    return kExitMismatch;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxel-structured spiking network simulator"};
    app.require_subcommand(1);

    CommonFlags gen_f, part_f, sim_f, exp_f, asm_f, rep_f, ver_f;

    CLI::App* gen = app.add_subcommand("generate", "build and save network tables");
    add_common(gen, gen_f);

    CLI::App* part = app.add_subcommand("partition", "compute and inspect a partition");
    add_common(part, part_f);

    CLI::App* sim = app.add_subcommand("simulate", "run the simulation");
    add_common(sim, sim_f);
    std::string tables_dir;
    sim->add_option("--tables", tables_dir, "load tables saved by generate");

    CLI::App* exp = app.add_subcommand("experiment", "run an experiment grid");
    add_common(exp, exp_f);
    std::string kind = "strong";
    std::vector<uint16_t> worker_grid;
    std::vector<double> ou_grid;
    std::vector<std::string> methods;
    exp->add_option("--kind", kind, "weak|strong|rate|partition");
    exp->add_option("--worker-grid", worker_grid, "worker counts");
    exp->add_option("--ou-grid", ou_grid, "OU mean currents [pA]");
    exp->add_option("--methods", methods, "partition methods");

    CLI::App* asm_ = app.add_subcommand("assimilate", "estimate conductance locations");
    add_common(asm_, asm_f);
    std::string observed_path;
    int members = 8;
    uint32_t windows = 50, window_steps = 800;
    int receptor = 0;
    double truth_shift = 0.3;
    asm_->add_option("--observed", observed_path, "window,voxel,bold CSV (else twin)");
    asm_->add_option("--members", members, "ensemble size");
    asm_->add_option("--windows", windows, "observation windows");
    asm_->add_option("--window-steps", window_steps, "steps per window");
    asm_->add_option("--receptor", receptor, "target receptor index (0=AMPA)");
    asm_->add_option("--truth-shift", truth_shift, "twin truth location shift");

    CLI::App* rep = app.add_subcommand("report", "aggregate a saved timings.csv");
    add_common(rep, rep_f);
    std::string run_dir = ".";
    uint32_t window = 0;
    rep->add_option("--run", run_dir, "directory containing timings.csv");
    rep->add_option("--window", window, "trailing window (default config)");

    CLI::App* ver = app.add_subcommand("verify", "compare against the 1-worker reference");
    add_common(ver, ver_f);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(gen_f);
        if (part->parsed()) return cmd_partition(part_f);
        if (sim->parsed()) return cmd_simulate(sim_f, tables_dir);
        if (exp->parsed())
            return cmd_experiment(exp_f, kind, worker_grid, ou_grid, methods);
        if (asm_->parsed())
            return cmd_assimilate(asm_f, observed_path, members, windows,
                                  window_steps, receptor, truth_shift);
        if (rep->parsed()) return cmd_report(rep_f, run_dir, window);
        if (ver->parsed()) return cmd_verify(ver_f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SimError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return kExitSim;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSim;
    }
    return kExitOk;
}
