#include "voxsim/config.hpp"
#include "voxsim/util.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace voxsim {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

void check_keys(const json& j, const char* where,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) bad(std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            bad(std::string("unknown key '") + it.key() + "' in " + where);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        bad(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename T>
void get_opt(const json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key)) return;
    T v{};
    get_to(j, key, v);
    out = v;
}

void get_opt4(const json& j, const char* key,
              std::optional<std::array<double, kReceptors>>& out) {
    if (!j.contains(key)) return;
    const json& a = j.at(key);
    if (!a.is_array() || a.size() != kReceptors)
        bad(std::string("'") + key + "' must be an array of " +
            std::to_string(kReceptors) + " numbers");
    std::array<double, kReceptors> v{};
    for (int u = 0; u < kReceptors; ++u) v[u] = a[u].get<double>();
    out = v;
}

ConnectomeConfig parse_connectome(const json& j) {
    ConnectomeConfig c;
    check_keys(j, "connectome",
               {"kind", "voxels", "neurons_per_voxel", "sparsity",
                "weight_sigma", "gm_sigma", "cross_weight", "scramble", "path",
                "region"});
    get_to(j, "kind", c.kind);
    get_to(j, "voxels", c.voxels);
    get_to(j, "neurons_per_voxel", c.neurons_per_voxel);
    get_to(j, "sparsity", c.sparsity);
    get_to(j, "weight_sigma", c.weight_sigma);
    get_to(j, "gm_sigma", c.gm_sigma);
    get_to(j, "cross_weight", c.cross_weight);
    get_to(j, "scramble", c.scramble);
    get_to(j, "path", c.path);
    get_to(j, "region", c.region);
    static const std::set<std::string> kinds{"ring", "uniform", "two_block",
                                             "single", "file"};
    if (!kinds.count(c.kind)) bad("unknown connectome kind: " + c.kind);
    if (c.kind == "file" && c.path.empty()) bad("connectome kind 'file' needs a path");
    if (c.kind != "file") {
        if (c.voxels == 0) bad("connectome.voxels must be >= 1");
        if (c.neurons_per_voxel == 0) bad("connectome.neurons_per_voxel must be >= 1");
    }
    if (!c.region.empty()) region_from_name(c.region);   // validates
    return c;
}

PartitionConfig parse_partition(const json& j) {
    PartitionConfig p;
    check_keys(j, "partition",
               {"method", "path", "alpha", "beta", "mu", "gamma", "rate_hz"});
    get_to(j, "method", p.method);
    get_to(j, "path", p.path);
    get_to(j, "alpha", p.alpha);
    get_to(j, "beta", p.beta);
    get_to(j, "mu", p.mu);
    get_to(j, "gamma", p.gamma);
    get_to(j, "rate_hz", p.rate_hz);
    static const std::set<std::string> methods{"greedy", "exact", "sequential",
                                               "file"};
    if (!methods.count(p.method)) bad("unknown partition method: " + p.method);
    if (p.method == "file" && p.path.empty()) bad("partition method 'file' needs a path");
    if (!(p.rate_hz > 0)) bad("partition.rate_hz must be > 0");
    return p;
}

RegionConfig parse_region(const json& j, const std::string& name) {
    RegionConfig r;
    check_keys(j, ("regions." + name).c_str(),
               {"k_in", "rho", "ou_mean", "ou_sigma", "ou_tau", "g_location",
                "g_scale", "weight_mean", "weight_spread", "dual_receptor",
                "split_ratio"});
    get_opt(j, "k_in", r.k_in);
    get_opt(j, "rho", r.rho);
    get_opt(j, "ou_mean", r.ou_mean);
    get_opt(j, "ou_sigma", r.ou_sigma);
    get_opt(j, "ou_tau", r.ou_tau);
    get_opt4(j, "g_location", r.g_location);
    get_opt4(j, "g_scale", r.g_scale);
    get_opt4(j, "weight_mean", r.weight_mean);
    get_opt4(j, "weight_spread", r.weight_spread);
    get_opt(j, "dual_receptor", r.dual_receptor);
    get_opt(j, "split_ratio", r.split_ratio);
    if (r.k_in && *r.k_in == 0) bad("regions." + name + ".k_in must be >= 1");
    if (r.rho && !(*r.rho >= 0 && *r.rho <= 1))
        bad("regions." + name + ".rho must be in [0, 1]");
    if (r.ou_tau && !(*r.ou_tau > 0)) bad("regions." + name + ".ou_tau must be > 0");
    if (r.ou_sigma && !(*r.ou_sigma >= 0))
        bad("regions." + name + ".ou_sigma must be >= 0");
    if (r.split_ratio && !(*r.split_ratio >= 0 && *r.split_ratio <= 1))
        bad("regions." + name + ".split_ratio must be in [0, 1]");
    return r;
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        bad(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"seed", "dt_ms", "steps", "workers", "workers_per_node",
                "scheduler", "transport", "stats_window", "recv_timeout_ms",
                "connectome", "partition", "regions", "microcolumn_path",
                "probe_gids"});
    RunConfig c;
    get_to(j, "seed", c.seed);
    get_to(j, "dt_ms", c.dt_ms);
    get_to(j, "steps", c.steps);
    get_to(j, "workers", c.workers);
    get_to(j, "workers_per_node", c.workers_per_node);
    get_to(j, "scheduler", c.scheduler);
    get_to(j, "transport", c.transport);
    get_to(j, "stats_window", c.stats_window);
    get_to(j, "recv_timeout_ms", c.recv_timeout_ms);
    get_to(j, "microcolumn_path", c.microcolumn_path);
    get_to(j, "probe_gids", c.probe_gids);
    if (j.contains("connectome")) c.connectome = parse_connectome(j["connectome"]);
    if (j.contains("partition")) c.partition = parse_partition(j["partition"]);
    if (j.contains("regions")) {
        if (!j["regions"].is_object()) bad("regions must be an object");
        for (auto it = j["regions"].begin(); it != j["regions"].end(); ++it) {
            region_from_name(it.key());   // validates the name
            c.regions[it.key()] = parse_region(it.value(), it.key());
        }
    }
    if (!(c.dt_ms > 0)) bad("dt_ms must be > 0");
    if (c.steps == 0) bad("steps must be >= 1");
    if (c.workers == 0 || c.workers > kMaxWorkers)
        bad("workers must be in [1, " + std::to_string(kMaxWorkers) + "]");
    if (c.workers_per_node == 0) bad("workers_per_node must be >= 1");
    if (c.scheduler != "threads" && c.scheduler != "loopback")
        bad("unknown scheduler: " + c.scheduler);
    if (c.transport != "queue") bad("unknown transport: " + c.transport);
    if (c.stats_window == 0) bad("stats_window must be >= 1");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["dt_ms"] = c.dt_ms;
    j["steps"] = c.steps;
    j["workers"] = c.workers;
    j["workers_per_node"] = c.workers_per_node;
    j["scheduler"] = c.scheduler;
    j["transport"] = c.transport;
    j["stats_window"] = c.stats_window;
    j["recv_timeout_ms"] = c.recv_timeout_ms;
    if (!c.microcolumn_path.empty()) j["microcolumn_path"] = c.microcolumn_path;
    if (!c.probe_gids.empty()) j["probe_gids"] = c.probe_gids;

    json cj;
    cj["kind"] = c.connectome.kind;
    cj["voxels"] = c.connectome.voxels;
    cj["neurons_per_voxel"] = c.connectome.neurons_per_voxel;
    cj["sparsity"] = c.connectome.sparsity;
    cj["weight_sigma"] = c.connectome.weight_sigma;
    cj["gm_sigma"] = c.connectome.gm_sigma;
    cj["cross_weight"] = c.connectome.cross_weight;
    cj["scramble"] = c.connectome.scramble;
    if (!c.connectome.path.empty()) cj["path"] = c.connectome.path;
    if (!c.connectome.region.empty()) cj["region"] = c.connectome.region;
    j["connectome"] = cj;

    json pj;
    pj["method"] = c.partition.method;
    if (!c.partition.path.empty()) pj["path"] = c.partition.path;
    pj["alpha"] = c.partition.alpha;
    pj["beta"] = c.partition.beta;
    pj["mu"] = c.partition.mu;
    pj["gamma"] = c.partition.gamma;
    pj["rate_hz"] = c.partition.rate_hz;
    j["partition"] = pj;

    if (!c.regions.empty()) {
        json rj = json::object();
        for (const auto& [name, r] : c.regions) {
            json e = json::object();
            if (r.k_in) e["k_in"] = *r.k_in;
            if (r.rho) e["rho"] = *r.rho;
            if (r.ou_mean) e["ou_mean"] = *r.ou_mean;
            if (r.ou_sigma) e["ou_sigma"] = *r.ou_sigma;
            if (r.ou_tau) e["ou_tau"] = *r.ou_tau;
            if (r.g_location) e["g_location"] = *r.g_location;
            if (r.g_scale) e["g_scale"] = *r.g_scale;
            if (r.weight_mean) e["weight_mean"] = *r.weight_mean;
            if (r.weight_spread) e["weight_spread"] = *r.weight_spread;
            if (r.dual_receptor) e["dual_receptor"] = *r.dual_receptor;
            if (r.split_ratio) e["split_ratio"] = *r.split_ratio;
            rj[name] = e;
        }
        j["regions"] = rj;
    }
    return j.dump(2);
}

MicrocolumnSpec load_microcolumn(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open micro-column file: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        bad(std::string("micro-column file is not valid JSON: ") + e.what());
    }
    check_keys(j, "microcolumn", {"populations", "probability"});
    if (!j.contains("populations") || !j["populations"].is_array())
        bad("microcolumn needs a 'populations' array");
    if (!j.contains("probability") || !j["probability"].is_array())
        bad("microcolumn needs a 'probability' matrix");

    MicrocolumnSpec mc;
    for (const json& p : j["populations"]) {
        check_keys(p, "populations[]", {"label", "fraction", "excitatory", "layer"});
        for (const char* k : {"label", "fraction", "excitatory", "layer"})
            if (!p.contains(k))
                bad(std::string("population entry missing '") + k + "'");
        mc.labels.push_back(p["label"].get<std::string>());
        mc.fractions.push_back(p["fraction"].get<double>());
        mc.excitatory.push_back(p["excitatory"].get<bool>());
        mc.layer.push_back(p["layer"].get<int>());
    }
    const size_t n = mc.labels.size();
    if (n == 0) bad("microcolumn has no populations");
    for (const json& row : j["probability"]) {
        if (!row.is_array() || row.size() != n)
            bad("probability matrix must be square over the populations");
        mc.probability.emplace_back();
        for (const json& x : row) mc.probability.back().push_back(x.get<double>());
    }
    if (mc.probability.size() != n)
        bad("probability matrix must be square over the populations");
    for (const auto& row : mc.probability)
        for (double x : row)
            if (!(x >= 0)) bad("probability entries must be >= 0");
    return mc;
}

} // namespace voxsim
