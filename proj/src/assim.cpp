#include "voxsim/assim.hpp"
#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>

namespace voxsim {

namespace {

std::vector<uint64_t> voxel_sizes(const NetworkLayout& layout) {
    std::vector<uint64_t> n(layout.voxels.size(), 0);
    for (const Unit& u : layout.units) n[u.voxel] += u.neurons;
    return n;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    if (n < 2) return 0.0;
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void validate_assim(const AssimOptions& o) {
    if (o.members < 2) throw ConfigError("assimilation needs >= 2 members");
    if (o.window_steps == 0) throw ConfigError("window_steps must be >= 1");
    if (o.targets.empty()) throw ConfigError("no assimilation targets");
    if (!(o.obs_noise_sd > 0)) throw ConfigError("obs_noise_sd must be > 0");
    if (o.inflation < 1.0) throw ConfigError("inflation must be >= 1");
    if (!(o.baseline_hz > 0)) throw ConfigError("baseline_hz must be > 0");
    o.hemo.validate();
}

// Per-step hemodynamic drive from a window's rate series, then one BOLD
// sample per voxel at the window end.
std::vector<double> window_bold(const RunResult& run, const NetworkLayout& layout,
                                const std::vector<uint64_t>& vox_n,
                                std::vector<HemoState>& hemo,
                                const AssimOptions& opts) {
    const double dt_s = opts.dt_ms * 1e-3;
    for (uint32_t t = 0; t < run.rates.steps; ++t) {
        std::vector<uint32_t> counts = run.rates.voxel_counts(layout, t);
        for (size_t v = 0; v < hemo.size(); ++v) {
            double hz = vox_n[v] > 0
                            ? counts[v] / (static_cast<double>(vox_n[v]) * dt_s)
                            : 0.0;
            step_hemodynamics(hemo[v], hz / opts.baseline_hz, dt_s, opts.hemo);
        }
    }
    std::vector<double> bold(hemo.size());
    for (size_t v = 0; v < hemo.size(); ++v)
        bold[v] = bold_signal(hemo[v], opts.hemo);
    return bold;
}

} // namespace

EnsembleMember::EnsembleMember(const NetworkTables& tables,
                               const NetworkLayout& layout, SimOptions sim,
                               const AssimOptions& opts, int member_index)
    : layout_(layout), opts_(opts), sim_(tables, layout, std::move(sim)),
      member_(member_index) {
    hemo_.assign(layout.voxels.size(), HemoState{});
    scale_.reserve(opts.targets.size());
    for (const AssimTarget& t : opts.targets) {
        if (t.unit >= layout.unit_count())
            throw ConfigError("assimilation target unit out of range");
        if (t.receptor < 0 || t.receptor >= kReceptors)
            throw ConfigError("assimilation target receptor out of range");
        scale_.push_back(layout.pop_of_unit(t.unit).g_scale[t.receptor]);
    }
}

std::vector<double> EnsembleMember::run_window(const std::vector<double>& params,
                                               uint32_t window) {
    if (params.size() != opts_.targets.size())
        throw ConfigError("parameter vector size does not match targets");
    for (size_t i = 0; i < params.size(); ++i) {
        const AssimTarget& t = opts_.targets[i];
        uint32_t count = layout_.units[t.unit].neurons;
        uint64_t salt = mix_key(static_cast<uint64_t>(member_) + 1,
                                static_cast<uint64_t>(window) + 1);
        sim_.set_conductances(
            t.unit, t.receptor,
            sample_conductances(opts_.seed, salt, t.unit, t.receptor, params[i],
                                scale_[i], count));
    }
    RunResult run = sim_.advance(opts_.window_steps);
    return window_bold(run, layout_, voxel_sizes(layout_), hemo_, opts_);
}

void EnsrfUpdate::apply(std::vector<std::vector<double>>& ensemble,
                        const std::vector<std::vector<double>>& forecasts,
                        const std::vector<double>& obs, double obs_var,
                        double inflation, double min_spread) {
    const size_t m = ensemble.size();
    if (m < 2 || forecasts.size() != m)
        throw ConfigError("ensemble and forecasts must have >= 2 members");
    const size_t p = ensemble[0].size();
    const size_t q = obs.size();

    // Augmented state: parameters followed by predicted observations, so the
    // sequential scalar updates keep later observations consistent.
    std::vector<std::vector<double>> z(m, std::vector<double>(p + q));
    for (size_t i = 0; i < m; ++i) {
        std::copy(ensemble[i].begin(), ensemble[i].end(), z[i].begin());
        if (forecasts[i].size() != q)
            throw ConfigError("forecast size does not match observations");
        std::copy(forecasts[i].begin(), forecasts[i].end(), z[i].begin() + p);
    }

    std::vector<double> mean(p + q), dev_y(m);
    for (size_t o = 0; o < q; ++o) {
        const size_t yc = p + o;
        for (size_t c = 0; c < p + q; ++c) {
            double acc = 0;
            for (size_t i = 0; i < m; ++i) acc += z[i][c];
            mean[c] = acc / m;
        }
        double s_yy = 0;
        for (size_t i = 0; i < m; ++i) {
            dev_y[i] = z[i][yc] - mean[yc];
            s_yy += dev_y[i] * dev_y[i];
        }
        s_yy /= (m - 1);
        const double denom = s_yy + obs_var;
        if (denom <= 0) continue;
        const double innov = obs[o] - mean[yc];
        // Deterministic square-root factor (Whitaker-Hamill).
        const double alpha = 1.0 / (1.0 + std::sqrt(obs_var / denom));
        for (size_t c = 0; c < p + q; ++c) {
            double cov = 0;
            for (size_t i = 0; i < m; ++i)
                cov += (z[i][c] - mean[c]) * dev_y[i];
            cov /= (m - 1);
            const double gain = cov / denom;
            const double new_mean = mean[c] + gain * innov;
            for (size_t i = 0; i < m; ++i) {
                const double dev = (z[i][c] - mean[c]) - alpha * gain * dev_y[i];
                z[i][c] = new_mean + dev;
            }
        }
    }

    // Back to parameter space with inflation and a spread floor.
    for (size_t c = 0; c < p; ++c) {
        double mu = 0;
        for (size_t i = 0; i < m; ++i) mu += z[i][c];
        mu /= m;
        double var = 0;
        for (size_t i = 0; i < m; ++i) var += (z[i][c] - mu) * (z[i][c] - mu);
        double sd = std::sqrt(var / (m - 1));
        double scale = inflation;
        if (sd * inflation < min_spread)
            scale = sd > 0 ? min_spread / sd : 0.0;
        for (size_t i = 0; i < m; ++i) {
            double dev = (z[i][c] - mu) * scale;
            if (sd == 0.0 && min_spread > 0) {
                // Degenerate ensemble: re-seed a symmetric spread.
                double centered =
                    (static_cast<double>(i) - 0.5 * (m - 1)) /
                    std::max(1.0, 0.5 * (m - 1));
                dev = min_spread * centered;
            }
            ensemble[i][c] = mu + dev;
        }
    }
}

AssimResult assimilate(const NetworkTables& tables, const NetworkLayout& layout,
                       const std::vector<std::vector<double>>& observed,
                       const AssimOptions& opts) {
    validate_assim(opts);
    const uint32_t windows =
        std::min<uint32_t>(opts.windows, static_cast<uint32_t>(observed.size()));
    if (windows == 0) throw ConfigError("no observation windows");
    for (const auto& row : observed)
        if (row.size() != layout.voxels.size())
            throw ConfigError("observed BOLD row does not match voxel count");

    SimOptions sim;
    sim.dt_ms = opts.dt_ms;
    sim.scheduler = "loopback";
    sim.record_raster = false;
    sim.record_timings = false;

    std::vector<std::unique_ptr<EnsembleMember>> members;
    members.reserve(opts.members);
    for (int i = 0; i < opts.members; ++i)
        members.push_back(
            std::make_unique<EnsembleMember>(tables, layout, sim, opts, i));

    // Initial ensemble around the generation-time prior.
    const size_t p = opts.targets.size();
    std::vector<std::vector<double>> params(opts.members,
                                            std::vector<double>(p));
    for (size_t t = 0; t < p; ++t) {
        const AssimTarget& tgt = opts.targets[t];
        double prior = layout.pop_of_unit(tgt.unit).g_location[tgt.receptor];
        uint64_t base = mix_key(opts.seed, rngstream::assim, tgt.unit,
                                static_cast<uint64_t>(tgt.receptor));
        for (int i = 0; i < opts.members; ++i)
            params[i][t] =
                prior + opts.prior_sd * stream_normal(base, static_cast<uint64_t>(i));
    }

    AssimResult res;
    res.windows.reserve(windows);
    double first_rms = -1.0;
    int bad_streak = 0;
    const double obs_var = opts.obs_noise_sd * opts.obs_noise_sd;

    for (uint32_t w = 0; w < windows; ++w) {
        std::vector<std::vector<double>> forecasts(opts.members);
        for (int i = 0; i < opts.members; ++i)
            forecasts[i] = members[i]->run_window(params[i], w);

        const size_t voxels = layout.voxels.size();
        std::vector<double> fmean(voxels, 0.0);
        for (int i = 0; i < opts.members; ++i)
            for (size_t v = 0; v < voxels; ++v) fmean[v] += forecasts[i][v];
        for (size_t v = 0; v < voxels; ++v) fmean[v] /= opts.members;

        AssimWindowStat stat;
        stat.window = w;
        double rms = 0;
        for (size_t v = 0; v < voxels; ++v) {
            double d = observed[w][v] - fmean[v];
            rms += d * d;
        }
        stat.innovation_rms = std::sqrt(rms / voxels);
        stat.pearson_r = pearson(fmean, observed[w]);

        EnsrfUpdate::apply(params, forecasts, observed[w], obs_var,
                           opts.inflation, opts.min_spread);

        stat.target_mean.resize(p);
        double spread = 0;
        for (size_t t = 0; t < p; ++t) {
            double mu = 0;
            for (int i = 0; i < opts.members; ++i) mu += params[i][t];
            mu /= opts.members;
            stat.target_mean[t] = mu;
            double var = 0;
            for (int i = 0; i < opts.members; ++i)
                var += (params[i][t] - mu) * (params[i][t] - mu);
            spread += std::sqrt(var / (opts.members - 1));
        }
        stat.mean_spread = spread / p;
        res.windows.push_back(std::move(stat));

        if (first_rms < 0) first_rms = std::max(res.windows[0].innovation_rms,
                                                1e-12);
        if (res.windows.back().innovation_rms > opts.divergence_factor * first_rms)
            bad_streak += 1;
        else
            bad_streak = 0;
        if (opts.divergence_patience > 0 &&
            bad_streak >= opts.divergence_patience) {
            res.diverged = true;
            res.diverged_window = w;
            break;
        }
    }

    res.final_mean.resize(p);
    res.final_spread.resize(p);
    for (size_t t = 0; t < p; ++t) {
        double mu = 0;
        for (int i = 0; i < opts.members; ++i) mu += params[i][t];
        mu /= opts.members;
        res.final_mean[t] = mu;
        double var = 0;
        for (int i = 0; i < opts.members; ++i)
            var += (params[i][t] - mu) * (params[i][t] - mu);
        res.final_spread[t] = std::sqrt(var / (opts.members - 1));
    }
    return res;
}

std::vector<std::vector<double>> run_forward_bold(
    const NetworkTables& tables, const NetworkLayout& layout,
    const AssimOptions& opts, uint32_t windows,
    const std::vector<double>* true_params) {
    opts.hemo.validate();
    SimOptions sim;
    sim.dt_ms = opts.dt_ms;
    sim.scheduler = "loopback";
    sim.record_raster = false;
    sim.record_timings = false;
    std::vector<std::vector<double>> out;
    out.reserve(windows);
    if (true_params) {
        // Member index -1 keys the truth's resampling apart from all members.
        EnsembleMember truth(tables, layout, sim, opts, -1);
        for (uint32_t w = 0; w < windows; ++w)
            out.push_back(truth.run_window(*true_params, w));
        return out;
    }
    SimInstance inst(tables, layout, sim);
    std::vector<HemoState> hemo(layout.voxels.size());
    std::vector<uint64_t> vox_n = voxel_sizes(layout);
    for (uint32_t w = 0; w < windows; ++w) {
        RunResult run = inst.advance(opts.window_steps);
        out.push_back(window_bold(run, layout, vox_n, hemo, opts));
    }
    return out;
}

void write_assim_csv(const AssimResult& r, std::ostream& out) {
    out << "window,innovation_rms,pearson_r,mean_spread";
    size_t p = r.final_mean.size();
    for (size_t t = 0; t < p; ++t) out << ",target" << t;
    out << "\n";
    for (const AssimWindowStat& w : r.windows) {
        out << w.window << ',' << w.innovation_rms << ',' << w.pearson_r << ','
            << w.mean_spread;
        for (double m : w.target_mean) out << ',' << m;
        out << "\n";
    }
}

} // namespace voxsim
