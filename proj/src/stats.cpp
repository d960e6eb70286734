#include "voxsim/stats.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace voxsim {

FlopCounters& FlopCounters::operator+=(const FlopCounters& o) {
    membrane += o.membrane;
    gating_inner += o.gating_inner;
    gating_outer += o.gating_outer;
    gating_decay += o.gating_decay;
    current += o.current;
    return *this;
}

TimingReport aggregate_timings(const std::vector<StepTimings>& rows,
                               uint16_t workers, uint32_t window_steps,
                               uint16_t workers_per_node,
                               const FlopCounters& flops) {
    (void)workers_per_node;
    TimingReport rep;
    rep.workers = workers;
    if (workers == 0 || rows.empty() || rows.size() % workers != 0)
        throw ConfigError("timing rows do not form a (step x worker) table");
    const uint32_t steps = static_cast<uint32_t>(rows.size() / workers);
    const uint32_t window = std::min(window_steps, steps);
    const uint32_t from = steps - window;
    rep.window_steps = window;

    auto dur = [&](const StepTimings& r, int what) -> int64_t {
        switch (what) {
            case 0: return r.sim_ns();
            case 1: return r.com_ns();
            case 2: return r.send_ns();
            default: return r.recv_ns();
        }
    };

    // T: mean over steps of (max over workers); That: mean over workers of
    // (mean over steps).
    double t[4] = {0, 0, 0, 0}, that[4] = {0, 0, 0, 0};
    std::vector<double> worker_com(workers, 0.0);
    double send_intra = 0, send_inter = 0, rec_intra = 0, rec_inter = 0;
    for (uint32_t s = from; s < steps; ++s) {
        int64_t mx[4] = {0, 0, 0, 0};
        for (uint16_t w = 0; w < workers; ++w) {
            const StepTimings& r = rows[static_cast<size_t>(s) * workers + w];
            for (int i = 0; i < 4; ++i) {
                int64_t d = dur(r, i);
                mx[i] = std::max(mx[i], d);
                that[i] += static_cast<double>(d);
            }
            worker_com[w] += static_cast<double>(r.com_ns());
            send_intra += static_cast<double>(r.send_intra_ns);
            send_inter += static_cast<double>(r.send_inter_ns);
            rec_intra += static_cast<double>(r.recv_intra_ns);
            rec_inter += static_cast<double>(r.recv_inter_ns);
            rep.bytes_intra += r.bytes_sent_intra;
            rep.bytes_inter += r.bytes_sent_inter;
        }
        for (int i = 0; i < 4; ++i) t[i] += static_cast<double>(mx[i]);
    }
    const double ns = 1e-9;
    const double per_step = 1.0 / window;
    const double per_cell = 1.0 / (static_cast<double>(window) * workers);
    rep.t_sim = t[0] * per_step * ns;
    rep.t_com = t[1] * per_step * ns;
    rep.t_send = t[2] * per_step * ns;
    rep.t_rec = t[3] * per_step * ns;
    rep.that_sim = that[0] * per_cell * ns;
    rep.that_com = that[1] * per_cell * ns;
    rep.that_send = that[2] * per_cell * ns;
    rep.that_rec = that[3] * per_cell * ns;
    // Locality splits are worker-and-step means, so intra + inter adds up to
    // the corresponding That value exactly.
    rep.t_send_intra = send_intra * per_cell * ns;
    rep.t_send_inter = send_inter * per_cell * ns;
    rep.t_rec_intra = rec_intra * per_cell * ns;
    rep.t_rec_inter = rec_inter * per_cell * ns;

    rep.per_worker_com.resize(workers);
    double mean = 0;
    for (uint16_t w = 0; w < workers; ++w) {
        rep.per_worker_com[w] = worker_com[w] * per_step * ns;
        mean += rep.per_worker_com[w];
    }
    mean /= workers;
    if (mean > 0) {
        double mx = *std::max_element(rep.per_worker_com.begin(),
                                      rep.per_worker_com.end());
        double var = 0;
        for (double c : rep.per_worker_com) var += (c - mean) * (c - mean);
        var /= workers;   // population variance
        rep.t_max = mx / mean;
        rep.t_std = std::sqrt(var) / mean;
    }

    // Throughput uses the whole run: total flops against the summed critical
    // path (per-step max of t3).
    double crit = 0;
    for (uint32_t s = 0; s < steps; ++s) {
        int64_t mx = 0;
        for (uint16_t w = 0; w < workers; ++w)
            mx = std::max(mx, rows[static_cast<size_t>(s) * workers + w].t3);
        crit += static_cast<double>(mx) * ns;
    }
    rep.flops = flops;
    if (crit > 0) {
        rep.flops_per_sec = static_cast<double>(flops.total()) / crit;
        rep.steps_per_sec = steps / crit;
    }
    return rep;
}

void write_timings_csv(const std::vector<StepTimings>& rows, std::ostream& out) {
    out << "step,worker,t1,t2,t3,t4,t5,t6,t7,t8,t9,t10,t11,"
           "send_intra_ns,send_inter_ns,recv_intra_ns,recv_inter_ns,"
           "bytes_sent_intra,bytes_sent_inter,bytes_recv_intra,bytes_recv_inter,"
           "spikes\n";
    for (const StepTimings& r : rows) {
        out << r.step << ',' << r.worker << ',' << r.t1 << ',' << r.t2 << ','
            << r.t3 << ',' << r.t4 << ',' << r.t5 << ',' << r.t6 << ',' << r.t7
            << ',' << r.t8 << ',' << r.t9 << ',' << r.t10 << ',' << r.t11 << ','
            << r.send_intra_ns << ',' << r.send_inter_ns << ','
            << r.recv_intra_ns << ',' << r.recv_inter_ns << ','
            << r.bytes_sent_intra << ',' << r.bytes_sent_inter << ','
            << r.bytes_recv_intra << ',' << r.bytes_recv_inter << ','
            << r.spikes << '\n';
    }
}

void write_report(const TimingReport& r, std::ostream& out) {
    out << "window_steps=" << r.window_steps << "\n";
    out << "workers=" << r.workers << "\n";
    out << "t_sim=" << r.t_sim << "\n";
    out << "t_com=" << r.t_com << "\n";
    out << "t_send=" << r.t_send << "\n";
    out << "t_rec=" << r.t_rec << "\n";
    out << "that_sim=" << r.that_sim << "\n";
    out << "that_com=" << r.that_com << "\n";
    out << "that_send=" << r.that_send << "\n";
    out << "that_rec=" << r.that_rec << "\n";
    out << "t_send_intra=" << r.t_send_intra << "\n";
    out << "t_send_inter=" << r.t_send_inter << "\n";
    out << "t_rec_intra=" << r.t_rec_intra << "\n";
    out << "t_rec_inter=" << r.t_rec_inter << "\n";
    out << "t_max=" << r.t_max << "\n";
    out << "t_std=" << r.t_std << "\n";
    out << "bytes_intra=" << r.bytes_intra << "\n";
    out << "bytes_inter=" << r.bytes_inter << "\n";
    out << "flops_membrane=" << r.flops.membrane << "\n";
    out << "flops_gating_inner=" << r.flops.gating_inner << "\n";
    out << "flops_gating_outer=" << r.flops.gating_outer << "\n";
    out << "flops_gating_decay=" << r.flops.gating_decay << "\n";
    out << "flops_current=" << r.flops.current << "\n";
    out << "flops_total=" << r.flops.total() << "\n";
    out << "flops_per_sec=" << r.flops_per_sec << "\n";
    out << "steps_per_sec=" << r.steps_per_sec << "\n";
}

// --- rates -------------------------------------------------------------------

double RateSeries::rate_hz(uint32_t unit, uint32_t step) const {
    if (unit >= counts.size() || step >= steps)
        throw SimError("rate query out of range");
    uint64_t n = unit_neurons[unit];
    if (n == 0) return 0.0;
    return counts[unit][step] / (static_cast<double>(n) * dt_ms * 1e-3);
}

double RateSeries::unit_mean_hz(uint32_t unit, uint32_t from_step) const {
    if (from_step >= steps) return 0.0;
    double acc = 0;
    for (uint32_t s = from_step; s < steps; ++s) acc += rate_hz(unit, s);
    return acc / (steps - from_step);
}

double RateSeries::network_mean_hz(uint32_t from_step) const {
    if (from_step >= steps) return 0.0;
    uint64_t total_n = 0, total_spikes = 0;
    for (size_t u = 0; u < counts.size(); ++u) {
        total_n += unit_neurons[u];
        for (uint32_t s = from_step; s < steps; ++s) total_spikes += counts[u][s];
    }
    if (total_n == 0) return 0.0;
    return static_cast<double>(total_spikes) /
           (static_cast<double>(total_n) * (steps - from_step) * dt_ms * 1e-3);
}

std::vector<uint32_t> RateSeries::voxel_counts(const NetworkLayout& layout,
                                               uint32_t step) const {
    if (counts.size() != layout.unit_count())
        throw SimError("rate series does not match layout");
    std::vector<uint32_t> out(layout.voxels.size(), 0);
    for (uint32_t u = 0; u < layout.unit_count(); ++u)
        out[layout.units[u].voxel] += counts[u][step];
    return out;
}

RateSeries compute_rates(const std::vector<RasterEvent>& raster,
                         const NetworkLayout& layout, uint32_t steps,
                         double dt_ms) {
    RateSeries rs;
    rs.steps = steps;
    rs.dt_ms = dt_ms;
    rs.unit_neurons.resize(layout.unit_count());
    for (uint32_t u = 0; u < layout.unit_count(); ++u)
        rs.unit_neurons[u] = layout.units[u].neurons;
    rs.counts.assign(layout.unit_count(), std::vector<uint32_t>(steps, 0));
    for (const RasterEvent& ev : raster) {
        if (ev.step >= steps)
            throw SimError("raster event outside the requested step range");
        rs.counts[layout.unit_of_gid(ev.gid).id][ev.step] += 1;
    }
    return rs;
}

void write_raster_csv(const std::vector<RasterEvent>& raster, std::ostream& out) {
    out << "step,worker,local,gid\n";
    for (const RasterEvent& ev : raster)
        out << ev.step << ',' << ev.worker << ',' << ev.local << ',' << ev.gid
            << '\n';
}

} // namespace voxsim
