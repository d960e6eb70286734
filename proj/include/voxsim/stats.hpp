#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxsim/layout.hpp"

namespace voxsim {

// Per-(step, worker) timing anchors, nanoseconds relative to the step start
// on the worker's compute thread. t4..t7 are zero-duration copy markers kept
// so the anchor table matches the eleven-anchor layout; t8/t9 live on the
// sender thread, t10/t11 on the receiver thread.
struct StepTimings {
    uint32_t step = 0;
    uint16_t worker = 0;
    int64_t t1 = 0;    // membrane update + spike detection done
    int64_t t2 = 0;    // all inbound batches for this step received
    int64_t t3 = 0;    // gating/current update done (= step end)
    int64_t t4 = 0, t5 = 0, t6 = 0, t7 = 0;   // copy markers
    int64_t t8 = 0, t9 = 0;                   // sending start / end
    int64_t t10 = 0, t11 = 0;                 // receiving start / last arrival
    // Durations split by locality; sums telescope so the split is exact:
    // send_intra_ns + send_inter_ns == t9 - t8, same for receive.
    int64_t send_intra_ns = 0, send_inter_ns = 0;
    int64_t recv_intra_ns = 0, recv_inter_ns = 0;
    uint64_t bytes_sent_intra = 0, bytes_sent_inter = 0;
    uint64_t bytes_recv_intra = 0, bytes_recv_inter = 0;
    uint32_t spikes = 0;

    int64_t sim_ns() const { return t3; }
    int64_t com_ns() const { return t1 + (t3 - t2); }
    int64_t send_ns() const { return send_intra_ns + send_inter_ns; }
    int64_t recv_ns() const { return recv_intra_ns + recv_inter_ns; }
};

// Floating-point operation tallies, five categories.
struct FlopCounters {
    uint64_t membrane = 0;       // voltage update
    uint64_t gating_inner = 0;   // presynaptic adds, local sources
    uint64_t gating_outer = 0;   // presynaptic adds, remote sources
    uint64_t gating_decay = 0;   // receptor decay update
    uint64_t current = 0;        // synaptic current evaluation

    uint64_t total() const {
        return membrane + gating_inner + gating_outer + gating_decay + current;
    }
    FlopCounters& operator+=(const FlopCounters& o);
};

// Aggregates over a trailing window of steps. For each duration label L:
//   T_L    = mean over steps of (max over workers)
//   That_L = mean over workers of (mean over steps)
// Imbalance indices use per-worker mean communication time:
//   T_max = max_i / mean_i,  T_std = population std_i / mean_i.
struct TimingReport {
    uint32_t window_steps = 0;
    uint16_t workers = 0;
    double t_sim = 0, t_com = 0, t_send = 0, t_rec = 0;              // seconds
    double that_sim = 0, that_com = 0, that_send = 0, that_rec = 0;  // seconds
    double t_send_intra = 0, t_send_inter = 0;
    double t_rec_intra = 0, t_rec_inter = 0;
    double t_max = 0, t_std = 0;
    std::vector<double> per_worker_com;                              // seconds
    uint64_t bytes_intra = 0, bytes_inter = 0;
    FlopCounters flops;
    double flops_per_sec = 0;     // total flops / sum of per-step max t3
    double steps_per_sec = 0;
};

TimingReport aggregate_timings(const std::vector<StepTimings>& rows,
                               uint16_t workers, uint32_t window_steps,
                               uint16_t workers_per_node,
                               const FlopCounters& flops);

void write_timings_csv(const std::vector<StepTimings>& rows, std::ostream& out);
void write_report(const TimingReport& r, std::ostream& out);

// --- firing rates -----------------------------------------------------------

struct RasterEvent {
    uint32_t step = 0;
    uint16_t worker = 0;
    uint32_t local = 0;
    uint64_t gid = 0;
};

// Spike counts per (unit, step) with rate helpers. rate(unit, step) in Hz =
// count / (neurons * dt_seconds).
struct RateSeries {
    uint32_t steps = 0;
    double dt_ms = 1.0;
    std::vector<uint64_t> unit_neurons;            // per unit
    std::vector<std::vector<uint32_t>> counts;     // [unit][step]

    double rate_hz(uint32_t unit, uint32_t step) const;
    double unit_mean_hz(uint32_t unit, uint32_t from_step) const;
    double network_mean_hz(uint32_t from_step) const;
    // Per-voxel population-summed counts for hemodynamic drive.
    std::vector<uint32_t> voxel_counts(const NetworkLayout& layout,
                                       uint32_t step) const;
};

RateSeries compute_rates(const std::vector<RasterEvent>& raster,
                         const NetworkLayout& layout, uint32_t steps,
                         double dt_ms);

void write_raster_csv(const std::vector<RasterEvent>& raster, std::ostream& out);

} // namespace voxsim
