#include "voxsim/engine.hpp"
#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <map>
#include <mutex>
#include <thread>

namespace voxsim {

namespace {

using Clock = std::chrono::steady_clock;
using TimePoint = Clock::time_point;

int64_t ns_between(TimePoint a, TimePoint b) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
}

// One synapse as seen from its source: deliveries into the destination
// worker's pending buckets.
struct DeliverEntry {
    uint32_t dst = 0;
    uint8_t cls = 0;
    int32_t wq_fast = 0;
    int32_t wq_slow = 0;
};

struct Delivery {
    std::vector<uint64_t> offset;          // per source-local neuron, +1
    std::vector<DeliverEntry> entries;
};

struct OutBatch {
    uint16_t dst = 0;
    bool inter = false;
    std::vector<unsigned char> bytes;
};

struct SendJob {
    uint32_t step = 0;                     // absolute
    uint32_t row = 0;                      // rel_step*workers + w, or UINT32_MAX
    TimePoint t0;
    std::vector<OutBatch> batches;
    bool poison = false;
};

struct Arrival {
    uint16_t src = 0;
    TimePoint when;
    std::vector<unsigned char> bytes;
};

struct StepSlot {
    uint32_t received = 0;
    std::vector<Arrival> arrivals;
};

} // namespace

struct SimInstance::Impl {
    // --- static ---------------------------------------------------------
    uint16_t workers = 1;
    uint32_t voxel_count = 0;
    uint32_t unit_count = 0;
    uint64_t seed = 0;
    SimOptions opt;
    float dtf = 1.0f;
    std::vector<uint16_t> unit_worker;
    std::vector<uint32_t> unit_local_base;
    std::vector<uint32_t> unit_neurons;
    std::vector<uint64_t> unit_total_neurons;   // per unit (for rates)

    struct Worker {
        uint16_t id = 0;
        uint32_t n = 0;
        // per neuron, constant
        std::vector<float> dt_over_c, g_leak, e_leak, v_th, v_reset;
        std::vector<uint32_t> refrac_steps;
        std::vector<uint64_t> gid, ou_key, dst_mask;
        std::vector<uint32_t> unit, voxel;
        std::vector<float> ou_mu, ou_sigma, ou_tau;
        std::array<std::vector<float>, kReceptors> tau, omega, g, e_rev;
        std::vector<Delivery> inbound;     // per source worker
        // per neuron, dynamic
        std::vector<float> v, i_syn, i_ou;
        std::vector<uint32_t> refrac_left;
        std::array<std::vector<float>, kReceptors> j;
        std::vector<int64_t> pend_cur, pend_prev;   // n * kReceptors
        // bookkeeping
        FlopCounters flops;
        std::vector<std::pair<uint32_t, size_t>> probes;   // (local, slot)
        std::map<uint32_t, std::vector<uint32_t>> forced;  // abs step -> locals
        // threaded-mode channels
        std::mutex send_mu;
        std::condition_variable send_cv;
        std::deque<SendJob> send_q;
        std::mutex slot_mu;
        std::condition_variable slot_cv;
        std::map<uint32_t, StepSlot> slots;
        // per-advance scratch
        std::vector<uint32_t> spikes;
        std::vector<RasterEvent> raster;
        std::vector<std::vector<uint32_t>> per_dst;
        TimePoint t0;
    };
    std::vector<std::unique_ptr<Worker>> ws;
    std::shared_ptr<Transport> transport;

    // --- run state ------------------------------------------------------
    uint32_t step_done = 0;                // absolute steps completed
    std::atomic<bool> abort{false};
    std::mutex err_mu;
    std::exception_ptr err;

    // per-advance shared
    uint32_t adv_steps = 0;
    uint32_t adv_start = 0;
    std::vector<StepTimings> rows;
    std::vector<ProbeTrace> probes;
    RateSeries rates;

    void fail(std::exception_ptr e) {
        {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!err) err = e;
        }
        abort.store(true);
        for (auto& w : ws) {
            w->send_cv.notify_all();
            w->slot_cv.notify_all();
        }
    }

    void check_abort() const {
        if (abort.load()) throw SimError("simulation aborted by another worker");
    }

    uint16_t node_of(uint16_t w) const { return w / opt.workers_per_node; }

    // ---------------------------------------------------------------- load
    void load(const NetworkTables& tables, const NetworkLayout& layout);
    void build_delivery(const NetworkTables& tables);

    // --------------------------------------------------------------- phases
    void phase_a(Worker& w, uint32_t abs_step, uint32_t rel_step);
    std::vector<OutBatch> phase_b(Worker& w, uint32_t abs_step);
    void phase_c(Worker& w);
    void phase_d(Worker& w, uint32_t abs_step, uint32_t rel_step,
                 std::vector<Arrival>& arrivals);
    void phase_e(Worker& w, uint32_t abs_step, uint32_t rel_step,
                 std::vector<Arrival>& arrivals);

    void deliver(Worker& w, uint16_t src_worker, uint32_t src_local);
    void run_sender(Worker& w, SendJob job);

    // ------------------------------------------------------------- drivers
    void advance_threads(uint32_t steps);
    void advance_loopback(uint32_t steps);
    void compute_main(Worker& w);
    void sender_main(Worker& w);
    void receiver_main(Worker& w);

    StepTimings* row(uint32_t rel_step, uint16_t w) {
        if (!opt.record_timings) return nullptr;
        return &rows[static_cast<size_t>(rel_step) * workers + w];
    }
};

void SimInstance::Impl::load(const NetworkTables& tables,
                             const NetworkLayout& layout) {
    if (tables.workers.empty()) throw ConfigError("no worker tables");
    workers = static_cast<uint16_t>(tables.workers.size());
    if (workers > 64) throw ConfigError("worker counts above 64 are unsupported");
    voxel_count = static_cast<uint32_t>(layout.voxels.size());
    unit_count = layout.unit_count();
    seed = tables.workers[0].seed;
    unit_worker = tables.unit_worker;
    unit_local_base = tables.unit_local_base;
    if (unit_worker.size() != unit_count || unit_local_base.size() != unit_count)
        throw ConfigError("tables and layout disagree on unit count");
    unit_neurons.resize(unit_count);
    unit_total_neurons.resize(unit_count);
    for (uint32_t u = 0; u < unit_count; ++u) {
        unit_neurons[u] = layout.units[u].neurons;
        unit_total_neurons[u] = layout.units[u].neurons;
    }

    if (opt.dt_ms <= 0.0) throw ConfigError("dt must be positive");
    if (opt.workers_per_node == 0)
        throw ConfigError("workers_per_node must be >= 1");
    if (opt.scheduler != "threads" && opt.scheduler != "loopback")
        throw ConfigError("unknown scheduler: " + opt.scheduler);
    dtf = static_cast<float>(opt.dt_ms);
    for (const Injection& inj : opt.injections) {
        if (inj.voxel >= voxel_count)
            throw ConfigError("injection voxel out of range");
        if (inj.to_step < inj.from_step)
            throw ConfigError("injection interval is reversed");
    }

    ws.clear();
    for (uint16_t wi = 0; wi < workers; ++wi) {
        const WorkerTable& t = tables.workers[wi];
        if (t.worker != wi || t.worker_count != workers)
            throw ConfigError("worker table ids are inconsistent");
        auto wp = std::make_unique<Worker>();
        Worker& w = *wp;
        w.id = wi;
        w.n = static_cast<uint32_t>(t.neurons.size());
        auto res = [&](auto& vec) { vec.resize(w.n); };
        res(w.dt_over_c); res(w.g_leak); res(w.e_leak); res(w.v_th);
        res(w.v_reset); res(w.refrac_steps); res(w.gid); res(w.ou_key);
        res(w.dst_mask); res(w.unit); res(w.voxel); res(w.ou_mu);
        res(w.ou_sigma); res(w.ou_tau); res(w.v); res(w.i_syn); res(w.i_ou);
        res(w.refrac_left);
        for (int r = 0; r < kReceptors; ++r) {
            res(w.tau[r]); res(w.omega[r]); res(w.g[r]); res(w.e_rev[r]);
            res(w.j[r]);
        }
        w.pend_cur.assign(static_cast<size_t>(w.n) * kReceptors, 0);
        w.pend_prev.assign(static_cast<size_t>(w.n) * kReceptors, 0);
        for (uint32_t i = 0; i < w.n; ++i) {
            const NeuronRecord& r = t.neurons[i];
            NeuronParams np;
            np.capacitance = r.capacitance;
            np.g_leak = r.g_leak;
            np.e_leak = r.e_leak;
            np.v_threshold = r.v_threshold;
            np.v_reset = r.v_reset;
            np.refractory_steps = r.refractory_steps;
            np.e_rev = r.e_rev;
            np.tau = r.tau;
            np.omega = r.omega;
            np.g = r.g;
            np.validate(dtf);
            w.dt_over_c[i] = dtf / r.capacitance;
            w.g_leak[i] = r.g_leak;
            w.e_leak[i] = r.e_leak;
            w.v_th[i] = r.v_threshold;
            w.v_reset[i] = r.v_reset;
            w.refrac_steps[i] = r.refractory_steps;
            w.gid[i] = r.gid;
            w.ou_key[i] = mix_key(seed, rngstream::ou_noise, r.gid);
            w.dst_mask[i] = r.dst_mask;
            w.unit[i] = r.unit;
            w.voxel[i] = r.voxel;
            w.ou_mu[i] = r.ou_mean;
            w.ou_sigma[i] = r.ou_sigma;
            w.ou_tau[i] = r.ou_tau;
            for (int rc = 0; rc < kReceptors; ++rc) {
                w.tau[rc][i] = r.tau[rc];
                w.omega[rc][i] = r.omega[rc];
                w.g[rc][i] = r.g[rc];
                w.e_rev[rc][i] = r.e_rev[rc];
                w.j[rc][i] = 0.0f;
            }
            w.v[i] = r.v_init;
            w.i_syn[i] = 0.0f;
            w.i_ou[i] = r.ou_mean;       // stationary start
            w.refrac_left[i] = 0;
            if (r.unit >= unit_count || r.voxel >= voxel_count)
                throw ConfigError("neuron record references unknown unit/voxel");
        }
        w.per_dst.resize(workers);
        ws.push_back(std::move(wp));
    }

    build_delivery(tables);

    // Resolve probes and forced spikes to (worker, local).
    auto locate = [&](uint64_t gid) -> std::pair<uint16_t, uint32_t> {
        const Unit& u = layout.unit_of_gid(gid);
        return {unit_worker[u.id],
                unit_local_base[u.id] + static_cast<uint32_t>(gid - u.gid_base)};
    };
    for (size_t s = 0; s < opt.probe_gids.size(); ++s) {
        auto [pw, pl] = locate(opt.probe_gids[s]);
        ws[pw]->probes.emplace_back(pl, s);
    }
    for (const ForcedSpike& f : opt.forced_spikes) {
        auto [fw, fl] = locate(f.gid);
        auto& list = ws[fw]->forced[f.step];
        list.insert(std::lower_bound(list.begin(), list.end(), fl), fl);
    }

    transport = make_transport(opt.transport, workers);
}

void SimInstance::Impl::build_delivery(const NetworkTables& tables) {
    // Invert each worker's in-rows into per-source-worker delivery spans.
    for (uint16_t wi = 0; wi < workers; ++wi) {
        Worker& w = *ws[wi];
        const WorkerTable& t = tables.workers[wi];
        w.inbound.resize(workers);
        std::vector<std::vector<uint64_t>> counts(workers);
        for (uint16_t s = 0; s < workers; ++s)
            counts[s].assign(tables.workers[s].neurons.size() + 1, 0);
        for (const SynEntry& e : t.synapses) {
            if (e.src_worker >= workers ||
                e.src_local >= tables.workers[e.src_worker].neurons.size())
                throw SimError("synapse entry references a nonexistent source");
            counts[e.src_worker][e.src_local + 1] += 1;
        }
        for (uint16_t s = 0; s < workers; ++s) {
            auto& c = counts[s];
            for (size_t i = 1; i < c.size(); ++i) c[i] += c[i - 1];
            w.inbound[s].offset = c;
            w.inbound[s].entries.resize(c.back());
        }
        std::vector<std::vector<uint64_t>> cursor(workers);
        for (uint16_t s = 0; s < workers; ++s)
            cursor[s].assign(tables.workers[s].neurons.size(), 0);
        for (uint32_t n = 0; n < w.n; ++n) {
            for (uint64_t k = t.row_base[n]; k < t.row_base[n + 1]; ++k) {
                const SynEntry& e = t.synapses[k];
                Delivery& d = w.inbound[e.src_worker];
                uint64_t at = d.offset[e.src_local] + cursor[e.src_worker][e.src_local]++;
                d.entries[at] = {n, e.cls, e.wq_fast, e.wq_slow};
            }
        }
    }
    // Destination masks must agree with the actual tables.
    for (uint16_t s = 0; s < workers; ++s) {
        Worker& src = *ws[s];
        for (uint16_t d = 0; d < workers; ++d) {
            const Delivery& del = ws[d]->inbound[s];
            for (uint32_t l = 0; l < src.n; ++l) {
                bool has = del.offset[l + 1] > del.offset[l];
                bool bit = (src.dst_mask[l] >> d) & 1;
                if (has != bit)
                    throw SimError("destination mask inconsistent with tables "
                                   "(worker " + std::to_string(s) + " neuron " +
                                   std::to_string(l) + " -> worker " +
                                   std::to_string(d) + ")");
            }
        }
    }
}

// --------------------------------------------------------------------- A, B, C

void SimInstance::Impl::phase_a(Worker& w, uint32_t abs_step, uint32_t rel_step) {
    w.t0 = Clock::now();
    w.spikes.clear();

    // Active injections for this step, by voxel.
    static thread_local std::vector<float> vox_inj;
    bool has_inj = false;
    for (const Injection& inj : opt.injections) {
        if (inj.from_step <= abs_step && abs_step < inj.to_step) {
            if (!has_inj) vox_inj.assign(voxel_count, 0.0f);
            has_inj = true;
            vox_inj[inj.voxel] += inj.current_pa;
        }
    }

    for (uint32_t n = 0; n < w.n; ++n) {
        if (w.refrac_left[n] > 0) {
            --w.refrac_left[n];
            w.v[n] = w.v_reset[n];
            continue;
        }
        float i_noise = w.i_ou[n];
        if (has_inj && vox_inj[w.voxel[n]] != 0.0f)
            i_noise += vox_inj[w.voxel[n]];
        float nv = membrane_kernel(w.v[n], w.dt_over_c[n], w.g_leak[n],
                                   w.e_leak[n], w.i_syn[n], i_noise);
        if (!std::isfinite(nv))
            throw SimError("membrane potential diverged (neuron " +
                           std::to_string(w.gid[n]) + ", step " +
                           std::to_string(abs_step) + ")");
        if (nv >= w.v_th[n]) {
            w.v[n] = w.v_reset[n];
            w.refrac_left[n] = w.refrac_steps[n];
            w.spikes.push_back(n);
        } else {
            w.v[n] = nv;
        }
    }
    // Uniform per-neuron accounting, refractory included.
    w.flops.membrane += static_cast<uint64_t>(kFlopsMembrane) * w.n;

    auto forced = w.forced.find(abs_step);
    if (forced != w.forced.end()) {
        for (uint32_t l : forced->second) {
            auto it = std::lower_bound(w.spikes.begin(), w.spikes.end(), l);
            if (it != w.spikes.end() && *it == l) continue;   // already fired
            w.v[l] = w.v_reset[l];
            w.refrac_left[l] = w.refrac_steps[l];
            w.spikes.insert(it, l);
        }
    }

    if (opt.record_raster)
        for (uint32_t n : w.spikes)
            w.raster.push_back({abs_step, w.id, n, w.gid[n]});
    for (uint32_t n : w.spikes)
        rates.counts[w.unit[n]][rel_step] += 1;
    for (auto [local, slot] : w.probes)
        probes[slot].v[rel_step] = w.v[local];

    if (StepTimings* r = row(rel_step, w.id)) {
        r->step = abs_step;
        r->worker = w.id;
        r->spikes = static_cast<uint32_t>(w.spikes.size());
        r->t1 = ns_between(w.t0, Clock::now());
    }
}

std::vector<OutBatch> SimInstance::Impl::phase_b(Worker& w, uint32_t abs_step) {
    for (auto& v : w.per_dst) v.clear();
    for (uint32_t n : w.spikes) {
        uint64_t mask = w.dst_mask[n];
        while (mask) {
            int d = std::countr_zero(mask);
            mask &= mask - 1;
            if (d != w.id) w.per_dst[d].push_back(n);
        }
    }
    std::vector<OutBatch> out;
    out.reserve(workers - 1);
    for (uint16_t k = 1; k < workers; ++k) {
        uint16_t dst = static_cast<uint16_t>((w.id + k) % workers);
        OutBatch b;
        b.dst = dst;
        b.inter = node_of(w.id) != node_of(dst);
        b.bytes = encode_batch(abs_step, w.id, dst, w.per_dst[dst]);
        out.push_back(std::move(b));
    }
    return out;
}

void SimInstance::Impl::phase_c(Worker& w) {
    for (uint32_t n : w.spikes)
        if ((w.dst_mask[n] >> w.id) & 1) deliver(w, w.id, n);
}

void SimInstance::Impl::deliver(Worker& w, uint16_t src_worker,
                                uint32_t src_local) {
    const Delivery& d = w.inbound[src_worker];
    uint64_t from = d.offset[src_local], to = d.offset[src_local + 1];
    for (uint64_t k = from; k < to; ++k) {
        const DeliverEntry& e = d.entries[k];
        size_t base = static_cast<size_t>(e.dst) * kReceptors;
        if (e.cls == 0) {
            w.pend_cur[base + AMPA] += e.wq_fast;
            w.pend_cur[base + NMDA] += e.wq_slow;
        } else {
            w.pend_cur[base + GABAA] += e.wq_fast;
            w.pend_cur[base + GABAB] += e.wq_slow;
        }
    }
    uint64_t adds = 2 * (to - from);
    if (src_worker == w.id)
        w.flops.gating_inner += adds;
    else
        w.flops.gating_outer += adds;
}

// --------------------------------------------------------------------- D, E

void SimInstance::Impl::phase_d(Worker& w, uint32_t abs_step, uint32_t rel_step,
                                std::vector<Arrival>& arrivals) {
    TimePoint wait_start = Clock::now();
    arrivals.clear();
    if (workers > 1) {
        std::unique_lock<std::mutex> lock(w.slot_mu);
        int64_t waited_ms = 0;
        for (;;) {
            auto it = w.slots.find(abs_step);
            if (it != w.slots.end() &&
                it->second.received == static_cast<uint32_t>(workers - 1)) {
                arrivals = std::move(it->second.arrivals);
                w.slots.erase(it);
                break;
            }
            if (abort.load())
                throw SimError("simulation aborted while waiting on the step barrier");
            if (w.slot_cv.wait_for(lock, std::chrono::milliseconds(50)) ==
                std::cv_status::timeout) {
                waited_ms += 50;
                if (opt.recv_timeout_ms > 0 && waited_ms >= opt.recv_timeout_ms)
                    throw SimError("step barrier timed out on worker " +
                                   std::to_string(w.id) + " at step " +
                                   std::to_string(abs_step));
            }
        }
    }
    if (StepTimings* r = row(rel_step, w.id)) {
        r->t2 = ns_between(w.t0, Clock::now());
        // Receive anchors: the span from wait start to the last arrival.
        // Batches that were already here when the wait began cost nothing.
        std::sort(arrivals.begin(), arrivals.end(),
                  [](const Arrival& a, const Arrival& b) { return a.when < b.when; });
        int64_t t10 = ns_between(w.t0, wait_start);
        int64_t prev = t10, last = t10;
        for (const Arrival& a : arrivals) {
            int64_t at = ns_between(w.t0, a.when);
            int64_t dur = std::max<int64_t>(0, at - prev);
            if (node_of(a.src) != node_of(w.id))
                r->recv_inter_ns += dur;
            else
                r->recv_intra_ns += dur;
            prev = std::max(prev, at);
            last = prev;
            uint64_t sz = a.bytes.size();
            if (node_of(a.src) != node_of(w.id))
                r->bytes_recv_inter += sz;
            else
                r->bytes_recv_intra += sz;
        }
        r->t10 = t10;
        r->t11 = last;
        // Copy markers: zero-duration anchors at the hand-off points.
        r->t4 = r->t5 = r->t1;
        r->t6 = r->t7 = r->t2;
    }
}

void SimInstance::Impl::phase_e(Worker& w, uint32_t abs_step, uint32_t rel_step,
                                std::vector<Arrival>& arrivals) {
    for (const Arrival& a : arrivals) {
        DecodedBatch b = decode_batch(a.bytes);
        if (b.step != abs_step || b.dst != w.id)
            throw SimError("spike batch routed to the wrong step/worker");
        for (uint32_t id : b.ids) {
            if (id >= ws[b.src]->n)
                throw SimError("spike batch names a nonexistent neuron");
            deliver(w, b.src, id);
        }
    }

    for (uint32_t n = 0; n < w.n; ++n) {
        size_t base = static_cast<size_t>(n) * kReceptors;
        float i = 0.0f;
        for (int rc = 0; rc < kReceptors; ++rc) {
            float pending = dequantize_weight(w.pend_prev[base + rc]);
            w.j[rc][n] = gating_kernel(w.j[rc][n], dtf, w.tau[rc][n],
                                       w.omega[rc][n], pending);
            w.pend_prev[base + rc] = 0;
        }
        for (int rc = 0; rc < kReceptors; ++rc)
            i += w.g[rc][n] * w.j[rc][n] * (w.e_rev[rc][n] - w.v[n]);
        w.i_syn[n] = i;
        float xi = w.ou_sigma[n] > 0
                       ? static_cast<float>(stream_normal(w.ou_key[n], abs_step))
                       : 0.0f;
        OuParams p;
        p.mean = w.ou_mu[n];
        p.sigma = w.ou_sigma[n];
        p.tau = w.ou_tau[n];
        w.i_ou[n] = ou_kernel(w.i_ou[n], dtf, p, xi);
    }
    w.flops.gating_decay += static_cast<uint64_t>(kFlopsGatingDecay) * w.n;
    w.flops.current += static_cast<uint64_t>(kFlopsSynCurrent) * w.n;
    std::swap(w.pend_cur, w.pend_prev);   // prev was zeroed above

    for (auto [local, slot] : w.probes)
        probes[slot].i_syn[rel_step] = w.i_syn[local];
    if (StepTimings* r = row(rel_step, w.id))
        r->t3 = ns_between(w.t0, Clock::now());
}

void SimInstance::Impl::run_sender(Worker& w, SendJob job) {
    TimePoint prev = Clock::now();
    int64_t t8 = ns_between(job.t0, prev);
    int64_t intra = 0, inter = 0;
    uint64_t b_intra = 0, b_inter = 0;
    for (OutBatch& b : job.batches) {
        uint64_t sz = b.bytes.size();
        transport->send(w.id, b.dst, std::move(b.bytes));
        TimePoint now = Clock::now();
        int64_t dur = ns_between(prev, now);
        if (b.inter) {
            inter += dur;
            b_inter += sz;
        } else {
            intra += dur;
            b_intra += sz;
        }
        prev = now;
    }
    if (opt.record_timings && job.row != UINT32_MAX) {
        StepTimings& r = rows[job.row];
        r.t8 = t8;
        r.t9 = ns_between(job.t0, prev);
        r.send_intra_ns = intra;
        r.send_inter_ns = inter;
        r.bytes_sent_intra = b_intra;
        r.bytes_sent_inter = b_inter;
    }
}

// ------------------------------------------------------------------ drivers

void SimInstance::Impl::sender_main(Worker& w) {
    try {
        for (;;) {
            SendJob job;
            {
                std::unique_lock<std::mutex> lock(w.send_mu);
                w.send_cv.wait(lock, [&] { return !w.send_q.empty() || abort.load(); });
                if (abort.load()) return;
                job = std::move(w.send_q.front());
                w.send_q.pop_front();
            }
            if (job.poison) return;
            run_sender(w, job);
        }
    } catch (...) {
        fail(std::current_exception());
    }
}

void SimInstance::Impl::receiver_main(Worker& w) {
    try {
        uint64_t remaining =
            static_cast<uint64_t>(workers - 1) * adv_steps;
        int64_t idle_ms = 0;
        while (remaining > 0) {
            if (abort.load()) return;
            std::vector<unsigned char> bytes;
            uint16_t src = 0;
            if (!transport->recv(w.id, bytes, src, 50)) {
                idle_ms += 50;
                if (opt.recv_timeout_ms > 0 && idle_ms >= opt.recv_timeout_ms)
                    throw SimError("receive timed out on worker " +
                                   std::to_string(w.id));
                continue;
            }
            idle_ms = 0;
            if (bytes.size() < kBatchHeaderBytes)
                throw SimError("runt spike batch received");
            uint32_t step = get_le<uint32_t>(bytes.data());
            if (step < adv_start || step >= adv_start + adv_steps)
                throw SimError("spike batch for a step outside this run");
            Arrival a;
            a.src = src;
            a.when = Clock::now();
            a.bytes = std::move(bytes);
            {
                std::lock_guard<std::mutex> lock(w.slot_mu);
                StepSlot& slot = w.slots[step];
                slot.arrivals.push_back(std::move(a));
                slot.received += 1;
                if (slot.received == static_cast<uint32_t>(workers - 1))
                    w.slot_cv.notify_all();
            }
            remaining -= 1;
        }
    } catch (...) {
        fail(std::current_exception());
    }
}

void SimInstance::Impl::compute_main(Worker& w) {
    try {
        std::vector<Arrival> arrivals;
        for (uint32_t rel = 0; rel < adv_steps; ++rel) {
            check_abort();
            uint32_t abs_step = adv_start + rel;
            phase_a(w, abs_step, rel);
            SendJob job;
            job.step = abs_step;
            job.row = opt.record_timings
                          ? rel * workers + w.id
                          : UINT32_MAX;
            job.t0 = w.t0;
            job.batches = phase_b(w, abs_step);
            {
                std::lock_guard<std::mutex> lock(w.send_mu);
                w.send_q.push_back(std::move(job));
            }
            w.send_cv.notify_one();
            phase_c(w);
            phase_d(w, abs_step, rel, arrivals);
            phase_e(w, abs_step, rel, arrivals);
        }
        // Poison the sender once all jobs are queued behind it.
        SendJob poison;
        poison.poison = true;
        {
            std::lock_guard<std::mutex> lock(w.send_mu);
            w.send_q.push_back(std::move(poison));
        }
        w.send_cv.notify_one();
    } catch (...) {
        fail(std::current_exception());
    }
}

void SimInstance::Impl::advance_threads(uint32_t steps) {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers) * 3);
    for (auto& w : ws) {
        threads.emplace_back([this, &w] { receiver_main(*w); });
        threads.emplace_back([this, &w] { sender_main(*w); });
    }
    for (auto& w : ws)
        threads.emplace_back([this, &w] { compute_main(*w); });
    for (auto& t : threads) t.join();
    (void)steps;
}

void SimInstance::Impl::advance_loopback(uint32_t steps) {
    std::vector<std::vector<Arrival>> arrivals(workers);
    for (uint32_t rel = 0; rel < steps; ++rel) {
        uint32_t abs_step = adv_start + rel;
        for (auto& wp : ws) {
            Worker& w = *wp;
            phase_a(w, abs_step, rel);
            SendJob job;
            job.step = abs_step;
            job.row = opt.record_timings ? rel * workers + w.id : UINT32_MAX;
            job.t0 = w.t0;
            job.batches = phase_b(w, abs_step);
            run_sender(w, job);
            phase_c(w);
        }
        for (auto& wp : ws) {
            Worker& w = *wp;
            // Drain this step's batches; every send already happened.
            arrivals[w.id].clear();
            for (uint16_t k = 1; k < workers; ++k) {
                std::vector<unsigned char> bytes;
                uint16_t src = 0;
                if (!transport->try_recv(w.id, bytes, src))
                    throw SimError("loopback scheduler found an empty mailbox");
                Arrival a;
                a.src = src;
                a.when = Clock::now();
                a.bytes = std::move(bytes);
                std::lock_guard<std::mutex> lock(w.slot_mu);
                StepSlot& slot = w.slots[abs_step];
                slot.arrivals.push_back(std::move(a));
                slot.received += 1;
            }
            phase_d(w, abs_step, rel, arrivals[w.id]);
            phase_e(w, abs_step, rel, arrivals[w.id]);
        }
    }
}

// ----------------------------------------------------------------- interface

SimInstance::SimInstance(const NetworkTables& tables, const NetworkLayout& layout,
                         SimOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->opt = std::move(options);
    impl_->load(tables, layout);
}

SimInstance::~SimInstance() = default;

uint32_t SimInstance::current_step() const { return impl_->step_done; }

RunResult SimInstance::advance(uint32_t steps) {
    Impl& im = *impl_;
    if (im.abort.load())
        throw SimError("instance is in a failed state");
    RunResult out;
    im.adv_steps = steps;
    im.adv_start = im.step_done;
    im.rows.clear();
    if (im.opt.record_timings)
        im.rows.resize(static_cast<size_t>(steps) * im.workers);
    im.probes.assign(im.opt.probe_gids.size(), {});
    for (size_t s = 0; s < im.opt.probe_gids.size(); ++s) {
        im.probes[s].gid = im.opt.probe_gids[s];
        im.probes[s].v.assign(steps, 0.0f);
        im.probes[s].i_syn.assign(steps, 0.0f);
    }
    im.rates.steps = steps;
    im.rates.dt_ms = im.opt.dt_ms;
    im.rates.unit_neurons = im.unit_total_neurons;
    im.rates.counts.assign(im.unit_count, std::vector<uint32_t>(steps, 0));
    FlopCounters before;
    for (auto& w : im.ws) {
        before += w->flops;
        w->raster.clear();
    }

    if (steps > 0) {
        if (im.opt.scheduler == "threads")
            im.advance_threads(steps);
        else
            im.advance_loopback(steps);
    }
    if (im.err) {
        std::exception_ptr e = im.err;
        std::rethrow_exception(e);
    }
    im.step_done += steps;

    for (auto& w : im.ws) {
        out.flops += w->flops;
        if (im.opt.record_raster)
            out.raster.insert(out.raster.end(), w->raster.begin(), w->raster.end());
    }
    // Subtract the pre-advance tallies so the result covers this call only.
    out.flops.membrane -= before.membrane;
    out.flops.gating_inner -= before.gating_inner;
    out.flops.gating_outer -= before.gating_outer;
    out.flops.gating_decay -= before.gating_decay;
    out.flops.current -= before.current;
    std::sort(out.raster.begin(), out.raster.end(),
              [](const RasterEvent& a, const RasterEvent& b) {
                  if (a.step != b.step) return a.step < b.step;
                  if (a.worker != b.worker) return a.worker < b.worker;
                  return a.local < b.local;
              });
    uint64_t spikes = 0;
    for (const auto& unit_counts : im.rates.counts)
        for (uint32_t c : unit_counts) spikes += c;
    out.total_spikes = spikes;
    out.rates = std::move(im.rates);
    out.timings = std::move(im.rows);
    out.probes = std::move(im.probes);
    out.steps_done = steps;
    return out;
}

void SimInstance::set_conductances(uint32_t unit, int receptor,
                                   const std::vector<float>& values) {
    Impl& im = *impl_;
    if (unit >= im.unit_count) throw ConfigError("unit out of range");
    if (receptor < 0 || receptor >= kReceptors)
        throw ConfigError("receptor out of range");
    if (values.size() != im.unit_neurons[unit])
        throw ConfigError("conductance vector size does not match unit");
    Impl::Worker& w = *im.ws[im.unit_worker[unit]];
    uint32_t base = im.unit_local_base[unit];
    for (uint32_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0f) || !std::isfinite(values[i]))
            throw ConfigError("conductance values must be finite and >= 0");
        w.g[receptor][base + i] = values[i];
    }
}

std::vector<float> SimInstance::membrane_snapshot(uint16_t worker) const {
    if (worker >= impl_->workers) throw ConfigError("worker out of range");
    return impl_->ws[worker]->v;
}

RunResult run_simulation(const NetworkTables& tables, const NetworkLayout& layout,
                         const SimOptions& options) {
    SimInstance sim(tables, layout, options);
    return sim.advance(options.steps);
}

} // namespace voxsim
