#pragma once

// Sequential discrete-event kernel and a repeater-chain model executed on it.
// The chain model is the one sampled by montecarlo.hpp; only the machinery differs.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "qnet/chain.hpp"
#include "qnet/error.hpp"
#include "qnet/format.hpp"
#include "qnet/montecarlo.hpp"
#include "qnet/parallel.hpp"

namespace qnet {

enum class EventKind { GenAttempt, SwapResolve, DistillResolve, CutoffExpire, End };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::GenAttempt: return "GenAttempt";
        case EventKind::SwapResolve: return "SwapResolve";
        case EventKind::DistillResolve: return "DistillResolve";
        case EventKind::CutoffExpire: return "CutoffExpire";
        case EventKind::End: return "End";
    }
    return "?";
}

/// Expiries run before anything else scheduled for the same tick.
inline int priority_of(EventKind k) {
    switch (k) {
        case EventKind::CutoffExpire: return 0;
        case EventKind::GenAttempt: return 1;
        case EventKind::SwapResolve:
        case EventKind::DistillResolve: return 2;
        case EventKind::End: return 3;
    }
    return 3;
}

struct Event {
    long time = 0;
    std::uint64_t seq = 0;  // assigned by schedule()
    EventKind kind = EventKind::End;
    std::size_t level = 0;     // tree level (GenAttempt: 0)
    std::size_t position = 0;  // slot within the level (GenAttempt: segment slot)
    std::uint64_t link = 0;    // CutoffExpire: id of the link to drop

    /// "time seq kind payload"
    std::string trace_line() const {
        std::string s = std::to_string(time) + ' ' + std::to_string(seq) + ' ' + to_string(kind);
        switch (kind) {
            case EventKind::GenAttempt: s += " segment=" + std::to_string(position); break;
            case EventKind::SwapResolve:
            case EventKind::DistillResolve:
                s += " level=" + std::to_string(level) + " position=" + std::to_string(position);
                break;
            case EventKind::CutoffExpire:
                s += " level=" + std::to_string(level) + " position=" + std::to_string(position) +
                     " link=" + std::to_string(link);
                break;
            case EventKind::End: s += " -"; break;
        }
        return s;
    }
};

class EventQueue {
public:
    long clock() const { return clock_; }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }

    /// Returns the sequence number given to the event.
    std::uint64_t schedule(Event e) {
        if (e.time < clock_)
            throw DomainError("event scheduled in the past (t=" + std::to_string(e.time) +
                              " < clock " + std::to_string(clock_) + ")");
        e.seq = next_seq_++;
        heap_.push(e);
        return e.seq;
    }

    /// Removes the earliest event and advances the clock to it.
    Event pop_next() {
        if (heap_.empty()) throw EmptyQueueError("event queue is empty");
        Event e = heap_.top();
        heap_.pop();
        clock_ = e.time;
        return e;
    }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.time != b.time) return a.time > b.time;
            const int pa = priority_of(a.kind), pb = priority_of(b.kind);
            if (pa != pb) return pa > pb;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<Event, std::vector<Event>, Later> heap_;
    long clock_ = 0;
    std::uint64_t next_seq_ = 0;
};

struct RunReport {
    long clock = 0;
    std::size_t events = 0;
    Event last;
};

/// Pop, advance, perform, check termination; repeated until `done(event)`.
template <class Perform, class Done>
RunReport run_until(EventQueue& q, Perform&& perform, Done&& done) {
    RunReport r;
    for (;;) {
        if (q.empty()) throw EmptyQueueError("event queue drained before the stop condition");
        Event e = q.pop_next();
        perform(e);
        ++r.events;
        r.clock = q.clock();
        r.last = e;
        if (done(e)) return r;
    }
}

struct DesOptions {
    long delay = 0;            // classical communication time per swap
    bool hash_trace = false;
    std::ostream* trace = nullptr;
};

struct DesRun {
    SampleRecord record{};
    std::uint64_t trace_hash = 0;  // 0 unless hashing or tracing
    std::size_t events = 0;
};

namespace des_detail {

struct Slot {
    bool present = false;
    long birth = 0;
    double w = 0.0;
    std::uint64_t id = 0;
};

struct Pending {
    long paired_at = 0;
    double w1 = 0.0, w2 = 0.0;  // decayed to paired_at
};

class ChainSimulation {
public:
    ChainSimulation(const ChainParams& p, const Protocol& pr, std::uint64_t seed, const DesOptions& opt)
        : p_(p), pr_(pr), opt_(opt), rng_(seed), d_(p.decay_per_step()), levels_(pr.steps.size()) {
        slots_.resize(levels_ + 1);
        pending_.resize(levels_ + 1);
        for (std::size_t k = 0; k <= levels_; ++k) {
            slots_[k].resize(std::size_t{1} << (levels_ - k));
            pending_[k].resize(slots_[k].size());
        }
    }

    DesRun run() {
        restart(levels_, 0, 0);
        Fnv1a hash;
        const bool tracing = opt_.hash_trace || opt_.trace;
        auto report = run_until(
            queue_,
            [&](const Event& e) {
                if (tracing) {
                    const std::string line = e.trace_line() + '\n';
                    hash.update(line);
                    if (opt_.trace) *opt_.trace << line;
                }
                perform(e);
            },
            [](const Event& e) { return e.kind == EventKind::End; });
        const Slot& top = slots_[levels_][0];
        return {{top.birth, top.w}, tracing ? hash.digest() : 0, report.events};
    }

private:
    void perform(const Event& e) {
        switch (e.kind) {
            case EventKind::GenAttempt: place(0, e.position, e.time, p_.w0); break;
            case EventKind::SwapResolve:
            case EventKind::DistillResolve: resolve(e); break;
            case EventKind::CutoffExpire: expire(e); break;
            case EventKind::End: break;
        }
    }

    // Fresh generation on every segment under (level, pos), starting after tick `origin`.
    void restart(std::size_t level, std::size_t pos, long origin) {
        const std::size_t width = std::size_t{1} << level;
        for (std::size_t i = pos * width; i < (pos + 1) * width; ++i) {
            Event e;
            e.kind = EventKind::GenAttempt;
            e.position = i;
            e.time = origin + rng_.geometric(p_.p_g);
            queue_.schedule(e);
        }
    }

    void place(std::size_t level, std::size_t pos, long t, double w) {
        Slot& s = slots_[level][pos];
        if (s.present) throw SolverError("registry slot already holds a link");
        s = {true, t, w, ++next_link_};
        if (level == levels_) {
            Event e;
            e.kind = EventKind::End;
            e.time = t;
            queue_.schedule(e);
            return;
        }
        Slot& sib = slots_[level][pos ^ 1];
        if (!sib.present) {
            if (p_.tau) {
                Event e;
                e.kind = EventKind::CutoffExpire;
                e.level = level;
                e.position = pos;
                e.link = s.id;
                e.time = t + *p_.tau + 1;
                queue_.schedule(e);
            }
            return;
        }
        pair_up(level, pos & ~std::size_t{1}, t);
    }

    // Both children of a parent slot are present at time t: consume them.
    void pair_up(std::size_t level, std::size_t left, long t) {
        Slot& a = slots_[level][left];
        Slot& b = slots_[level][left + 1];
        if (p_.tau && (t - a.birth > *p_.tau || t - b.birth > *p_.tau))
            throw SolverError("link consumed beyond the cut-off");
        Pending& pd = pending_[level + 1][left / 2];
        pd.paired_at = t;
        pd.w1 = a.w * std::pow(d_, static_cast<double>(t - a.birth));
        pd.w2 = b.w * std::pow(d_, static_cast<double>(t - b.birth));
        a.present = b.present = false;

        const Step step = pr_.steps[level];
        Event e;
        e.kind = step == Step::Swap ? EventKind::SwapResolve : EventKind::DistillResolve;
        e.level = level + 1;
        e.position = left / 2;
        e.time = t + (step == Step::Swap ? opt_.delay : 0);
        queue_.schedule(e);
    }

    void resolve(const Event& e) {
        const Pending& pd = pending_[e.level][e.position];
        double w = 0.0;
        bool ok = false;
        if (e.kind == EventKind::SwapResolve) {
            ok = rng_.bernoulli(p_.p_s);
            w = swap_quality(pd.w1, pd.w2) * std::pow(d_, static_cast<double>(e.time - pd.paired_at));
        } else {
            const auto o = distill_step(pd.w1, pd.w2);
            ok = rng_.bernoulli(o.success_prob);
            w = o.w;
        }
        if (ok) place(e.level, e.position, e.time, w);
        else restart(e.level, e.position, e.time);
    }

    void expire(const Event& e) {
        Slot& s = slots_[e.level][e.position];
        if (!s.present || s.id != e.link) return;  // already consumed
        s.present = false;
        restart(e.level, e.position, e.time - 1);
    }

    const ChainParams& p_;
    const Protocol& pr_;
    const DesOptions& opt_;
    SampleRng rng_;
    double d_;
    std::size_t levels_;
    EventQueue queue_;
    std::vector<std::vector<Slot>> slots_;
    std::vector<std::vector<Pending>> pending_;
    std::uint64_t next_link_ = 0;
};

}  // namespace des_detail

inline void check_des_setup(const ChainParams& params, const Protocol& protocol, const DesOptions& opt) {
    params.validate();
    protocol.check_against(params);
    if (opt.delay < 0) throw DomainError("delay must be >= 0");
}

inline DesRun simulate_chain_run(const ChainParams& params, const Protocol& protocol, std::uint64_t seed,
                                 const DesOptions& opt = {}) {
    check_des_setup(params, protocol, opt);
    return des_detail::ChainSimulation(params, protocol, seed, opt).run();
}

inline SampleRecord simulate_chain(const ChainParams& params, const Protocol& protocol, std::uint64_t seed,
                                   const DesOptions& opt = {}) {
    return simulate_chain_run(params, protocol, seed, opt).record;
}

/// One simulation per sample, seeded as in sample_batch.
inline std::vector<SampleRecord> simulate_batch(const ChainParams& params, const Protocol& protocol,
                                                std::size_t n_samples, std::uint64_t seed,
                                                const DesOptions& opt = {}, unsigned workers = worker_count()) {
    check_des_setup(params, protocol, opt);
    if (n_samples < 1) throw DomainError("n_samples must be >= 1");
    if (opt.trace) throw DomainError("trace output is only available for a single run");
    std::vector<SampleRecord> out(n_samples);
    DesOptions plain = opt;
    plain.hash_trace = false;
    parallel_for(
        n_samples,
        [&](std::size_t i) {
            out[i] = des_detail::ChainSimulation(params, protocol, substream_seed(seed, i), plain).run().record;
        },
        workers);
    return out;
}

inline BatchSummary run_des_batch(const ChainParams& params, const Protocol& protocol, std::size_t n_samples,
                                  std::uint64_t seed, const DesOptions& opt = {},
                                  unsigned workers = worker_count()) {
    return summarize(simulate_batch(params, protocol, n_samples, seed, opt, workers), seed);
}

}  // namespace qnet
