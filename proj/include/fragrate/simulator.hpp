#pragma once

// Exact event-driven simulation of the interval fragmentation.
//
// Every live fragment splits at the (truncated) total dislocation rate,
// independently; by the memoryless property the next split in the whole
// population arrives at rate n_live * R and lands on a uniformly chosen
// fragment. No time discretization anywhere.
//
// Two observation modes for the window (a e^{-vt}, b e^{-vt}):
//   Classical: fragments are never removed; the window is tested at
//              checkpoints only. Fragments whose size drops below
//              a e^{-v t_max} * safety can never re-enter any window up to
//              t_max and are dropped with their subtrees (this is exact for
//              window counts because sizes only shrink and windows only move
//              down).
//   Confined:  a fragment must sit inside the window its entire life, and so
//              must its whole ancestry. A fragment of log-size l born at s is
//              good iff v s + l > log a (the window floor at birth; the floor
//              only moves away afterwards) and is deterministically killed at
//              t = (log b - l)/v when the ceiling catches up with it. Killed
//              fragments and their descendants never re-enter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "fragrate/dislocation.hpp"
#include "fragrate/errors.hpp"
#include "fragrate/rng.hpp"
#include "fragrate/scalefn.hpp"

namespace fragrate {

namespace detail {
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0, c_ = 0.0;
};
} // namespace detail

namespace detail {
struct TreeSimulatorImpl;
}

enum class SimMode { Classical, Confined };

struct TreeConfig {
    DislocationModel model;
    double v = 0.5;
    double a = 0.5;
    double b = 2.0;
    std::vector<double> checkpoints;  // ascending, within [0, t_max]
    SimMode mode = SimMode::Classical;
    double truncation_eps = 1e-4;     // xi-jump truncation for infinite activity
    std::uint64_t max_fragments = 10'000'000;  // live-population explosion guard
    double prune_safety = 1e-2;       // classical small-fragment prune factor
    bool prune_small = true;
    bool record_events = false;
    bool track_spine = false;
};

struct FragmentRecord {
    std::uint64_t id;
    std::uint64_t parent;  // id of the parent; root has parent == id
    double birth;
    double death;          // split or kill time; +inf if alive at the horizon
    double log_size;
};

// Live population state, visible to checkpoint callbacks.
class FragmentPopulation {
public:
    struct Item {
        double log_size;
        double birth;
        double kill_deadline;  // +inf in classical mode
        bool spine;
    };

    const std::vector<Item>& live() const { return live_; }
    double now() const { return now_; }
    double speed() const { return v_; }
    double log_a() const { return log_a_; }
    double log_b() const { return log_b_; }
    SimMode mode() const { return mode_; }

    // Index of the spine fragment in live(), or npos if the spine is gone.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t spine_index() const {
        for (std::size_t i = 0; i < live_.size(); ++i) {
            if (live_[i].spine) return i;
        }
        return npos;
    }

private:
    friend struct detail::TreeSimulatorImpl;
    std::vector<Item> live_;
    double now_ = 0.0, v_ = 0.0, log_a_ = 0.0, log_b_ = 0.0;
    SimMode mode_ = SimMode::Classical;
};

struct TreeResult {
    std::vector<double> checkpoints;
    std::vector<std::uint64_t> counts;        // #window fragments (classical) or #good (confined)
    std::vector<std::uint64_t> alive;         // live population size at checkpoint
    std::vector<double> masses;               // total live mass at checkpoint
    std::vector<double> spine_log_size;       // NaN once the spine is dead/killed
    double zeta = std::numeric_limits<double>::infinity();  // confined extinction time
    bool truncated = false;                   // population guard tripped; partial data
    std::uint64_t splits = 0;
    std::vector<FragmentRecord> log;          // filled when record_events
};

using CheckpointFn =
    std::function<void(std::size_t index, double t, const FragmentPopulation&)>;

namespace detail {

struct TreeSimulatorImpl {
    using DeadlineEntry = std::pair<double, std::uint64_t>;  // (deadline, id)

    const TreeConfig& cfg;
    Rng& rng;
    FragmentPopulation pop;
    TreeResult res;
    double rate_per_fragment;
    double eps_prime;
    double prune_log_size;  // classical: drop fragments below this log-size
    std::uint64_t next_id = 0;
    std::vector<std::uint64_t> live_ids;  // parallel to pop.live_
    std::vector<long long> slot_of;       // id -> live slot, -1 once gone
    // confined kill queue; entries for dead ids are discarded lazily
    std::priority_queue<DeadlineEntry, std::vector<DeadlineEntry>, std::greater<>> deadlines;

    TreeSimulatorImpl(const TreeConfig& c, Rng& r) : cfg(c), rng(r) {
        if (!(cfg.a > 0.0 && cfg.a < 1.0 && cfg.b > 1.0)) {
            throw DomainError("simulate_tree: need 0 < a < 1 < b");
        }
        if (cfg.checkpoints.empty()) throw DomainError("simulate_tree: no checkpoints");
        eps_prime = cfg.model.infinite_activity() ? -std::expm1(-cfg.truncation_eps) : 0.0;
        if (cfg.model.infinite_activity() && !(cfg.truncation_eps > 0.0)) {
            throw TruncationRequired("simulate_tree: infinite activity needs truncation_eps > 0");
        }
        rate_per_fragment = cfg.model.truncated_mass(eps_prime);
        const double t_max = cfg.checkpoints.back();
        prune_log_size = cfg.prune_small && cfg.mode == SimMode::Classical
                             ? std::log(cfg.a) - cfg.v * t_max + std::log(cfg.prune_safety)
                             : -std::numeric_limits<double>::infinity();
        pop.v_ = cfg.v;
        pop.log_a_ = std::log(cfg.a);
        pop.log_b_ = std::log(cfg.b);
        pop.mode_ = cfg.mode;
        res.checkpoints = cfg.checkpoints;
        const std::size_t m = cfg.checkpoints.size();
        res.counts.assign(m, 0);
        res.alive.assign(m, 0);
        res.masses.assign(m, 0.0);
        res.spine_log_size.assign(m, std::numeric_limits<double>::quiet_NaN());
    }

    double kill_time(double log_size) const {
        return (pop.log_b_ - log_size) / cfg.v;
    }

    void push_fragment(double log_size, double birth, bool spine, std::uint64_t parent_id) {
        const double deadline = cfg.mode == SimMode::Confined
                                    ? kill_time(log_size)
                                    : std::numeric_limits<double>::infinity();
        const std::uint64_t id = next_id++;
        slot_of.push_back(static_cast<long long>(pop.live_.size()));
        pop.live_.push_back({log_size, birth, deadline, spine});
        live_ids.push_back(id);
        if (cfg.mode == SimMode::Confined) deadlines.push({deadline, id});
        if (cfg.record_events) {
            res.log.push_back({id, parent_id, birth,
                               std::numeric_limits<double>::infinity(), log_size});
        }
    }

    void drop_fragment(std::size_t i, double death_time) {
        const std::uint64_t dead_id = live_ids[i];
        const std::uint64_t last_id = live_ids.back();
        if (cfg.record_events) res.log[dead_id].death = death_time;
        live_ids[i] = last_id;
        live_ids.pop_back();
        pop.live_[i] = pop.live_.back();
        pop.live_.pop_back();
        slot_of[dead_id] = -1;
        if (dead_id != last_id) slot_of[last_id] = static_cast<long long>(i);
    }

    // Fragment dead at birth (confined below-floor child, or classical prune):
    // log it as an instantly dead record so replay sees the whole genealogy.
    void log_stillborn(double log_size, double birth, std::uint64_t parent_id) {
        if (cfg.record_events) {
            slot_of.push_back(-1);  // id is consumed, slot table must stay aligned
            res.log.push_back({next_id, parent_id, birth, birth, log_size});
            ++next_id;
        }
    }

    void record_checkpoint(std::size_t idx, const CheckpointFn& fn) {
        const double t = cfg.checkpoints[idx];
        const double lo = pop.log_a_ - cfg.v * t;
        const double hi = pop.log_b_ - cfg.v * t;
        std::uint64_t cnt = 0;
        KahanSum mass;
        for (const auto& f : pop.live_) {
            mass.add(std::exp(f.log_size));
            if (cfg.mode == SimMode::Confined) {
                ++cnt;  // live confined fragments are good by construction
            } else if (f.log_size > lo && f.log_size < hi) {
                ++cnt;
            }
            if (f.spine) res.spine_log_size[idx] = f.log_size;
        }
        res.counts[idx] = cnt;
        res.alive[idx] = pop.live_.size();
        res.masses[idx] = mass.value();
        if (fn) {
            pop.now_ = t;
            fn(idx, t, pop);
        }
    }

    TreeResult run(const CheckpointFn& fn) {
        const double t_max = cfg.checkpoints.back();
        push_fragment(0.0, 0.0, cfg.track_spine, 0);
        std::size_t cp = 0;
        double now = 0.0;
        double last_nonempty = 0.0;
        while (true) {
            // next split across the population, then the earliest kill deadline
            double t_split = std::numeric_limits<double>::infinity();
            if (!pop.live_.empty() && rate_per_fragment > 0.0) {
                t_split =
                    now + rng.exponential(rate_per_fragment *
                                          static_cast<double>(pop.live_.size()));
            }
            double t_kill = std::numeric_limits<double>::infinity();
            std::size_t kill_idx = 0;
            if (cfg.mode == SimMode::Confined) {
                while (!deadlines.empty() && slot_of[deadlines.top().second] < 0) {
                    deadlines.pop();
                }
                if (!deadlines.empty()) {
                    t_kill = deadlines.top().first;
                    kill_idx = static_cast<std::size_t>(slot_of[deadlines.top().second]);
                }
            }
            const double t_event = std::min(t_split, t_kill);
            while (cp < cfg.checkpoints.size() && cfg.checkpoints[cp] < t_event) {
                if (cfg.checkpoints[cp] > t_max) break;
                record_checkpoint(cp, fn);
                ++cp;
            }
            if (cp >= cfg.checkpoints.size() || t_event > t_max) break;
            now = t_event;
            if (t_kill <= t_split) {
                deadlines.pop();
                drop_fragment(kill_idx, t_kill);
                if (pop.live_.empty()) {
                    res.zeta = std::min(res.zeta, t_kill);
                }
            } else {
                const std::size_t i =
                    static_cast<std::size_t>(rng.uniform_index(pop.live_.size()));
                const auto parent = pop.live_[i];
                const std::uint64_t parent_id = cfg.record_events ? live_ids[i] : 0;
                const auto pieces = sample_split(cfg.model, eps_prime, rng);
                bool spine_to_first = false;
                if (parent.spine) {
                    // the tagged point lands in a piece with probability its size
                    spine_to_first = rng.uniform01() < pieces[0];
                }
                drop_fragment(i, now);
                ++res.splits;
                for (int c = 0; c < 2; ++c) {
                    const double ls = parent.log_size + std::log(pieces[c]);
                    const bool sp = parent.spine && (c == 0 ? spine_to_first : !spine_to_first);
                    if (cfg.mode == SimMode::Confined) {
                        // window floor at birth; the ceiling is inherited as a deadline
                        if (ls <= pop.log_a_ - cfg.v * now) {
                            log_stillborn(ls, now, parent_id);
                            continue;
                        }
                    } else if (ls < prune_log_size && !sp) {
                        // the spine is never pruned, so tagged-fragment tracking
                        // stays exact under classical pruning
                        log_stillborn(ls, now, parent_id);
                        continue;
                    }
                    push_fragment(ls, now, sp, parent_id);
                }
                if (pop.live_.empty()) res.zeta = std::min(res.zeta, now);
            }
            if (!pop.live_.empty()) last_nonempty = now;
            if (pop.live_.size() > cfg.max_fragments) {
                res.truncated = true;
                break;
            }
            if (pop.live_.empty()) {
                // no fragment can reappear; remaining checkpoints stay at zero
                while (cp < cfg.checkpoints.size()) {
                    record_checkpoint(cp, fn);
                    ++cp;
                }
                break;
            }
        }
        (void)last_nonempty;
        return std::move(res);
    }
};

} // namespace detail

// Runs one fragmentation replica; counters are recorded at the configured
// checkpoints and `on_checkpoint`, when given, sees the live population there.
inline TreeResult simulate_tree(const TreeConfig& cfg, Rng& rng,
                                const CheckpointFn& on_checkpoint = {}) {
    detail::TreeSimulatorImpl sim(cfg, rng);
    return sim.run(on_checkpoint);
}

// ---------------------------------------------------------------------------
// Spine (tagged fragment) paths

struct SpinePath {
    double tilt = 0.0;
    double t_end = 0.0;
    double xi_end = 0.0;       // cumulative log-size loss at t_end
    double log_lr = 0.0;       // log likelihood ratio e^{p xi - t kappa(p)} vs untilted
    std::vector<double> jump_times;
    std::vector<double> jump_sizes;
};

// Compound-Poisson path of xi under the p-tilted law, exact on event times.
// Uses a prebuilt sampler; see the model overload for the one-shot form.
inline SpinePath simulate_spine(const TiltedSpineSampler& sampler, double tilt_p,
                                double kappa_at_p, double t, Rng& rng,
                                bool record_jumps = false) {
    SpinePath path;
    path.tilt = tilt_p;
    path.t_end = t;
    const double rate = sampler.rate();
    double now = rate > 0.0 ? rng.exponential(rate) : std::numeric_limits<double>::infinity();
    while (now <= t) {
        const double jump = sampler.sample(rng);
        path.xi_end += jump;
        if (record_jumps) {
            path.jump_times.push_back(now);
            path.jump_sizes.push_back(jump);
        }
        now += rng.exponential(rate);
    }
    path.log_lr = tilt_p * path.xi_end - t * kappa_at_p;
    return path;
}

inline SpinePath simulate_spine(const DislocationModel& model, double tilt_p, double eps,
                                double t, Rng& rng, bool record_jumps = false) {
    const auto law = spine_jump_law(model, eps);
    const TiltedSpineSampler sampler(law, tilt_p);
    return simulate_spine(sampler, tilt_p, kappa(model, tilt_p), t, rng, record_jumps);
}

// ---------------------------------------------------------------------------
// Many-to-one estimators

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    double ess = 0.0;          // effective sample size of the weights
    std::uint64_t n = 0;
    bool degenerate_weights = false;
};

namespace detail {

inline MonteCarloEstimate reduce_weights(const std::vector<double>& sums,
                                         const std::vector<double>& sqsums, std::uint64_t n) {
    KahanSum s, s2;
    for (double x : sums) s.add(x);
    for (double x : sqsums) s2.add(x);
    MonteCarloEstimate out;
    out.n = n;
    const double nn = static_cast<double>(n);
    out.estimate = s.value() / nn;
    const double var = std::max(0.0, (s2.value() - nn * out.estimate * out.estimate)) /
                       std::max(1.0, nn - 1.0);
    out.std_error = std::sqrt(var / nn);
    out.ess = s2.value() > 0.0 ? s.value() * s.value() / s2.value() : 0.0;
    out.degenerate_weights = out.ess < 0.01 * nn;
    return out;
}

} // namespace detail

// E #{fragments in the window at time t} estimated on tilted spine paths:
// mean of e^{(p+1) xi - t kappa(p)} 1{v t - xi in (log a, log b)}.
inline MonteCarloEstimate many_to_one_classical(const DislocationModel& model, double v,
                                                double a, double b, double t, double tilt_p,
                                                double eps, std::uint64_t n_paths,
                                                std::uint64_t seed) {
    const auto law = spine_jump_law(model, eps);
    const TiltedSpineSampler sampler(law, tilt_p);
    const double kp = kappa(model, tilt_p);
    const double rate = sampler.rate();
    const double lo = std::log(a), hi = std::log(b);
    std::vector<double> sums(1, 0.0), sqs(1, 0.0);
    detail::KahanSum s, s2;
    for (std::uint64_t i = 0; i < n_paths; ++i) {
        Rng rng = Rng::for_replica(seed, i);
        double xi = 0.0;
        double now = rng.exponential(rate);
        while (now <= t) {
            xi += sampler.sample(rng);
            now += rng.exponential(rate);
        }
        const double z = v * t - xi;
        if (z > lo && z < hi) {
            const double w = std::exp((tilt_p + 1.0) * xi - t * kp);
            s.add(w);
            s2.add(w * w);
        }
    }
    sums[0] = s.value();
    sqs[0] = s2.value();
    return detail::reduce_weights(sums, sqs, n_paths);
}

// E #{good fragments at t} (window held along the whole path): the indicator
// is evaluated exactly between jumps -- Y = v s - xi_s - log a drifts up and
// can only cross beta at a segment end, and only cross 0 at a jump.
inline MonteCarloEstimate many_to_one_confined(const DislocationModel& model, double v,
                                               double a, double b, double t, double tilt_p,
                                               double eps, std::uint64_t n_paths,
                                               std::uint64_t seed) {
    const auto law = spine_jump_law(model, eps);
    const TiltedSpineSampler sampler(law, tilt_p);
    const double kp = kappa(model, tilt_p);
    const double rate = sampler.rate();
    const double beta = std::log(b / a);
    const double y0 = -std::log(a);
    detail::KahanSum s, s2;
    for (std::uint64_t i = 0; i < n_paths; ++i) {
        Rng rng = Rng::for_replica(seed, i);
        double y = y0, xi = 0.0, prev = 0.0;
        bool alive = true;
        double now = rng.exponential(rate);
        while (alive && now <= t) {
            if (y + v * (now - prev) >= beta) {
                alive = false;
                break;
            }
            y += v * (now - prev);
            const double jump = sampler.sample(rng);
            xi += jump;
            y -= jump;
            if (y <= 0.0) alive = false;
            prev = now;
            now += rng.exponential(rate);
        }
        if (alive && y + v * (t - prev) < beta) {
            const double w = std::exp((tilt_p + 1.0) * xi - t * kp);
            s.add(w);
            s2.add(w * w);
        }
    }
    std::vector<double> sums(1, s.value()), sqs(1, s2.value());
    return detail::reduce_weights(sums, sqs, n_paths);
}

// ---------------------------------------------------------------------------
// Martingales over population snapshots

// M_t^(p) = sum_i |J_i|^{p+1} e^{kappa(p) t} over all live fragments.
inline double martingale_additive(const FragmentPopulation& pop, double t,
                                  const DislocationModel& model, double p) {
    detail::KahanSum s;
    for (const auto& f : pop.live()) s.add(std::exp((p + 1.0) * f.log_size));
    return s.value() * std::exp(kappa(model, p) * t);
}

// M_t^{(v,a,b)} = e^{rho t}/h(0) * sum_{good} h(v t + log|J_i|) |J_i|.
inline double martingale_confined(const FragmentPopulation& pop, double t,
                                  const ConfinedRate& conf) {
    detail::KahanSum s;
    for (const auto& f : pop.live()) {
        s.add(conf.h(conf.v() * t + f.log_size) * std::exp(f.log_size));
    }
    return s.value() * std::exp(conf.rho() * t) / conf.h0();
}

struct SpineDecomposition {
    double c = 0.0;       // spine contribution; 0 when the spine is dead
    double d = 0.0;       // everything else: M - c
    bool spine_alive = false;
};

// Splits M^{(v,a,b)} into the tagged-fragment part and the rest. Requires a
// population simulated with track_spine in Confined mode.
inline SpineDecomposition spine_decomposition(const FragmentPopulation& pop, double t,
                                              const ConfinedRate& conf) {
    SpineDecomposition out;
    const double m = martingale_confined(pop, t, conf);
    const std::size_t si = pop.spine_index();
    if (si != FragmentPopulation::npos) {
        const auto& f = pop.live()[si];
        out.spine_alive = true;
        out.c = conf.h(conf.v() * t + f.log_size) * std::exp(f.log_size) *
                std::exp(conf.rho() * t) / conf.h0();
    }
    out.d = m - out.c;
    return out;
}

// ---------------------------------------------------------------------------
// Local CLT diagnostic

struct LocalCltResult {
    double value = 0.0;     // sigma_p sqrt(2 pi t) * P^(p)(v t - xi_t in [log a, log b])
    double target = 0.0;    // log(b/a)
    double prob = 0.0;
    double prob_se = 0.0;
    double tilt = 0.0;
    double sigma = 0.0;
};

// Checks sigma_p sqrt(2 pi t) P^(p)(v t - xi_t in [log a, log b]) -> log(b/a)
// at the centering tilt p = Upsilon_v (so v t - xi_t has mean zero).
inline LocalCltResult local_clt_check(const DislocationModel& model, double v, double a,
                                      double b, double t, std::uint64_t n_paths,
                                      std::uint64_t seed, double eps = 0.0) {
    if (!(b > a)) throw DomainError("local_clt_check: need a < b");
    RateProfile profile(model);
    const double p = profile.upsilon(v);
    const auto [kp1, kp2] = kappa_derivatives(model, p);
    (void)kp1;
    LocalCltResult out;
    out.tilt = p;
    out.sigma = std::sqrt(-kp2);
    out.target = std::log(b / a);
    const auto law = spine_jump_law(model, model.infinite_activity() ? eps : 0.0);
    const TiltedSpineSampler sampler(law, p);
    const double rate = sampler.rate();
    const double lo = std::log(a), hi = std::log(b);
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n_paths; ++i) {
        Rng rng = Rng::for_replica(seed, i);
        double xi = 0.0;
        double now = rng.exponential(rate);
        while (now <= t) {
            xi += sampler.sample(rng);
            now += rng.exponential(rate);
        }
        const double z = v * t - xi;
        if (z >= lo && z <= hi) ++hits;
    }
    out.prob = static_cast<double>(hits) / static_cast<double>(n_paths);
    out.prob_se = std::sqrt(out.prob * (1.0 - out.prob) / static_cast<double>(n_paths));
    out.value = out.sigma * std::sqrt(2.0 * M_PI * t) * out.prob;
    return out;
}

} // namespace fragrate
