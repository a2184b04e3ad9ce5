#include <doctest.h>

#include <cmath>

#include "fragrate/simulator.hpp"
#include "oracles.hpp"

using namespace fragrate;

namespace {
const DislocationModel kUniform = DislocationModel::uniform_binary();

TreeConfig base_config(double v, double a, double b, std::vector<double> cps, SimMode mode) {
    TreeConfig cfg;
    cfg.model = kUniform;
    cfg.v = v;
    cfg.a = a;
    cfg.b = b;
    cfg.checkpoints = std::move(cps);
    cfg.mode = mode;
    return cfg;
}
} // namespace

TEST_CASE("initial fragment sits in every window") {
    for (SimMode mode : {SimMode::Classical, SimMode::Confined}) {
        auto cfg = base_config(0.5, 0.5, 2.0, {0.0}, mode);
        Rng rng(1);
        const auto res = simulate_tree(cfg, rng);
        CHECK(res.counts[0] == 1);
        CHECK(res.masses[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("deterministic kill deadline") {
    // size 0.9 at v = 0.5, b = 2: the shrinking ceiling catches it at
    // (log b - log c)/v = 2 log(2/0.9)
    const double expect = 2.0 * std::log(2.0 / 0.9);
    CHECK((std::log(2.0) - std::log(0.9)) / 0.5 == doctest::Approx(expect).epsilon(1e-15));
    CHECK(expect == doctest::Approx(1.5970154).epsilon(1e-6));
}

TEST_CASE("mass conservation at checkpoints without pruning") {
    auto cfg = base_config(0.3, 0.5, 2.0, {0.5, 1.5, 3.0, 5.0}, SimMode::Classical);
    cfg.prune_small = false;
    for (int r = 0; r < 500; ++r) {
        Rng rng = Rng::for_replica(404, r);
        const auto res = simulate_tree(cfg, rng);
        for (double m : res.masses) CHECK(std::abs(m - 1.0) < 1e-12);
    }
}

TEST_CASE("seed determinism: identical seed, identical trajectory") {
    auto cfg = base_config(0.1, 0.5, 2.0, {2.0, 4.0, 6.0}, SimMode::Classical);
    Rng r1 = Rng::for_replica(99, 7), r2 = Rng::for_replica(99, 7);
    const auto a = simulate_tree(cfg, r1);
    const auto b = simulate_tree(cfg, r2);
    CHECK(a.counts == b.counts);
    CHECK(a.masses == b.masses);
    CHECK(a.splits == b.splits);
    Rng r3 = Rng::for_replica(99, 8);
    const auto c = simulate_tree(cfg, r3);
    CHECK(a.splits != c.splits);  // different replica stream
}

TEST_CASE("window replay: engine counts match the definition exactly") {
    for (SimMode mode : {SimMode::Classical, SimMode::Confined}) {
        auto cfg = base_config(0.35, 0.5, 2.0, {1.0, 2.0, 3.0, 4.5, 6.0}, mode);
        cfg.record_events = true;
        for (int r = 0; r < 200; ++r) {
            Rng rng = Rng::for_replica(1234, r);
            const auto res = simulate_tree(cfg, rng);
            const auto replay =
                oracles::replay_counts(res, cfg.v, cfg.a, cfg.b, mode == SimMode::Confined);
            for (std::size_t k = 0; k < replay.size(); ++k) {
                CHECK(res.counts[k] == replay[k]);
            }
        }
    }
}

TEST_CASE("confined extinction time and absorbing zero") {
    auto cfg = base_config(0.15, 0.5, 2.0, {1.0, 2.0, 4.0, 8.0, 12.0}, SimMode::Confined);
    int finite = 0;
    for (int r = 0; r < 300; ++r) {
        Rng rng = Rng::for_replica(77, r);
        const auto res = simulate_tree(cfg, rng);
        if (std::isfinite(res.zeta)) {
            ++finite;
            for (std::size_t k = 0; k < res.checkpoints.size(); ++k) {
                if (res.checkpoints[k] >= res.zeta) CHECK(res.counts[k] == 0);
                if (res.counts[k] == 0) CHECK(res.zeta <= res.checkpoints[k]);
            }
        } else {
            CHECK(res.counts.back() > 0);
        }
    }
    CHECK(finite > 0);  // subcritical: most replicas die on this horizon
}

TEST_CASE("population explosion guard flags partial results") {
    auto cfg = base_config(0.5, 0.5, 2.0, {8.0}, SimMode::Classical);
    cfg.prune_small = false;
    cfg.max_fragments = 16;
    Rng rng(3);
    const auto res = simulate_tree(cfg, rng);
    CHECK(res.truncated);
}

TEST_CASE("infinite activity needs a truncation level") {
    TreeConfig cfg;
    cfg.model = DislocationModel::beta_binary(0.5);
    cfg.checkpoints = {1.0};
    cfg.truncation_eps = 0.0;
    Rng rng(3);
    CHECK_THROWS_AS(simulate_tree(cfg, rng), TruncationRequired);
    cfg.truncation_eps = 1e-3;
    CHECK_NOTHROW(simulate_tree(cfg, rng));
}

TEST_CASE("tagged fragment law matches the spine subordinator (KS test)") {
    const double t = 2.0;
    const int n = 10000;
    auto cfg = base_config(0.5, 0.5, 2.0, {t}, SimMode::Classical);
    cfg.track_spine = true;
    std::vector<double> tree_xi, spine_xi;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(606, r);
        const auto res = simulate_tree(cfg, rng);
        tree_xi.push_back(-res.spine_log_size[0]);
    }
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(607, r);
        spine_xi.push_back(simulate_spine(kUniform, 0.0, 0.0, t, rng).xi_end);
    }
    const double d = oracles::ks_statistic(tree_xi, spine_xi);
    // two-sample KS 1% critical value: 1.628 sqrt((n+m)/(nm))
    CHECK(d < 1.628 * std::sqrt(2.0 / n));
}

TEST_CASE("spine paths: centering at the tilt, Laplace check, likelihood ratio") {
    RateProfile prof(kUniform);
    const double v = 0.3;
    const double p = prof.upsilon(v);
    const double t = 4.0;
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(11, r);
        const auto path = simulate_spine(kUniform, p, 0.0, t, rng);
        const double z = v * t - path.xi_end;
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3.0 * se);  // drift of vt - xi vanishes at p = Upsilon_v

    double lap = 0.0, lap2 = 0.0;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(12, r);
        const auto path = simulate_spine(kUniform, 0.0, 0.0, 2.0, rng);
        CHECK(path.log_lr == 0.0);  // identity tilt
        const double x = std::exp(-path.xi_end);
        lap += x;
        lap2 += x * x;
    }
    const double lmean = lap / n;
    const double lse = std::sqrt((lap2 / n - lmean * lmean) / n);
    CHECK(std::abs(lmean - std::exp(-2.0 / 3.0)) < 3.0 * lse);  // e^{-2 kappa(1)}

    // likelihood ratio reweighted to the original law has mean one
    double lr = 0.0, lr2 = 0.0;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(13, r);
        const auto path = simulate_spine(kUniform, 1.0, 0.0, 2.0, rng);
        const double w = std::exp(path.log_lr);
        lr += w;
        lr2 += w * w;
    }
    const double lrm = lr / n;
    const double lrse = std::sqrt((lr2 / n - lrm * lrm) / n);
    CHECK(std::abs(lrm - 1.0) < 3.0 * lrse);
}

TEST_CASE("many-to-one classical: unbiased vs exact series and vs trees") {
    RateProfile prof(kUniform);
    const double v = 0.1, a = 0.5, b = 2.0, t = 3.0;
    const double exact = oracles::exact_window_count_uniform(v, a, b, t);
    const auto est =
        many_to_one_classical(kUniform, v, a, b, t, prof.upsilon(v), 0.0, 200000, 2222);
    CHECK(std::abs(est.estimate - exact) < 3.0 * est.std_error);
    CHECK_FALSE(est.degenerate_weights);
    // tree-based direct mean of the same expectation
    auto cfg = base_config(v, a, b, {t}, SimMode::Classical);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(999, r);
        const auto res = simulate_tree(cfg, rng);
        sum += static_cast<double>(res.counts[0]);
        sum2 += static_cast<double>(res.counts[0]) * res.counts[0];
    }
    const double tmean = sum / n;
    const double tse = std::sqrt((sum2 / n - tmean * tmean) / n);
    const double joint = std::sqrt(tse * tse + est.std_error * est.std_error);
    CHECK(std::abs(tmean - est.estimate) < 3.0 * joint);
}

TEST_CASE("many-to-one confined: path constraint behavior") {
    // with an effectively unbounded window every path survives, and the
    // estimator consumes the same draws as the classical one
    const auto wide_c = many_to_one_classical(kUniform, 0.5, 1e-9, 1e9, 2.0, 0.4, 0.0, 5000, 5);
    const auto wide_k = many_to_one_confined(kUniform, 0.5, 1e-9, 1e9, 2.0, 0.4, 0.0, 5000, 5);
    CHECK(wide_c.estimate == wide_k.estimate);
    CHECK(wide_c.std_error == wide_k.std_error);
    // a real window kills paths, so the confined mean sits strictly below
    const auto narrow_c = many_to_one_classical(kUniform, 0.5, 0.5, 2.0, 4.0, 0.0, 0.0, 50000, 6);
    const auto narrow_k = many_to_one_confined(kUniform, 0.5, 0.5, 2.0, 4.0, 0.0, 0.0, 50000, 6);
    CHECK(narrow_k.estimate < narrow_c.estimate);
}

TEST_CASE("importance weights: well-tilted healthy, badly tilted degenerate") {
    RateProfile prof(kUniform);
    const double v = 0.1, t = 16.0;
    const auto good = many_to_one_classical(kUniform, v, 0.5, 2.0, t, prof.upsilon(v), 0.0,
                                            20000, 3);
    CHECK_FALSE(good.degenerate_weights);
    CHECK(good.ess > 0.05 * 20000);
    // the untilted estimator wastes almost every path on this rare window
    const auto bad = many_to_one_classical(kUniform, v, 0.5, 2.0, t, 0.0, 0.0, 20000, 3);
    CHECK(bad.ess < good.ess);
    CHECK(bad.degenerate_weights);
}

TEST_CASE("martingales are one at time zero and on average later") {
    LevyDescriptor d(kUniform, 0.5);
    const ConfinedRate conf = rho(d, 0.5, 2.0);
    auto cfg = base_config(0.5, 0.5, 2.0, {0.0, 4.0}, SimMode::Confined);
    cfg.track_spine = true;
    double msum = 0.0, msum2 = 0.0;
    const int n = 4000;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(31337, r);
        double m4 = 0.0;
        simulate_tree(cfg, rng, [&](std::size_t k, double t, const FragmentPopulation& pop) {
            const double m = martingale_confined(pop, t, conf);
            const auto dec = spine_decomposition(pop, t, conf);
            CHECK(std::abs(dec.c + dec.d - m) < 1e-12);
            if (k == 0) {
                CHECK(m == doctest::Approx(1.0).epsilon(1e-9));
                CHECK(dec.c == doctest::Approx(1.0).epsilon(1e-9));
                CHECK(dec.d == doctest::Approx(0.0));
            }
            if (k == 1) m4 = m;
        });
        msum += m4;
        msum2 += m4 * m4;
    }
    const double mean = msum / n;
    const double se = std::sqrt((msum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) < 3.0 * se);

    // additive side, over the full (unpruned) population
    auto cfa = base_config(0.5, 0.5, 2.0, {0.0, 4.0}, SimMode::Classical);
    cfa.prune_small = false;
    double asum = 0.0, asum2 = 0.0;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(41414, r);
        double m4 = 0.0;
        simulate_tree(cfa, rng, [&](std::size_t k, double t, const FragmentPopulation& pop) {
            const double m = martingale_additive(pop, t, kUniform, 1.0);
            if (k == 0) CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
            if (k == 1) m4 = m;
        });
        asum += m4;
        asum2 += m4 * m4;
    }
    const double amean = asum / n;
    const double ase = std::sqrt((asum2 / n - amean * amean) / n);
    CHECK(std::abs(amean - 1.0) < 3.0 * ase);
}

TEST_CASE("spine decomposition: reweighted spine term stays positive") {
    LevyDescriptor d(kUniform, 0.5);
    const ConfinedRate conf = rho(d, 0.5, 2.0);
    auto cfg = base_config(0.5, 0.5, 2.0, {1.0, 2.0, 3.0, 4.0}, SimMode::Confined);
    cfg.track_spine = true;
    std::vector<double> sums(4, 0.0);
    const int n = 30000;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::for_replica(515, r);
        simulate_tree(cfg, rng, [&](std::size_t k, double t, const FragmentPopulation& pop) {
            const auto dec = spine_decomposition(pop, t, conf);
            const std::size_t si = pop.spine_index();
            if (si != FragmentPopulation::npos) {
                const double ls = pop.live()[si].log_size;
                sums[k] += dec.c * dec.c * std::exp(-ls) * std::exp(-(conf.rho() - 0.5) * t);
            }
        });
    }
    for (double s : sums) CHECK(s > 0.0);
    // stabilization: consecutive means stay within a broad band
    for (std::size_t k = 1; k < sums.size(); ++k) {
        const double r = sums[k] / sums[k - 1];
        CHECK(r > 0.4);
        CHECK(r < 2.5);
    }
}

TEST_CASE("moment-rate exponent d(p, alpha): zero at alpha = 0, signs across p_bar") {
    RateProfile prof(kUniform);
    const double pbar = prof.p_bar();
    for (double p : {-0.5, 0.3, 1.0, pbar, 2.0, 3.0}) {
        CHECK(additive_moment_rate(kUniform, p, 0.0) == 0.0);  // exact
    }
    // below p_bar: negative for alpha below the curvature scale
    for (double p : {-0.5, 0.0, 0.7, 1.2}) {
        const auto [k1, k2] = kappa_derivatives(kUniform, p);
        const double g = kappa(kUniform, p) - (p + 1.0) * k1;
        const double alpha0 = 2.0 * std::abs(g) / ((p + 1.0) * (p + 1.0) * std::abs(k2));
        for (double f : {0.2, 0.5, 0.8}) {
            const double alpha = std::min(0.2, f * alpha0);
            CHECK(additive_moment_rate(kUniform, p, alpha) < 0.0);
        }
    }
    // at and above p_bar: positive on the whole tested alpha range
    for (double p : {pbar, 1.6, 2.5, 3.5}) {
        for (double alpha : {0.01, 0.05, 0.1, 0.2}) {
            CHECK(additive_moment_rate(kUniform, p, alpha) > 0.0);
        }
    }
}

TEST_CASE("local CLT: converging to log(b/a) in trend") {
    const int n = 200000;
    const auto r10 = local_clt_check(kUniform, 0.5, 0.5, 2.0, 10.0, n, 2);
    const auto r50 = local_clt_check(kUniform, 0.5, 0.5, 2.0, 50.0, n, 4);
    CHECK(r50.tilt == doctest::Approx(0.0));
    CHECK(r50.sigma == doctest::Approx(std::sqrt(0.5)));
    const double d10 = std::abs(r10.value - r10.target);
    const double d50 = std::abs(r50.value - r50.target);
    CHECK(d50 < 0.1 * r50.target);
    const double guard = 3.0 * r50.sigma * std::sqrt(2.0 * M_PI * 50.0) * r50.prob_se;
    CHECK(d50 <= d10 + guard);
}
