// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion also carries a wall-clock budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fragrate/experiment.hpp"
#include "oracles.hpp"

using namespace fragrate;

namespace {

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<bool(std::string&)> body;
};

const DislocationModel kUniform = DislocationModel::uniform_binary();
const double kSqrt2 = std::sqrt(2.0);
const double kBeta4 = std::log(4.0);

bool crit_kappa_oracle(std::string& detail) {
    bool ok = true;
    double worst_closed = 0.0, worst_quad = 0.0;
    for (double q : {-1.5, -0.5, 0.0, 1.0, 2.0, 5.0}) {
        const double closed = q / (q + 2.0);
        worst_closed = std::max(worst_closed, std::abs(kappa(kUniform, q) - closed));
        worst_quad = std::max(worst_quad, std::abs(kappa_quadrature(kUniform, q) - closed));
    }
    ok = worst_closed <= 1e-10 && worst_quad <= 1e-9;
    detail = "max closed err " + std::to_string(worst_closed) + ", quadrature err " +
             std::to_string(worst_quad);
    return ok;
}

bool crit_constants(std::string& detail) {
    RateProfile prof(kUniform);
    const double c29 = prof.C(2.0 / 9.0);
    const double cvm = prof.C(prof.v_min());
    const bool ok = std::abs(prof.p_bar() - kSqrt2) <= 1e-8 &&
                    std::abs(prof.v_min() - (3.0 - 2.0 * kSqrt2)) <= 1e-8 &&
                    std::abs(prof.v_typ() - 0.5) <= 1e-12 &&
                    std::abs(c29 - 1.0 / 9.0) <= 1e-8 && std::abs(cvm) <= 1e-7;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "p_bar %.12f, v_min %.12f, v_typ %.15f, C(2/9) %.12f, C(v_min) %.2e",
                  prof.p_bar(), prof.v_min(), prof.v_typ(), c29, cvm);
    detail = buf;
    return ok;
}

bool crit_scale_oracle(std::string& detail) {
    LevyDescriptor d(kUniform, 0.5);
    double worst_sup = 0.0, worst_laplace = 0.0;
    for (double q : {-1.0, -0.2, 0.0, 0.5}) {
        std::size_t n = static_cast<std::size_t>(std::ceil(kBeta4 / 1e-3 - 1e-12));
        n += n % 2;
        const auto kern = VolterraKernel::build(d, kBeta4, n);
        const auto w = volterra_march(d, q, kern);
        double sup = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double x = kBeta4 * static_cast<double>(k) / static_cast<double>(n);
            sup = std::max(sup, std::abs(w[k] - oracles::closed_w_uniform(0.5, q, x)));
        }
        worst_sup = std::max(worst_sup, sup);
        ScaleGrid g(d, q, 14.0, 2e-3);
        const double lambda = d.phi(std::max(q, 0.0)) + 1.0;
        const auto [res, tail] = scale_laplace_residual(d, g, lambda);
        worst_laplace = std::max(worst_laplace, res + tail);
    }
    detail = "volterra sup err " + std::to_string(worst_sup) + ", laplace rel err " +
             std::to_string(worst_laplace);
    return worst_sup <= 1e-4 && worst_laplace <= 1e-3;
}

bool crit_rho(std::string& detail) {
    LevyDescriptor d(kUniform, 0.5);
    const ConfinedRate conf = rho(d, 0.5, 2.0);
    const double closed = oracles::closed_rho_uniform(0.5, kBeta4);
    bool ok = std::abs(conf.rho() - closed) <= 1e-6 && conf.rho() > 0.0;
    double prev = 1e300;
    for (double b : {1.5, 2.0, 3.0, 4.0, 6.0}) {
        const double r = rho(d, 0.5, b).rho();
        if (!(r > 0.0) || !(r < prev)) ok = false;
        prev = r;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "rho %.9f vs closed-form zero %.9f (diff %.2e)",
                  conf.rho(), closed, std::abs(conf.rho() - closed));
    detail = buf;
    return ok;
}

bool crit_tilting(std::string& detail) {
    LevyDescriptor d(kUniform, 0.5);
    double worst = 0.0;
    for (double p : {0.0, 0.5, 1.0}) {
        for (double q : {-0.1, 0.0, 0.2}) {
            worst = std::max(worst, tilted_scale_check(d, p, q, kBeta4, 1e-3));
        }
    }
    detail = "max relative discrepancy " + std::to_string(worst);
    return worst <= 1e-5;
}

bool crit_gap_sweep(std::string& detail) {
    RateProfile prof(kUniform);
    bool ok = true;
    double min_gap = 1e300;
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{
             {0.5, 2.0}, {0.7, 1.5}, {0.3, 3.0}}) {
        for (double v : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) {
            LevyDescriptor d(kUniform, v);
            const double r = rho(d, a, b).rho();
            const double gap = prof.C(v) - (v - r);
            min_gap = std::min(min_gap, gap);
            if (gap < -1e-6) ok = false;
            if (v < prof.v_min() && !(r > v)) ok = false;
        }
    }
    detail = "min gap " + std::to_string(min_gap) + " over 18 configurations";
    return ok;
}

bool crit_martingale_means(std::string& detail) {
    ExperimentConfig c;
    c.kind = "martingale-mean";
    c.v = 0.5;
    c.a = 0.5;
    c.b = 2.0;
    c.p_list = {0.5, 1.0, 2.0};
    c.t_checkpoints = {4.0};
    c.n_replicas = 10000;
    c.seed = 710;
    c.mean_tol_se = 3.0;
    const auto rec = run(c);
    double worst = 0.0;
    for (const auto& row : rec.data["points"]) {
        worst = std::max(worst, std::abs(row["mean"].get<double>() - 1.0) /
                                    row["se"].get<double>());
    }
    detail = "max |mean-1|/se = " + std::to_string(worst) + " across 4 martingales";
    return rec.pass;
}

bool crit_second_moment(std::string& detail) {
    // subcritical window: the second moment grows at rate rho - v
    ExperimentConfig c;
    c.kind = "second-moment";
    c.v = 0.15;
    c.a = 0.5;
    c.b = 2.0;
    c.t_checkpoints = {2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
    c.n_replicas = 50000;
    c.seed = 81;
    c.slope_tol = 0.1;
    const auto rec = run(c);
    const double slope = rec.data["fits"][0]["slope"].get<double>();
    const double ref = rec.data["fits"][0]["reference"].get<double>();
    // strongly supercritical window (v - rho ~ 0.36): bounded in L^2, so the
    // trend past t = 4 flattens out on this horizon
    ExperimentConfig c2 = c;
    c2.v = 0.7;
    c2.b = 12.0;
    c2.t_checkpoints = {2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0};
    c2.n_replicas = 20000;
    c2.seed = 82;
    c2.t = 4.0;
    c2.trend_tol = 0.03;
    const auto rec2 = run(c2);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "subcritical slope %.4f vs rho-v %.4f; supercritical trend %.4f", slope, ref,
                  rec2.data["fits"][0]["slope"].get<double>());
    detail = buf;
    return rec.pass && rec2.pass;
}

bool crit_presence_classical(std::string& detail) {
    ExperimentConfig c;
    c.kind = "presence-classical";
    c.v = 0.1;
    c.a = 0.5;
    c.b = 2.0;
    c.t_checkpoints = {4.0, 6.0, 8.0, 10.0, 12.0};
    c.n_replicas = 100000;   // trees
    c.n_paths = 250000;      // spine paths per checkpoint: 1.25e6 total
    c.seed = 91;
    c.slope_tol = 0.03;
    c.estimator = "both";
    const auto rec = run(c);
    std::string fits;
    for (const auto& f : rec.data["fits"]) {
        fits += f["name"].get<std::string>() + " slope " +
                std::to_string(f["slope"].get<double>()) + "; ";
    }
    detail = fits + "C(0.1) = " + std::to_string(rec.data["reference"].get<double>());
    return rec.pass;
}

bool crit_presence_confined(std::string& detail) {
    ExperimentConfig c;
    c.kind = "presence-confined";
    c.v = 0.15;
    c.a = 0.5;
    c.b = 2.0;
    c.t_checkpoints = {4.0, 6.0, 8.0, 10.0, 12.0};
    c.n_replicas = 100000;
    c.n_paths = 200000;
    c.seed = 101;
    c.slope_tol = 0.05;
    c.estimator = "both";
    const auto rec = run(c);
    std::string fits;
    for (const auto& f : rec.data["fits"]) {
        fits += f["name"].get<std::string>() + " slope " +
                std::to_string(f["slope"].get<double>()) + "; ";
    }
    detail = fits + "v - rho = " + std::to_string(rec.data["reference"].get<double>());
    return rec.pass;
}

bool crit_growth(std::string& detail) {
    ExperimentConfig c;
    c.kind = "growth";
    c.mode = "confined";
    c.v = 0.5;
    c.a = 0.5;
    c.b = 2.0;
    c.b_ladder = {2.0, 3.0, 4.0};
    c.t_checkpoints = {2.0, 4.0, 6.0, 8.0, 10.0};
    c.n_replicas = 100000;
    c.seed = 111;
    c.slope_tol = 0.05;
    const auto rec = run(c);
    char buf[200];
    std::snprintf(buf, sizeof(buf), "b ladder ended at %.1f; slope %.4f vs v-rho %.4f",
                  rec.data["b_used"].get<double>(), rec.data["fits"][0]["slope"].get<double>(),
                  rec.data["reference"].get<double>());
    detail = buf;
    return rec.pass;
}

bool crit_lclt(std::string& detail) {
    const auto res = local_clt_check(kUniform, 0.5, 0.5, 2.0, 50.0, 1000000, 121);
    const double rel = std::abs(res.value - res.target) / res.target;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "sigma sqrt(2 pi t) P = %.4f vs log(b/a) = %.4f (%.1f%%)",
                  res.value, res.target, 100.0 * rel);
    detail = buf;
    return rel <= 0.10;
}

bool crit_moment_rate_signs(std::string& detail) {
    RateProfile prof(kUniform);
    const double pbar = prof.p_bar();
    bool ok = true;
    int checked = 0;
    for (int i = 0; i < 20; ++i) {
        const double p = -0.5 + 3.5 * i / 19.0;
        if (additive_moment_rate(kUniform, p, 0.0) != 0.0) ok = false;
        for (int j = 0; j < 20; ++j) {
            const double alpha = 0.01 + (0.2 - 0.01) * j / 19.0;
            const double dval = additive_moment_rate(kUniform, p, alpha);
            if (p >= pbar) {
                ++checked;
                if (!(dval > 0.0)) ok = false;
            } else {
                // below p_bar the sign statement holds for small alpha; stay
                // under the first-order validity scale |g|/curvature
                const auto [k1, k2] = kappa_derivatives(kUniform, p);
                const double g = kappa(kUniform, p) - (p + 1.0) * k1;
                const double alpha0 =
                    2.0 * std::abs(g) / ((p + 1.0) * (p + 1.0) * std::abs(k2));
                if (alpha <= 0.8 * alpha0) {
                    ++checked;
                    if (!(dval < 0.0)) ok = false;
                }
            }
        }
    }
    detail = std::to_string(checked) + " sign cells checked on the 20x20 grid";
    return ok && checked > 150;
}

bool crit_determinism(std::string& detail) {
    // a tree-based experiment and a spine-based one, re-run on the same seed
    ExperimentConfig c;
    c.kind = "martingale-mean";
    c.v = 0.5;
    c.a = 0.5;
    c.b = 2.0;
    c.p_list = {1.0};
    c.t_checkpoints = {3.0};
    c.n_replicas = 2000;
    c.seed = 987;
    auto r1 = run(c);
    auto r2 = run(c);
    r1.data.erase("wall_ms");
    r2.data.erase("wall_ms");
    const bool tree_same = r1.data.dump() == r2.data.dump();
    const auto m1 = many_to_one_classical(kUniform, 0.1, 0.5, 2.0, 6.0, 2.0, 0.0, 50000, 55);
    const auto m2 = many_to_one_classical(kUniform, 0.1, 0.5, 2.0, 6.0, 2.0, 0.0, 50000, 55);
    const bool spine_same = m1.estimate == m2.estimate && m1.std_error == m2.std_error;
    const auto l1 = local_clt_check(kUniform, 0.5, 0.5, 2.0, 20.0, 50000, 77);
    const auto l2 = local_clt_check(kUniform, 0.5, 0.5, 2.0, 20.0, 50000, 77);
    const bool lclt_same = l1.value == l2.value;
    detail = std::string("tree ") + (tree_same ? "bit-identical" : "MISMATCH") + ", spine " +
             (spine_same ? "bit-identical" : "MISMATCH") + ", lclt " +
             (lclt_same ? "bit-identical" : "MISMATCH");
    return tree_same && spine_same && lclt_same;
}

} // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "closed-form kappa oracle and forced quadrature", 1.0, crit_kappa_oracle},
        {2, "critical constants p_bar, v_min, v_typ, C", 1.0, crit_constants},
        {3, "scale-function solver vs two-exponential oracle + Laplace identity", 10.0,
         crit_scale_oracle},
        {4, "confinement rate rho: closed-form zero, monotone in b, positive", 30.0, crit_rho},
        {5, "tilting identity W^(psi(p)+q) = e^{px} W_p^(q)", 30.0, crit_tilting},
        {6, "C(v) >= v - rho sweep (18 configurations)", 300.0, crit_gap_sweep},
        {7, "martingale means E M_t = 1 at t = 4", 300.0, crit_martingale_means},
        {8, "second-moment rate of the confined martingale", 600.0, crit_second_moment},
        {9, "classical presence rate -> C(v)", 900.0, crit_presence_classical},
        {10, "confined presence rate -> v - rho", 900.0, crit_presence_confined},
        {11, "confined growth rate -> v - rho (supercritical ladder)", 600.0, crit_growth},
        {12, "local CLT normalization -> log(b/a)", 120.0, crit_lclt},
        {13, "moment-rate exponent sign map across p_bar", 1.0, crit_moment_rate_signs},
        {14, "bit-for-bit determinism under seed replay", 120.0, crit_determinism},
    };
    int failures = 0;
    double total = 0.0;
    for (auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.body(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
            ok = false;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total += secs;
        if (secs > c.budget_s) {
            ok = false;
            detail += " [over budget " + std::to_string(c.budget_s) + " s]";
        }
        if (!ok) ++failures;
        std::printf("[%s] criterion %2d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name.c_str(), secs);
        if (!detail.empty()) std::printf("         %s\n", detail.c_str());
        std::fflush(stdout);
    }
    std::printf("\n%d/%zu criteria passed (%.1f s total)\n",
                static_cast<int>(criteria.size()) - failures, criteria.size(), total);
    return failures == 0 ? 0 : 1;
}
