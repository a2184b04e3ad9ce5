#pragma once

// Test-side oracles, independent of the library's solution paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "fragrate/dislocation.hpp"
#include "fragrate/simulator.hpp"

namespace oracles {

// Closed-form scale function of Y_t = v t - xi_t for the uniform-binary model
// (xi compound Poisson, rate 1, Exp(2) jumps): 1/(psi(l) - q) has the
// quadratic denominator v l^2 + (2v - 1 - q) l - 2q over (l + 2), so W^(q) is
// a two-exponential (or conjugate-pair, or double-root) combination
// sum_i e^{l_i x}/psi'(l_i).
inline double closed_w_uniform(double v, double q, double x) {
    const std::complex<double> bq(2.0 * v - 1.0 - q, 0.0);
    const std::complex<double> c(-2.0 * q, 0.0);
    const std::complex<double> sd = std::sqrt(bq * bq - 4.0 * v * c);
    if (std::abs(sd) < 1e-12) {
        const double l0 = (-bq / (2.0 * v)).real();
        return (1.0 + (l0 + 2.0) * x) * std::exp(l0 * x) / v;
    }
    const std::complex<double> l1 = (-bq + sd) / (2.0 * v);
    const std::complex<double> l2 = (-bq - sd) / (2.0 * v);
    const auto term = [&](std::complex<double> li, std::complex<double> lj) {
        return (li + 2.0) / (v * (li - lj)) * std::exp(li * x);
    };
    return (term(l1, l2) + term(l2, l1)).real();
}

// First zero in q of the closed-form W^(-q)(beta): the confinement rate.
inline double closed_rho_uniform(double v, double beta) {
    const auto f = [&](double q) { return closed_w_uniform(v, -q, beta); };
    double q = 0.0;
    const double dq = 1e-3;
    while (f(q + dq) > 0.0) {
        q += dq;
        if (q > 100.0) throw std::runtime_error("closed_rho_uniform: no zero found");
    }
    double lo = q, hi = q + dq;
    for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Exact E #{fragments with size in (a e^{-vt}, b e^{-vt})} for the uniform
// model, by the compound-Poisson series: xi_t is Poisson(t)-many Exp(2) jumps,
// so E e^{xi_t} 1{...} expands over Gamma(n, 2) laws into regularized
// incomplete gamma differences. Accurate for t up to ~16; beyond that the
// 1 - sum form of P(n, x) loses precision.
inline double reg_gamma_p(int n, double x) {
    if (x <= 0.0) return 0.0;
    double term = std::exp(-x), cum = term;
    for (int k = 1; k < n; ++k) {
        term *= x / static_cast<double>(k);
        cum += term;
    }
    return 1.0 - cum;
}

inline double exact_window_count_uniform(double v, double a, double b, double t) {
    const double la = std::log(a), lb = std::log(b);
    double mean = 0.0;
    if (v * t - lb < 0.0 && 0.0 < v * t - la) mean += std::exp(-t);
    const double B = v * t - la;
    const double A = std::max(0.0, v * t - lb);
    double pois = std::exp(-t);
    for (int n = 1; n < 400; ++n) {
        pois *= t / static_cast<double>(n);
        mean += pois * std::pow(2.0, n) * (reg_gamma_p(n, B) - reg_gamma_p(n, A));
        if (n > 3 * t + 60) break;
    }
    return mean;
}

// Brute-force Legendre transform: min over a dense p-grid of (p+1) v - kappa(p).
inline double grid_min_c(const fragrate::DislocationModel& model, double v, double p_lo,
                         double p_hi, int n = 100000) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        const double p = p_lo + (p_hi - p_lo) * i / static_cast<double>(n);
        best = std::min(best, (p + 1.0) * v - fragrate::kappa(model, p));
    }
    return best;
}

// W^(q) by the convolution series sum_k q^k W^{*(k+1)} on a uniform grid,
// built from the base grid of W by trapezoid convolutions. Truncation is
// driven by the empirical sup of the running term.
inline std::vector<double> series_scale_reference(const std::vector<double>& w_base,
                                                  double delta, double q, double tail_tol,
                                                  int k_max = 200) {
    const std::size_t n = w_base.size();
    std::vector<double> conv = w_base;  // W^{*1}
    std::vector<double> total = w_base; // k = 0 term
    for (int k = 1; k <= k_max; ++k) {
        // conv <- conv * W (trapezoid)
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            double s = 0.5 * (conv[0] * w_base[i] + conv[i] * w_base[0]);
            for (std::size_t j = 1; j < i; ++j) s += conv[j] * w_base[i - j];
            next[i] = s * delta;
        }
        conv.swap(next);
        double sup = 0.0;
        const double qk = std::pow(q, k);
        for (std::size_t i = 0; i < n; ++i) {
            total[i] += qk * conv[i];
            sup = std::max(sup, std::abs(qk * conv[i]));
        }
        if (sup < tail_tol) break;
    }
    return total;
}

// Replays a recorded fragmentation log against the window definition and
// recounts the good/window set at each checkpoint.
inline std::vector<std::uint64_t> replay_counts(const fragrate::TreeResult& res, double v,
                                                double a, double b, bool confined) {
    const double la = std::log(a), lb = std::log(b);
    std::vector<std::uint64_t> counts(res.checkpoints.size(), 0);
    for (std::size_t ci = 0; ci < res.checkpoints.size(); ++ci) {
        const double t = res.checkpoints[ci];
        for (const auto& f : res.log) {
            if (!(f.birth <= t && t < f.death)) continue;
            if (confined) {
                // whole ancestry must sit inside the moving window:
                // floor binds at each birth, ceiling at each death (or at t)
                bool good = true;
                const fragrate::FragmentRecord* g = &f;
                for (;;) {
                    const double until = std::min(g->death, t);
                    if (!(g->log_size > la - v * g->birth) ||
                        !(g->log_size < lb - v * until + 1e-12)) {
                        good = false;
                        break;
                    }
                    if (g->parent == g->id) break;
                    g = &res.log[g->parent];
                }
                // the fragment standing at t needs the ceiling strictly at t
                if (good && !(f.log_size < lb - v * t)) good = false;
                if (good) ++counts[ci];
            } else {
                if (f.log_size > la - v * t && f.log_size < lb - v * t) ++counts[ci];
            }
        }
    }
    return counts;
}

// Two-sample Kolmogorov-Smirnov statistic. Ties (atoms) are consumed on both
// sides before the CDF gap is evaluated.
inline double ks_statistic(std::vector<double> x, std::vector<double> y) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= t) ++i;
        while (j < y.size() && y[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return d;
}

} // namespace oracles
