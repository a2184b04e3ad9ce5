#pragma once

// Scale functions of the spectrally negative process Y_t = v t - xi_t, where
// xi is the tagged-fragment subordinator of a dislocation model (optionally
// Esscher-tilted by p, which multiplies the jump measure by e^{-p x}).
//
//   psi(lambda) = v lambda - kappa(lambda)        (Laplace exponent of Y)
//   W^(q) : [0,infty) -> R, continuous, with int e^{-lx} W^(q)(x) dx = 1/(psi(l)-q)
//
// Y has bounded variation, so W^(q) solves the renewal (Volterra second kind)
// equation
//   v W^(q)(x) = 1 + int_0^x (q + Pi(y)) W^(q)(x-y) dy,   Pi(y) = L((y,infty)),
// which the solver marches forward with product integration: W is taken
// piecewise linear over each cell and the kernel cell moments are computed
// exactly (closed form) or by quadrature. The same equation defines W^(q) for
// q < 0, where it oscillates; its first zero in q at x = beta is the
// confinement rate rho_beta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fragrate/dislocation.hpp"
#include "fragrate/errors.hpp"
#include "fragrate/quadrature.hpp"
#include "fragrate/rates.hpp"
#include "fragrate/roots.hpp"

namespace fragrate {

struct LevyDescriptor {
    DislocationModel model;
    double v = 1.0;    // drift; must be > 0
    double tilt = 0.0; // Esscher tilt applied to the jump measure

    LevyDescriptor(DislocationModel m, double speed, double p = 0.0)
        : model(std::move(m)), v(speed), tilt(p) {
        if (!(v > 0.0)) throw DomainError("LevyDescriptor: drift v must be > 0");
        if (!(tilt > p_lower(model))) {
            throw DomainError("LevyDescriptor: tilt must exceed p_lower");
        }
        kappa_at_tilt_ = (tilt == 0.0) ? 0.0 : kappa(model, tilt);
    }

    LevyDescriptor tilted(double p) const { return {model, v, tilt + p}; }

    // Laplace exponent of the tilted subordinator: kappa(tilt+l) - kappa(tilt).
    double kappa_eff(double lambda) const {
        if (tilt == 0.0) return kappa(model, lambda);
        return kappa(model, tilt + lambda) - kappa_at_tilt_;
    }
    double kappa_eff_prime(double lambda) const { return kappa_prime(model, tilt + lambda); }

    double psi(double lambda) const { return v * lambda - kappa_eff(lambda); }

    // Largest root of psi(lambda) = q, q >= 0. psi is convex with minimum at
    // Theta (= 0 when v >= kappa'(tilt)), so the root is bisected on the
    // increasing branch.
    double phi(double q) const {
        if (q < 0.0) throw DomainError("phi: q must be >= 0");
        double theta = 0.0;
        if (kappa_eff_prime(0.0) > v) {
            // kappa' decreasing: unique crossing kappa'(tilt+l) = v
            const auto df = [&](double l) { return v - kappa_eff_prime(l); };
            double hi = 1.0;
            while (df(hi) < 0.0) {
                hi *= 2.0;
                if (hi > 1e9) throw RootBracketError("phi: psi' never turns positive");
            }
            theta = bisect(df, 0.0, hi, 1e-14);
        }
        if (q == 0.0 && theta == 0.0) return 0.0;
        const auto f = [&](double l) { return psi(l) - q; };
        if (f(theta) >= 0.0) return theta;  // only at q == psi(theta) boundary
        double hi = theta + 1.0;
        while (f(hi) < 0.0) {
            hi = theta + (hi - theta) * 2.0;
            if (hi > 1e12) throw RootBracketError("phi: psi never reaches q");
        }
        return bisect(f, theta, hi, 1e-15);
    }

    // Tilted jump density of xi: e^{-tilt z} L(dz)/dz = e^{-(tilt+2) z} g(u(z)).
    double jump_density(double z) const {
        const double ez = std::exp(-z);
        const double u = z < kLog2 ? ez : 1.0 - ez;
        return std::exp(-(tilt + 2.0) * z) * model.density(u);
    }

    // Tilted tail: int_y^infty e^{-tilt z} L(dz)
    //            = int [u^{tilt+1} 1{u<e^{-y}} + (1-u)^{tilt+1} 1{1-u<e^{-y}}] nu(du).
    double jump_tail(double y) const {
        if (!(y > 0.0)) throw DomainError("jump_tail: y must be > 0");
        const double p = tilt;
        switch (model.kind()) {
            case ModelKind::UniformBinary:
                return 2.0 * std::exp(-(p + 2.0) * y) / (p + 2.0);
            case ModelKind::BetaBinary: {
                const double theta = model.theta();
                const double c = p + 1.0 - theta;
                const double from = std::max(y, kLog2);
                double tail = std::exp(-c * from) / c;
                if (y < kLog2) {
                    const double sy = -std::expm1(-y);
                    tail += integrate(
                        [&](double s) {
                            return std::pow(1.0 - s, p + 1.0) * std::pow(s, -1.0 - theta);
                        },
                        sy, 0.5, 1e-11, 1e-300);
                }
                return tail;
            }
            case ModelKind::TableBinary: {
                const double ey = std::exp(-y);
                double tail = 0.0;
                if (ey > 0.5) {
                    tail += integrate(
                        [&](double u) { return std::pow(u, p + 1.0) * model.density(u); }, 0.5,
                        ey, 1e-11, 1e-16);
                }
                const double lo = std::max(0.5, 1.0 - ey);
                tail += integrate(
                    [&](double u) { return std::pow(1.0 - u, p + 1.0) * model.density(u); }, lo,
                    1.0, 1e-11, 1e-16);
                return tail;
            }
        }
        return 0.0;
    }

    // Exponent of the integrable singularity of the jump density at 0.
    double singular_exponent() const {
        return model.kind() == ModelKind::BetaBinary ? 1.0 + model.theta() : 0.0;
    }

    static constexpr double kLog2 = 0.6931471805599453;

private:
    double kappa_at_tilt_ = 0.0;
};

// ---------------------------------------------------------------------------
// Product-integration kernel: per-cell moments of the jump tail

// Cell moments of Pi on a uniform mesh of [0, beta]:
//   m0[j] = int_{y_j}^{y_{j+1}} Pi(y) dy
//   m1[j] = int_{y_j}^{y_{j+1}} (y - y_j) Pi(y) dy
// For the singular (infinite-activity) case these are evaluated through the
// jump density: int_cell Pi(y) dy = int_cell (z-y_j) l(z) dz + delta*Pi(y_{j+1}).
struct VolterraKernel {
    double beta = 0.0;
    double delta = 0.0;
    std::size_t n = 0;
    std::vector<double> m0, m1;
    // For an infinite-activity kernel the solution behaves like
    // W(0) + c x^{1-theta} at the origin, so the last convolution cell (the one
    // whose W-argument spans [0, delta]) uses the basis {1, u^{1-theta}} instead
    // of a chord. sm[j] = int_cell Pi(y) (y_{j+1}-y)^{1-theta} dy supports that.
    double sing_pow = 0.0;  // 1 - theta; 0 disables the singular basis
    std::vector<double> sm;

    static VolterraKernel build(const LevyDescriptor& d, double beta, std::size_t n) {
        VolterraKernel k;
        k.beta = beta;
        k.n = n;
        k.delta = beta / static_cast<double>(n);
        k.m0.resize(n);
        k.m1.resize(n);
        const double dl = k.delta;

        if (d.model.kind() == ModelKind::UniformBinary) {
            // Pi(y) = (2/r) e^{-r y}, r = tilt + 2: closed-form moments
            const double r = d.tilt + 2.0;
            const double emr = std::exp(-r * dl);
            const double mom1 = (1.0 - (1.0 + r * dl) * emr) / (r * r);  // int_0^dl u e^{-ru} du
            for (std::size_t j = 0; j < n; ++j) {
                const double ej = std::exp(-r * (dl * static_cast<double>(j)));
                k.m0[j] = (2.0 / (r * r)) * ej * (1.0 - emr);
                k.m1[j] = (2.0 / r) * ej * mom1;
            }
            return k;
        }

        // generic path: cell integrals of the density, tails by suffix sums
        const double sing = d.singular_exponent();
        const bool singular = sing > 0.0;
        const double e1 = singular ? (2.0 - sing) + 1.0 : 0.0;  // (1-theta) + 1
        std::vector<double> j0(n), j1(n), j2(n), js(singular ? n : 0);
        try {
            for (std::size_t j = 0; j < n; ++j) {
                const double y0 = dl * static_cast<double>(j);
                const double y1 = y0 + dl;
                const int budget = (singular && j < 4) ? 100000 : 4000;
                const double rel = 1e-10;
                const auto dens = [&](double z) { return d.jump_density(z); };
                j1[j] = integrate([&](double z) { return (z - y0) * dens(z); }, y0, y1, rel,
                                  1e-16, budget);
                j2[j] = integrate([&](double z) { return (z - y0) * (z - y0) * dens(z); }, y0,
                                  y1, rel, 1e-16, budget);
                // the tail at 0 may be infinite and is never needed
                j0[j] = (j == 0) ? 0.0 : integrate(dens, y0, y1, rel, 1e-16, budget);
                if (singular) {
                    const double dpow = std::pow(dl, e1);
                    js[j] = integrate(
                        [&](double z) { return dens(z) * (dpow - std::pow(y1 - z, e1)); }, y0,
                        y1, rel, 1e-16, budget);
                }
            }
        } catch (const QuadratureError& e) {
            throw SingularTailError(std::string("kernel cell integral failed: ") + e.what());
        }
        std::vector<double> tail(n + 1);
        tail[n] = d.jump_tail(beta);
        for (std::size_t j = n; j-- > 1;) tail[j] = tail[j + 1] + j0[j];
        for (std::size_t j = 0; j < n; ++j) {
            k.m0[j] = j1[j] + dl * tail[j + 1];
            k.m1[j] = 0.5 * j2[j] + 0.5 * dl * dl * tail[j + 1];
        }
        if (singular) {
            k.sing_pow = 2.0 - sing;
            k.sm.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                k.sm[j] = (std::pow(dl, e1) * tail[j + 1] + js[j]) / e1;
            }
        }
        return k;
    }
};

// Forward march of the Volterra equation: returns W^(q) at nodes 0..n.
inline std::vector<double> volterra_march(const LevyDescriptor& d, double q,
                                          const VolterraKernel& kern) {
    const std::size_t n = kern.n;
    const double dl = kern.delta;
    // weights for piecewise-linear W: cell j contributes
    //   a_j * W(x - y_j) + b_j * W(x - y_{j+1})
    std::vector<double> a(n), b(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double c0 = q * dl + kern.m0[j];
        const double c1 = q * dl * dl / 2.0 + kern.m1[j];
        a[j] = c0 - c1 / dl;
        b[j] = c1 / dl;
    }
    const double diag = d.v - a[0];
    if (!(diag > 0.0)) {
        throw MeshError("volterra_march: mesh too coarse for the kernel mass near 0");
    }
    // singular-basis correction for the last cell of each step: replaces the
    // chord on [0, delta] by W_0 + (W_1 - W_0) (u/delta)^{1-theta}, which adds
    // (W_1 - W_0) * g[k-1] to step k
    const bool singular = kern.sing_pow > 0.0;
    std::vector<double> g;
    if (singular) {
        const double dpow = std::pow(dl, kern.sing_pow);
        const double qsm = q * std::pow(dl, kern.sing_pow + 1.0) / (kern.sing_pow + 1.0);
        g.resize(n);
        for (std::size_t j = 0; j < n; ++j) g[j] = (qsm + kern.sm[j]) / dpow - a[j];
    }
    // e[i] = coefficient of W_{k-i} for i in [2, k-1]; edge terms handled apart
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 2; i < n; ++i) e[i] = a[i] + b[i - 1];
    std::vector<double> w(n + 1);
    w[0] = 1.0 / d.v;
    for (std::size_t k = 1; k <= n; ++k) {
        double acc = 1.0 + b[0] * w[k - 1];
        if (k >= 2) {
            acc += a[1] * w[k - 1] + b[k - 1] * w[0];
            const double* wp = w.data() + k;
            const double* ep = e.data();
            double s = 0.0;
            for (std::size_t i = 2; i <= k - 1; ++i) s += ep[i] * wp[-static_cast<long>(i)];
            acc += s;
        }
        if (singular) {
            if (k == 1) {
                // implicit: W_1 enters through the correction itself
                const double g0 = g[0];
                if (!(diag - g0 > 0.0)) {
                    throw MeshError("volterra_march: singular correction destabilizes the mesh");
                }
                w[1] = (acc - g0 * w[0]) / (diag - g0);
                continue;
            }
            acc += (w[1] - w[0]) * g[k - 1];
        }
        w[k] = acc / diag;
    }
    return w;
}

// ---------------------------------------------------------------------------
// ScaleGrid: dual-mesh solve with Richardson error control

class ScaleGrid {
public:
    // Solves at the requested mesh and at half that mesh; keeps the fine
    // solution for interpolation and the Richardson-extrapolated values at the
    // coarse nodes. With check_contraction, a third (double-width) mesh
    // verifies that the error contracts at the expected second order.
    ScaleGrid(const LevyDescriptor& d, double q, double beta, double delta,
              bool check_contraction = false)
        : q_(q), beta_(beta) {
        if (!(beta > 0.0) || !(delta > 0.0) || delta > beta / 10.0) {
            throw DomainError("ScaleGrid: need beta > 0 and delta in (0, beta/10]");
        }
        std::size_t n = static_cast<std::size_t>(std::ceil(beta / delta - 1e-12));
        n += n % 2;  // even, so the double-width mesh lands on the same endpoint
        n = std::max<std::size_t>(n, 10);
        auto kern_c = VolterraKernel::build(d, beta, n);
        auto kern_f = VolterraKernel::build(d, beta, 2 * n);
        coarse_ = volterra_march(d, q, kern_c);
        fine_ = volterra_march(d, q, kern_f);
        delta_ = kern_f.delta;
        extrapolated_.resize(n + 1);
        double err = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double diff = fine_[2 * k] - coarse_[k];
            err = std::max(err, std::abs(diff) / 3.0);
            extrapolated_[k] = fine_[2 * k] + diff / 3.0;
        }
        richardson_error_ = err;
        if (check_contraction) {
            auto kern_cc = VolterraKernel::build(d, beta, n / 2);
            const auto w2 = volterra_march(d, q, kern_cc);
            double d21 = 0.0, d10 = 0.0, scale = 0.0;
            for (std::size_t k = 0; k <= n / 2; ++k) {
                d21 = std::max(d21, std::abs(w2[k] - coarse_[2 * k]));
                d10 = std::max(d10, std::abs(coarse_[2 * k] - fine_[4 * k]));
                scale = std::max(scale, std::abs(fine_[4 * k]));
            }
            // diffs at the roundoff floor mean the solve is exact at this mesh
            // (piecewise-linear solutions); the ratio carries no signal there
            const double floor = 1e-10 * scale;
            if (d21 > floor && d10 > floor) {
                const double ratio = d21 / d10;
                if (ratio < 2.0 || ratio > 8.0) {
                    throw MeshError("ScaleGrid: Richardson contraction ratio " +
                                    std::to_string(ratio) + " outside [2, 8]");
                }
            }
        }
        if (q >= 0.0) {
            for (std::size_t k = 0; k + 1 < fine_.size(); ++k) {
                if (!(fine_[k] > 0.0) || fine_[k + 1] < fine_[k] * (1.0 - 1e-12)) {
                    throw MeshError("ScaleGrid: q >= 0 solution not positive nondecreasing");
                }
            }
        }
    }

    double q() const { return q_; }
    double beta() const { return beta_; }
    double mesh() const { return delta_; }
    double richardson_error() const { return richardson_error_; }
    const std::vector<double>& values() const { return fine_; }
    const std::vector<double>& extrapolated() const { return extrapolated_; }
    double coarse_mesh() const { return 2.0 * delta_; }

    // Linear interpolation on the fine mesh; x clamped to [0, beta].
    double value(double x) const {
        if (x <= 0.0) return fine_.front();
        if (x >= beta_) return fine_.back();
        const double t = x / delta_;
        const std::size_t k = std::min(static_cast<std::size_t>(t), fine_.size() - 2);
        const double w = t - static_cast<double>(k);
        return fine_[k] * (1.0 - w) + fine_[k + 1] * w;
    }

    // Best available endpoint value W(beta).
    double at_end() const { return extrapolated_.back(); }

private:
    double q_, beta_, delta_ = 0.0, richardson_error_ = 0.0;
    std::vector<double> coarse_, fine_, extrapolated_;
};

// ---------------------------------------------------------------------------
// Confinement rate rho(v; a, b) and the function h

struct RhoOptions {
    double scan_dq = 0.01;  // scan step in q
    double q_max = 0.0;     // scan ceiling; 0 means the 50*v/beta heuristic
    double delta = 1e-3;    // solver mesh
    double q_tol = 1e-8;    // bisection tolerance on rho
};

class ConfinedRate {
public:
    ConfinedRate(double v, double a, double b, double rho_value, ScaleGrid grid)
        : v_(v), a_(a), b_(b), log_a_(std::log(a)), log_b_(std::log(b)),
          beta_(std::log(b / a)), rho_(rho_value), grid_(std::move(grid)) {
        h0_ = grid_.value(-log_a_);
        zero_tol_ = 10.0 * std::max(grid_.richardson_error(), 1e-14);
    }

    double v() const { return v_; }
    double a() const { return a_; }
    double b() const { return b_; }
    double beta() const { return beta_; }
    double rho() const { return rho_; }
    double h0() const { return h0_; }
    double zero_tol() const { return zero_tol_; }
    const ScaleGrid& grid() const { return grid_; }

    // h(y) = W^(-rho)(y - log a) on (log a, log b), 0 outside (h(-inf) = 0).
    double h(double y) const {
        if (!(y > log_a_) || !(y < log_b_)) return 0.0;
        return grid_.value(y - log_a_);
    }

private:
    double v_, a_, b_, log_a_, log_b_, beta_, rho_, h0_, zero_tol_;
    ScaleGrid grid_;
};

namespace detail {

// Endpoint value W^(-q)(beta), Richardson-extrapolated from the two meshes.
class RhoEndpointFn {
public:
    RhoEndpointFn(const LevyDescriptor& d, double beta, std::size_t n)
        : d_(d), kern_c_(VolterraKernel::build(d, beta, n)),
          kern_f_(VolterraKernel::build(d, beta, 2 * n)) {}

    double operator()(double q) const {
        const auto wc = volterra_march(d_, -q, kern_c_);
        const auto wf = volterra_march(d_, -q, kern_f_);
        return wf.back() + (wf.back() - wc.back()) / 3.0;
    }

private:
    const LevyDescriptor& d_;
    VolterraKernel kern_c_, kern_f_;
};

} // namespace detail

// rho_beta = inf{q >= 0 : W^(-q)(beta) = 0} for beta = log(b/a). Scans q
// upward in steps of scan_dq (evaluating midpoints as well, so a zero dipping
// inside one step is not missed), brackets the first sign change, halves the
// bracket once more to pin the leftmost crossing, then bisects.
inline ConfinedRate rho(const LevyDescriptor& d, double a, double b, RhoOptions opt = {}) {
    if (!(a > 0.0 && a < 1.0 && b > 1.0)) throw DomainError("rho: need 0 < a < 1 < b");
    const double beta = std::log(b / a);
    std::size_t n = static_cast<std::size_t>(std::ceil(beta / opt.delta - 1e-12));
    n += n % 2;
    n = std::max<std::size_t>(n, 10);
    const double q_max = opt.q_max > 0.0 ? opt.q_max : 50.0 * d.v / beta;

    detail::RhoEndpointFn f(d, beta, n);
    double q_lo = 0.0;
    double f_lo = f(0.0);
    if (!(f_lo > 0.0)) throw Error("rho: W(beta) must be positive at q = 0");
    double q_hi = 0.0, f_hi = 0.0;
    bool bracketed = false;
    while (!bracketed) {
        const double q_next = q_lo + opt.scan_dq;
        if (q_next > q_max + 1e-12) {
            throw ScanExhausted("rho: no zero of W^(-q)(beta) found for q up to " +
                                std::to_string(q_max));
        }
        const double f_mid = f(q_lo + 0.5 * opt.scan_dq);
        const double f_next = f(q_next);
        if (f_mid <= 0.0) {
            q_hi = q_lo + 0.5 * opt.scan_dq;
            f_hi = f_mid;
            bracketed = true;
        } else if (f_next <= 0.0) {
            q_lo += 0.5 * opt.scan_dq;
            f_lo = f_mid;
            q_hi = q_next;
            f_hi = f_next;
            bracketed = true;
        } else {
            q_lo = q_next;
            f_lo = f_next;
        }
    }
    // pin the leftmost crossing inside the bracket before bisecting
    for (int r = 0; r < 2; ++r) {
        const double qm = 0.5 * (q_lo + q_hi);
        const double fm = f(qm);
        if (fm <= 0.0) {
            q_hi = qm;
            f_hi = fm;
        } else {
            q_lo = qm;
            f_lo = fm;
        }
    }
    const double rho_value = bisect(f, q_lo, q_hi, f_lo, f_hi, opt.q_tol, 120);

    // final grid at -rho and validations
    ScaleGrid grid(d, -rho_value, beta, opt.delta, /*check_contraction=*/true);
    ConfinedRate result(d.v, a, b, rho_value, std::move(grid));
    if (!(rho_value > 0.0)) throw Error("rho: computed rate is not positive");
    if (std::abs(result.grid().at_end()) > result.zero_tol() + 10.0 * opt.q_tol) {
        throw ToleranceError("rho: |W^(-rho)(beta)| = " +
                             std::to_string(std::abs(result.grid().at_end())) +
                             " exceeds the zero tolerance");
    }
    // strict interior positivity just below rho
    {
        const double q_chk = std::max(rho_value - 0.01, 0.5 * rho_value);
        ScaleGrid chk(d, -q_chk, beta, opt.delta);
        const auto& vals = chk.values();
        for (std::size_t k = 1; k + 1 < vals.size(); ++k) {
            if (!(vals[k] > 0.0)) {
                throw Error("rho: W^(-q) not strictly positive inside (0,beta) below rho");
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Tilting identity and the rate-ordering gap

// Verifies W^(psi(p)+q)(x) = e^{p x} W_p^(q)(x) on a shared grid, where W_p is
// the scale function of the p-tilted process. Returns the maximum discrepancy
// relative to the sup of the left side.
inline double tilted_scale_check(const LevyDescriptor& d, double p, double q, double beta,
                                 double delta = 1e-3) {
    const double shifted_q = d.psi(p) + q;
    ScaleGrid lhs(d, shifted_q, beta, delta);
    ScaleGrid rhs(d.tilted(p), q, beta, delta);
    const auto& le = lhs.extrapolated();
    const auto& re = rhs.extrapolated();
    const double dl = lhs.coarse_mesh();
    double sup = 0.0;
    for (double w : le) sup = std::max(sup, std::abs(w));
    double worst = 0.0;
    for (std::size_t k = 0; k < le.size(); ++k) {
        const double x = dl * static_cast<double>(k);
        const double rhs_val = std::exp(p * x) * re[k];
        const double denom = std::max(std::abs(le[k]), 1e-3 * sup);
        worst = std::max(worst, std::abs(le[k] - rhs_val) / denom);
    }
    return worst;
}

// C(v) - (v - rho(v; a, b)); nonnegative up to numerical tolerance.
inline double rho_vs_c_gap(const RateProfile& profile, const LevyDescriptor& d, double a,
                           double b, RhoOptions opt = {}) {
    const double r = rho(d, a, b, opt).rho();
    return profile.C(d.v) - (d.v - r);
}

// Residual of the defining Laplace transform on a finite grid:
// |int_0^beta e^{-lx} W(x) dx - 1/(psi(l)-q)| / |1/(psi(l)-q)|. The truncated
// tail is returned separately as a bound (relative to the target), estimated
// from the endpoint value and its exponential growth phi(max(q,0)).
inline std::pair<double, double> scale_laplace_residual(const LevyDescriptor& d,
                                                        const ScaleGrid& grid, double lambda) {
    const double target = 1.0 / (d.psi(lambda) - grid.q());
    const auto& w = grid.values();
    const double dl = grid.mesh();
    double num = 0.5 * w.front();
    for (std::size_t k = 1; k + 1 < w.size(); ++k) {
        num += w[k] * std::exp(-lambda * dl * static_cast<double>(k));
    }
    num += 0.5 * w.back() * std::exp(-lambda * grid.beta());
    num *= dl;
    const double growth = d.phi(std::max(grid.q(), 0.0));
    double wend = 0.0;
    for (std::size_t k = w.size() - std::min<std::size_t>(w.size(), 32); k < w.size(); ++k) {
        wend = std::max(wend, std::abs(w[k]));
    }
    // continue W beyond the grid by its e^{phi x} growth envelope
    const double tail =
        wend * std::exp(-lambda * grid.beta()) / std::max(lambda - growth, 1e-6);
    return {std::abs(num - target) / std::abs(target), tail / std::abs(target)};
}

} // namespace fragrate
