#pragma once

// Binary conservative dislocation measures.
//
// Every model is a sigma-finite measure nu(du) = g(u) du on the size u of the
// larger piece, u in (1/2, 1); a split produces the pair (u, 1-u). The three
// families:
//   UniformBinary   g(u) = 2           (split point uniform on (0,1), mass 1)
//   BetaBinary      g(u) = (1-u)^(-1-theta), theta in (0,1)  (infinite mass
//                   near u = 1: small splinters chip off at unbounded rate)
//   TableBinary     g piecewise linear through user knots
//
// The tagged fragment's log-size jump measure is
//   L(dx) = e^{-2x} g(e^{-x}) dx           on (0, log 2)      (keep big piece)
//         = e^{-2x} g(1 - e^{-x}) dx       on (log 2, infty)  (keep small piece)
// and kappa(q) = int (1 - u^{q+1} - (1-u)^{q+1}) g(u) du = int (1-e^{-qx}) L(dx).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fragrate/errors.hpp"
#include "fragrate/quadrature.hpp"
#include "fragrate/rng.hpp"

namespace fragrate {

enum class ModelKind { UniformBinary, BetaBinary, TableBinary };

struct TableKnot {
    double u;
    double density;
};

class DislocationModel {
public:
    static DislocationModel uniform_binary() {
        DislocationModel m;
        m.kind_ = ModelKind::UniformBinary;
        return m;
    }

    static DislocationModel beta_binary(double theta) {
        if (!(theta > 0.0 && theta < 1.0)) {
            throw DomainError("beta_binary: theta must lie in (0,1), got " +
                              std::to_string(theta));
        }
        DislocationModel m;
        m.kind_ = ModelKind::BetaBinary;
        m.theta_ = theta;
        return m;
    }

    static DislocationModel table_binary(std::vector<TableKnot> knots) {
        if (knots.size() < 2) throw DomainError("table_binary: need at least 2 knots");
        for (std::size_t i = 0; i < knots.size(); ++i) {
            const auto& k = knots[i];
            if (!(k.u >= 0.5 && k.u <= 1.0) || k.density < 0.0) {
                throw DomainError("table_binary: knots must have u in [0.5,1], density >= 0");
            }
            if (i > 0 && !(knots[i].u > knots[i - 1].u)) {
                throw DomainError("table_binary: knot abscissae must be strictly increasing");
            }
        }
        DislocationModel m;
        m.kind_ = ModelKind::TableBinary;
        m.knots_ = std::move(knots);
        if (!(m.total_mass() > 0.0)) throw DomainError("table_binary: zero total mass");
        return m;
    }

    ModelKind kind() const { return kind_; }
    double theta() const { return theta_; }
    const std::vector<TableKnot>& knots() const { return knots_; }

    bool infinite_activity() const { return kind_ == ModelKind::BetaBinary; }

    // Density g(u) of the larger piece, u in (1/2, 1).
    double density(double u) const {
        switch (kind_) {
            case ModelKind::UniformBinary:
                return (u > 0.5 && u < 1.0) ? 2.0 : 0.0;
            case ModelKind::BetaBinary:
                return (u > 0.5 && u < 1.0) ? std::pow(1.0 - u, -1.0 - theta_) : 0.0;
            case ModelKind::TableBinary: {
                if (u < knots_.front().u || u > knots_.back().u) return 0.0;
                auto it = std::upper_bound(knots_.begin(), knots_.end(), u,
                                           [](double x, const TableKnot& k) { return x < k.u; });
                if (it == knots_.begin()) return knots_.front().density;
                if (it == knots_.end()) return knots_.back().density;
                const TableKnot& b = *it;
                const TableKnot& a = *(it - 1);
                const double w = (u - a.u) / (b.u - a.u);
                return a.density + w * (b.density - a.density);
            }
        }
        return 0.0;
    }

    // g(1-) -- the density of near-total splits; controls the lower kappa domain.
    double density_at_one() const {
        switch (kind_) {
            case ModelKind::UniformBinary:
                return 2.0;
            case ModelKind::BetaBinary:
                return std::numeric_limits<double>::infinity();
            case ModelKind::TableBinary:
                if (knots_.back().u < 1.0 - 1e-12) return 0.0;
                return knots_.back().density;
        }
        return 0.0;
    }

    // Total dislocation rate nu((1/2,1)); +infinity for BetaBinary.
    double total_mass() const {
        switch (kind_) {
            case ModelKind::UniformBinary:
                return 1.0;
            case ModelKind::BetaBinary:
                return std::numeric_limits<double>::infinity();
            case ModelKind::TableBinary: {
                double m = 0.0;
                for (std::size_t i = 1; i < knots_.size(); ++i) {
                    m += 0.5 * (knots_[i].density + knots_[i - 1].density) *
                         (knots_[i].u - knots_[i - 1].u);
                }
                return m;
            }
        }
        return 0.0;
    }

    // nu(u < 1 - eps_prime): the retained rate after dropping splits whose
    // smaller piece is below eps_prime.
    double truncated_mass(double eps_prime) const {
        if (eps_prime <= 0.0) return total_mass();
        switch (kind_) {
            case ModelKind::UniformBinary:
                return std::max(0.0, 2.0 * (0.5 - eps_prime));
            case ModelKind::BetaBinary: {
                if (eps_prime >= 0.5) return 0.0;
                // int_{1/2}^{1-e'} (1-u)^{-1-t} du = (e'^{-t} - 2^t)/t
                return (std::pow(eps_prime, -theta_) - std::pow(2.0, theta_)) / theta_;
            }
            case ModelKind::TableBinary: {
                const double cap = 1.0 - eps_prime;
                double m = 0.0;
                for (std::size_t i = 1; i < knots_.size(); ++i) {
                    const double a = knots_[i - 1].u, b = std::min(knots_[i].u, cap);
                    if (b <= a) break;
                    const double gb = density(b);
                    m += 0.5 * (knots_[i - 1].density + gb) * (b - a);
                }
                return m;
            }
        }
        return 0.0;
    }

private:
    ModelKind kind_ = ModelKind::UniformBinary;
    double theta_ = 0.0;
    std::vector<TableKnot> knots_;
};

// ---------------------------------------------------------------------------
// kappa and its domain

// Integrability threshold: inf{p : int (1-u)^{p+1} nu(du) < infty}, set by the
// behavior of the smaller-piece density near 0.
inline double p_lower(const DislocationModel& m) {
    switch (m.kind()) {
        case ModelKind::UniformBinary:
            return -2.0;
        case ModelKind::BetaBinary:
            // smaller piece s = 1-u has density s^{-1-theta}: int s^{p+1-1-theta}
            // converges iff p > theta - 1
            return m.theta() - 1.0;
        case ModelKind::TableBinary: {
            const auto& ks = m.knots();
            // locate the top of the support (trailing zero-density segment shrinks it)
            std::size_t top = ks.size() - 1;
            while (top > 0 && ks[top].density == 0.0 && ks[top - 1].density == 0.0) --top;
            if (ks[top].u < 1.0 - 1e-12) {
                return -std::numeric_limits<double>::infinity();
            }
            if (ks[top].density > 0.0) return -2.0;
            return -3.0;  // density vanishes linearly at u = 1
        }
    }
    return -2.0;
}

namespace detail {

inline void check_kappa_domain(const DislocationModel& m, double q) {
    const double pl = p_lower(m);
    // keep a margin off the boundary, where kappa diverges
    if (!(q > pl + 1e-9)) {
        throw DomainError("kappa: q = " + std::to_string(q) +
                          " is at or below the domain threshold " + std::to_string(pl));
    }
}

// int_0^c s^a ds, int_0^c s^a ln s ds, int_0^c s^a ln^2 s ds for a > -1.
inline double power_int(double a, double c) { return std::pow(c, a + 1.0) / (a + 1.0); }
inline double power_log_int(double a, double c) {
    const double m1 = a + 1.0;
    return std::pow(c, m1) * (std::log(c) / m1 - 1.0 / (m1 * m1));
}
inline double power_log2_int(double a, double c) {
    const double m1 = a + 1.0;
    const double lc = std::log(c);
    return std::pow(c, m1) * (lc * lc / m1 - 2.0 * lc / (m1 * m1) + 2.0 / (m1 * m1 * m1));
}

// Quadrature for models with a bounded smaller-piece density (uniform, table).
// Written over s = 1 - u in (0, 1/2); the s^{q+1} term is split off with its
// leading closed form so the adaptive rule never sees the endpoint power.
// 1 - (1-s)^a without the cancellation of 1 - pow near s = 0
inline double one_minus_pow1m(double a, double s) { return -std::expm1(a * std::log1p(-s)); }

template <int Deriv, typename G>
double kappa_quad_bounded(const G& gs, double g_at_0, double q, double rel_tol) {
    const double c = 0.5;
    const double alpha = q + 1.0;
    double regular, singular_closed = 0.0;
    if constexpr (Deriv == 0) {
        regular = integrate([&](double s) { return one_minus_pow1m(alpha, s) * gs(s); },
                            0.0, c, rel_tol, 1e-300);
        regular -= integrate([&](double s) { return std::pow(s, alpha) * (gs(s) - g_at_0); },
                             0.0, c, rel_tol, 1e-14);
        if (g_at_0 != 0.0) singular_closed = g_at_0 * power_int(alpha, c);
    } else if constexpr (Deriv == 1) {
        regular = integrate(
            [&](double s) { return -std::pow(1.0 - s, alpha) * std::log1p(-s) * gs(s); }, 0.0, c,
            rel_tol, 1e-300);
        regular -= integrate(
            [&](double s) { return std::pow(s, alpha) * std::log(s) * (gs(s) - g_at_0); }, 0.0, c,
            rel_tol, 1e-14);
        if (g_at_0 != 0.0) singular_closed = g_at_0 * power_log_int(alpha, c);
    } else {
        regular = -integrate(
            [&](double s) {
                const double l = std::log1p(-s);
                return std::pow(1.0 - s, alpha) * l * l * gs(s);
            },
            0.0, c, rel_tol, 1e-300);
        regular -= integrate(
            [&](double s) {
                const double l = std::log(s);
                return std::pow(s, alpha) * l * l * (gs(s) - g_at_0);
            },
            0.0, c, rel_tol, 1e-14);
        if (g_at_0 != 0.0) singular_closed = g_at_0 * power_log2_int(alpha, c);
    }
    return regular - singular_closed;
}

// Quadrature for BetaBinary: gs(s) = s^{-1-theta}. The singular parts of the
// integrand are subtracted and integrated in closed form; the remainder is
// O(s^{2-theta}) at the origin.
template <int Deriv>
double kappa_quad_beta(double theta, double q, double rel_tol) {
    const double c = 0.5;
    const double alpha = q + 1.0;
    const auto gs = [&](double s) { return std::pow(s, -1.0 - theta); };
    if constexpr (Deriv == 0) {
        // 1-(1-s)^a = a s - a(a-1)/2 s^2 + O(s^3)
        const double c2 = 0.5 * alpha * (alpha - 1.0);
        double r = integrate(
            [&](double s) {
                return (one_minus_pow1m(alpha, s) - alpha * s + c2 * s * s) * gs(s);
            },
            0.0, c, rel_tol, 1e-14);
        return r + alpha * power_int(-theta, c) - c2 * power_int(1.0 - theta, c) -
               power_int(alpha - 1.0 - theta, c);
    } else if constexpr (Deriv == 1) {
        // -(1-s)^a ln(1-s) = s + (1/2 - a) s^2 + O(s^3)
        const double c2 = 0.5 - alpha;
        double r = integrate(
            [&](double s) {
                return (-std::pow(1.0 - s, alpha) * std::log1p(-s) - s - c2 * s * s) * gs(s);
            },
            0.0, c, rel_tol, 1e-14);
        return r + power_int(-theta, c) + c2 * power_int(1.0 - theta, c) -
               power_log_int(alpha - 1.0 - theta, c);
    } else {
        // (1-s)^a ln^2(1-s) = s^2 + O(s^3)
        double r = integrate(
            [&](double s) {
                const double l = std::log1p(-s);
                return (std::pow(1.0 - s, alpha) * l * l - s * s) * gs(s);
            },
            0.0, c, rel_tol, 1e-14);
        return -r - power_int(1.0 - theta, c) - power_log2_int(alpha - 1.0 - theta, c);
    }
}

template <int Deriv>
double kappa_quad_impl(const DislocationModel& m, double q, double rel_tol) {
    check_kappa_domain(m, q);
    switch (m.kind()) {
        case ModelKind::UniformBinary:
            return kappa_quad_bounded<Deriv>([](double) { return 2.0; }, 2.0, q, rel_tol);
        case ModelKind::BetaBinary:
            return kappa_quad_beta<Deriv>(m.theta(), q, rel_tol);
        case ModelKind::TableBinary:
            return kappa_quad_bounded<Deriv>([&](double s) { return m.density(1.0 - s); },
                                             m.density_at_one(), q, rel_tol);
    }
    return 0.0;
}

} // namespace detail

// kappa by adaptive quadrature regardless of model (the generic path; closed
// forms below shortcut it where available). Relative tolerance 1e-10.
inline double kappa_quadrature(const DislocationModel& m, double q, double rel_tol = 1e-10) {
    return detail::kappa_quad_impl<0>(m, q, rel_tol);
}
inline double kappa_prime_quadrature(const DislocationModel& m, double q,
                                     double rel_tol = 1e-10) {
    return detail::kappa_quad_impl<1>(m, q, rel_tol);
}
inline double kappa_second_quadrature(const DislocationModel& m, double q,
                                      double rel_tol = 1e-10) {
    return detail::kappa_quad_impl<2>(m, q, rel_tol);
}

// kappa(q) = int (1 - u^{q+1} - (1-u)^{q+1}) nu(du): increasing, concave,
// analytic on (p_lower, infty), kappa(0) = 0.
inline double kappa(const DislocationModel& m, double q) {
    detail::check_kappa_domain(m, q);
    if (m.kind() == ModelKind::UniformBinary) return q / (q + 2.0);
    return kappa_quadrature(m, q);
}

// (kappa'(q), kappa''(q)); kappa' > 0 and kappa'' < 0 on the whole domain.
inline std::pair<double, double> kappa_derivatives(const DislocationModel& m, double q) {
    detail::check_kappa_domain(m, q);
    if (m.kind() == ModelKind::UniformBinary) {
        const double d = q + 2.0;
        return {2.0 / (d * d), -4.0 / (d * d * d)};
    }
    return {kappa_prime_quadrature(m, q), kappa_second_quadrature(m, q)};
}

inline double kappa_prime(const DislocationModel& m, double q) {
    return kappa_derivatives(m, q).first;
}

// ---------------------------------------------------------------------------
// Tagged-fragment jump measure

namespace detail {

// int u g(u) du and int (1-u) g(u) du over [a,b] for one linear segment of g.
inline double seg_int_u_g(double a, double b, double ua, double ub, double ga, double gb) {
    // g(u) = ga + s (u - ua), s = (gb-ga)/(ub-ua)
    const double s = (gb - ga) / (ub - ua);
    const double c0 = ga - s * ua;
    // int u (c0 + s u) du = c0 u^2/2 + s u^3/3
    const auto F = [&](double u) { return c0 * u * u / 2.0 + s * u * u * u / 3.0; };
    return F(b) - F(a);
}
inline double seg_int_1mu_g(double a, double b, double ua, double ub, double ga, double gb) {
    const double s = (gb - ga) / (ub - ua);
    const double c0 = ga - s * ua;
    // int (1-u)(c0 + s u) du
    const auto F = [&](double u) {
        return c0 * u + (s - c0) * u * u / 2.0 - s * u * u * u / 3.0;
    };
    return F(b) - F(a);
}

// int over u in [lo,hi] of w(u) g(u) du for a table model, w in {u, 1-u}.
template <bool WeightIsU>
double table_weighted_mass(const DislocationModel& m, double lo, double hi) {
    const auto& ks = m.knots();
    double total = 0.0;
    for (std::size_t i = 1; i < ks.size(); ++i) {
        const double a = std::max(lo, ks[i - 1].u);
        const double b = std::min(hi, ks[i].u);
        if (b <= a) continue;
        const double ga = m.density(a), gb = m.density(b);
        if constexpr (WeightIsU) {
            total += seg_int_u_g(a, b, a, b, ga, gb);
        } else {
            total += seg_int_1mu_g(a, b, a, b, ga, gb);
        }
    }
    return total;
}

} // namespace detail

// Tail of the tagged-fragment jump measure: Pi(y) = L((y, infty)), the rate of
// log-size jumps exceeding y. Equivalently int [u 1{u<e^{-y}} + (1-u) 1{1-u<e^{-y}}] nu(du).
inline double levy_tail(const DislocationModel& m, double y) {
    if (!(y > 0.0)) throw DomainError("levy_tail: y must be > 0");
    switch (m.kind()) {
        case ModelKind::UniformBinary:
            return std::exp(-2.0 * y);
        case ModelKind::BetaBinary: {
            const double theta = m.theta();
            const double log2 = std::log(2.0);
            const double hi_from = std::max(y, log2);
            double tail = std::exp(-(1.0 - theta) * hi_from) / (1.0 - theta);
            if (y < log2) {
                // int_{s(y)}^{1/2} (1-s) s^{-1-theta} ds, s(y) = 1 - e^{-y}
                const auto B = [&](double s) {
                    return -std::pow(s, -theta) / theta - std::pow(s, 1.0 - theta) / (1.0 - theta);
                };
                const double sy = -std::expm1(-y);
                tail += B(0.5) - B(sy);
            }
            return tail;
        }
        case ModelKind::TableBinary: {
            const double ey = std::exp(-y);
            double tail = 0.0;
            if (ey > 0.5) tail += detail::table_weighted_mass<true>(m, 0.5, ey);
            tail += detail::table_weighted_mass<false>(m, std::max(0.5, 1.0 - ey), 1.0);
            return tail;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Exact split sampler

// One dislocation event drawn from nu (truncated to smaller piece >= eps_prime
// when eps_prime > 0). Returns sizes (s1, s2), s1 >= s2, s1 + s2 = 1 exactly.
inline std::array<double, 2> sample_split(const DislocationModel& m, double eps_prime, Rng& rng) {
    if (m.infinite_activity() && eps_prime <= 0.0) {
        throw TruncationRequired("sample_split: infinite-activity model needs eps > 0");
    }
    double u = 0.0;
    switch (m.kind()) {
        case ModelKind::UniformBinary: {
            if (eps_prime > 0.0) {
                u = rng.uniform(0.5, 1.0 - eps_prime);
            } else {
                const double x = rng.uniform01();
                u = std::max(x, 1.0 - x);
            }
            break;
        }
        case ModelKind::BetaBinary: {
            const double theta = m.theta();
            // inverse CDF of (1-u)^{-1-theta} on (1/2, 1-eps'):
            // (1-u)^{-theta} uniform between 2^theta and eps'^{-theta}
            const double lo = std::pow(2.0, theta);
            const double hi = std::pow(eps_prime, -theta);
            const double w = lo + rng.uniform01() * (hi - lo);
            u = 1.0 - std::pow(w, -1.0 / theta);
            break;
        }
        case ModelKind::TableBinary: {
            const double cap = 1.0 - std::max(eps_prime, 0.0);
            const double total = m.truncated_mass(eps_prime);
            if (!(total > 0.0)) throw DomainError("sample_split: truncation removed all mass");
            double target = rng.uniform01() * total;
            const auto& ks = m.knots();
            u = ks.back().u;
            for (std::size_t i = 1; i < ks.size(); ++i) {
                const double a = ks[i - 1].u, b = std::min(ks[i].u, cap);
                if (b <= a) break;
                const double ga = m.density(a), gb = m.density(b);
                const double seg = 0.5 * (ga + gb) * (b - a);
                if (target > seg) {
                    target -= seg;
                    continue;
                }
                // solve ga x + slope x^2/2 = target on [0, b-a]
                const double slope = (gb - ga) / (b - a);
                double x;
                if (std::abs(slope) < 1e-12 * std::max(ga, 1.0)) {
                    x = target / std::max(ga, 1e-300);
                } else {
                    x = (-ga + std::sqrt(ga * ga + 2.0 * slope * target)) / slope;
                }
                u = a + std::min(x, b - a);
                break;
            }
            break;
        }
    }
    u = std::min(std::max(u, 0.5), 1.0 - 1e-16);
    return {u, 1.0 - u};
}

// ---------------------------------------------------------------------------
// Spine jump law

// Jump law of the tagged fragment's log-size subordinator, truncated to jumps
// larger than eps. `rate` is the retained jump intensity L((eps, infty)); the
// reported simulation bias from dropped jumps is bounded by int_0^eps x L(dx).
struct SpineJumpLaw {
    DislocationModel model;
    double eps = 0.0;
    double eps_prime = 0.0;  // dislocation-level truncation: 1 - e^{-eps}
    double rate = 0.0;
    double bias_bound = 0.0;
};

inline SpineJumpLaw spine_jump_law(const DislocationModel& m, double eps = 0.0) {
    if (m.infinite_activity() && eps <= 0.0) {
        throw TruncationRequired("spine_jump_law: infinite-activity model needs eps > 0");
    }
    if (eps < 0.0) throw DomainError("spine_jump_law: eps must be >= 0");
    SpineJumpLaw law;
    law.model = m;
    law.eps = eps;
    law.eps_prime = -std::expm1(-eps);
    law.rate = eps > 0.0 ? levy_tail(m, eps) : m.total_mass();
    if (eps > 0.0 && m.kind() == ModelKind::BetaBinary) {
        // int_0^eps x L(dx) in s = 1 - e^{-x}: x = -log(1-s), density (1-s) s^{-1-theta};
        // subtract the s^{-theta} leading term and integrate it in closed form
        const double theta = m.theta();
        const double se = law.eps_prime;
        const double head = detail::power_int(-theta, se);
        const double rest = integrate(
            [&](double s) {
                return (-std::log1p(-s) * (1.0 - s) - s) * std::pow(s, -1.0 - theta);
            },
            0.0, se, 1e-9, 1e-14);
        law.bias_bound = head + rest;
    }
    return law;
}

// Sampler for one tilted spine jump: density proportional to e^{-p x} L(dx) on
// (eps, infty). Build once per (law, tilt); sampling is then cheap.
class TiltedSpineSampler {
public:
    TiltedSpineSampler(const SpineJumpLaw& law, double p) : law_(law), p_(p) {
        const DislocationModel& m = law.model;
        if (!(p > p_lower(m))) {
            throw DomainError("spine jump tilt p must exceed p_lower");
        }
        switch (m.kind()) {
            case ModelKind::UniformBinary: {
                rate_ = 2.0 * std::exp(-(p + 2.0) * law.eps) / (p + 2.0);
                break;
            }
            case ModelKind::BetaBinary: {
                const double theta = m.theta();
                const double log2 = std::log(2.0);
                hi_from_ = std::max(law.eps, log2);
                hi_rate_exp_ = p + 1.0 - theta;
                mass_hi_ = std::exp(-hi_rate_exp_ * hi_from_) / hi_rate_exp_;
                s_lo_ = -std::expm1(-law.eps);
                if (law.eps < log2) {
                    // int_{s_lo}^{1/2} (1-s)^{p+1} s^{-1-theta} ds
                    mass_lo_ = integrate(
                        [&](double s) {
                            return std::pow(1.0 - s, p + 1.0) * std::pow(s, -1.0 - theta);
                        },
                        s_lo_, 0.5, 1e-11, 1e-300);
                    accept_bound_ = std::max(std::pow(1.0 - s_lo_, p + 1.0),
                                             std::pow(0.5, p + 1.0));
                }
                rate_ = mass_hi_ + mass_lo_;
                break;
            }
            case ModelKind::TableBinary: {
                // rejection from nu/mass with weight u^{p+1} + (1-u)^{p+1}
                if (p <= -1.0 && m.density_at_one() > 0.0) {
                    throw DomainError(
                        "table-binary spine tilt p <= -1 with support to u=1 is not samplable");
                }
                const double total = m.truncated_mass(law.eps_prime);
                double wmax = 0.0;
                double wint = 0.0;
                wint = integrate(
                    [&](double u) {
                        return (std::pow(u, p + 1.0) + std::pow(1.0 - u, p + 1.0)) * m.density(u);
                    },
                    0.5, 1.0 - std::max(law.eps_prime, 1e-14), 1e-10, 1e-14);
                for (int i = 0; i <= 4096; ++i) {
                    const double u = 0.5 + (0.5 - std::max(law.eps_prime, 1e-14)) * i / 4096.0;
                    wmax = std::max(wmax, std::pow(u, p + 1.0) + std::pow(1.0 - u, p + 1.0));
                }
                accept_bound_ = wmax * (1.0 + 1e-9);
                table_total_ = total;
                rate_ = wint;
                break;
            }
        }
    }

    // Retained tilted jump intensity: int_eps^infty e^{-p x} L(dx).
    double rate() const { return rate_; }

    double sample(Rng& rng) const {
        const DislocationModel& m = law_.model;
        switch (m.kind()) {
            case ModelKind::UniformBinary:
                return law_.eps + rng.exponential(p_ + 2.0);
            case ModelKind::BetaBinary: {
                if (rng.uniform01() * rate_ < mass_hi_) {
                    return hi_from_ + rng.exponential(hi_rate_exp_);
                }
                // propose s ~ s^{-1-theta} on (s_lo, 1/2), accept w.p. (1-s)^{p+1}/bound
                const double theta = m.theta();
                const double wlo = std::pow(std::max(s_lo_, 1e-300), -theta);
                const double whi = std::pow(0.5, -theta);
                for (;;) {
                    const double w = whi + rng.uniform01() * (wlo - whi);
                    const double s = std::pow(w, -1.0 / theta);
                    if (rng.uniform01() * accept_bound_ <= std::pow(1.0 - s, p_ + 1.0)) {
                        return -std::log1p(-s);
                    }
                }
            }
            case ModelKind::TableBinary: {
                for (;;) {
                    const auto pieces = sample_split(m, law_.eps_prime, rng);
                    const double w1 = std::pow(pieces[0], p_ + 1.0);
                    const double w2 = std::pow(pieces[1], p_ + 1.0);
                    if (rng.uniform01() * accept_bound_ <= w1 + w2) {
                        const double pick =
                            (rng.uniform01() * (w1 + w2) < w1) ? pieces[0] : pieces[1];
                        return -std::log(pick);
                    }
                }
            }
        }
        return 0.0;
    }

private:
    SpineJumpLaw law_;
    double p_ = 0.0;
    double rate_ = 0.0;
    // BetaBinary internals
    double mass_hi_ = 0.0, mass_lo_ = 0.0, hi_from_ = 0.0, hi_rate_exp_ = 0.0, s_lo_ = 0.0;
    double accept_bound_ = 1.0;
    // TableBinary internals
    double table_total_ = 0.0;
};

// One tilted spine jump. For repeated draws at a fixed tilt, hold a
// TiltedSpineSampler instead.
inline double sample_spine_jump(const SpineJumpLaw& law, double tilt_p, Rng& rng) {
    return TiltedSpineSampler(law, tilt_p).sample(rng);
}

inline double tilted_spine_rate(const SpineJumpLaw& law, double tilt_p) {
    return TiltedSpineSampler(law, tilt_p).rate();
}

} // namespace fragrate
