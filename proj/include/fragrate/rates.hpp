#pragma once

// Rate function C(v) and the critical constants of a dislocation model.
//
// kappa is increasing and concave on (p_lower, infty), so kappa' decreases
// from v_max = kappa'(p_lower+) down to 0. For v in (0, v_max):
//   Upsilon_v  = the unique root of kappa'(p) = v
//   C(v)       = (Upsilon_v + 1) v - kappa(Upsilon_v)
//              = inf_p {(p+1) v - kappa(p)}
// C is concave, C'(v) = Upsilon_v + 1, and C vanishes at v_min = kappa'(p_bar)
// where p_bar solves kappa(q) = (q+1) kappa'(q). C > 0 on (v_min, v_max)
// (exponential growth of counts), C < 0 below v_min (decay of presence).

#include <cmath>
#include <limits>
#include <string>

#include "fragrate/dislocation.hpp"
#include "fragrate/errors.hpp"
#include "fragrate/roots.hpp"

namespace fragrate {

// Exponent governing the growth of E|M_t^(p)|^{1+alpha} for the additive
// martingale: (1+alpha) kappa(p) - kappa(p + alpha (p+1)). Vanishes at
// alpha = 0 (exactly, also in floating point); for alpha small enough it is
// negative below p_bar and positive at or above it.
inline double additive_moment_rate(const DislocationModel& m, double p, double alpha) {
    return (1.0 + alpha) * kappa(m, p) - kappa(m, p + alpha * (p + 1.0));
}

enum class ClassicalRegime { Supercritical, Subcritical };
enum class ConfinedRegime { Supercritical, Subcritical };

struct SpeedClassification {
    ClassicalRegime classical;
    ConfinedRegime confined;
};

class RateProfile {
public:
    explicit RateProfile(DislocationModel model) : model_(std::move(model)) {
        plower_ = fragrate::p_lower(model_);
        vtyp_ = kappa_prime(model_, 0.0);
        pbar_ = solve_p_bar();
        vmin_ = kappa_prime(model_, pbar_);
        vmax_ = probe_v_max();
    }

    const DislocationModel& model() const { return model_; }
    double p_lower() const { return plower_; }
    double p_bar() const { return pbar_; }
    double v_typ() const { return vtyp_; }
    double v_min() const { return vmin_; }
    double v_max() const { return vmax_; }  // +infinity when kappa' blows up at p_lower+

    // Unique root of kappa'(p) = v; strictly decreasing in v.
    double upsilon(double v) const {
        check_speed(v);
        double lo, hi;  // bracket with kappa'(lo) > v > kappa'(hi)
        if (vtyp_ > v) {
            lo = 0.0;
            double step = 1.0;
            hi = step;
            while (kappa_prime(model_, hi) > v) {
                step *= 2.0;
                hi += step;
                if (hi > 1e9) throw RootBracketError("upsilon: kappa' never drops below v");
            }
        } else {
            hi = 0.0;
            // approach p_lower geometrically from above (p_lower may be -inf)
            double off = 1.0;
            lo = std::isfinite(plower_) ? plower_ + off : -1.0;
            while (kappa_prime(model_, lo) < v) {
                off *= 0.5;
                lo = std::isfinite(plower_) ? plower_ + off : lo * 2.0;
                if (off < 4e-9 || lo < -1e9) {
                    throw RootBracketError("upsilon: v is not attained below kappa'(0)");
                }
            }
        }
        const auto f = [&](double p) { return kappa_prime(model_, p) - v; };
        double root = bisect(f, lo, hi, 1e-15);
        // one Newton polish with kappa''; keeps |kappa'(root) - v| at the target
        const auto [kp, kpp] = kappa_derivatives(model_, root);
        if (kpp != 0.0) {
            const double step = (kp - v) / kpp;
            if (root - step > lo && root - step < hi) root -= step;
        }
        // residual check; quadrature-backed kappa' carries its own noise floor
        const double floor =
            model_.kind() == ModelKind::UniformBinary ? 0.0 : 3e-10 * std::max(1.0, v);
        if (std::abs(kappa_prime(model_, root) - v) >
            std::max(1e-12 * std::max(1.0, v), floor)) {
            throw ToleranceError("upsilon: root refinement missed the residual target");
        }
        return root;
    }

    // C(v) = (Upsilon_v + 1) v - kappa(Upsilon_v).
    double C(double v) const {
        const double p = upsilon(v);
        return (p + 1.0) * v - kappa(model_, p);
    }

    // Signs of C(v) and v - rho decide the regimes. rho is supplied by the
    // caller (scale-function machinery). Refuses to classify within the
    // ambiguity margin of either criticality.
    SpeedClassification classify(double v, double rho, double margin = 1e-8) const {
        const double c = C(v);
        const double d = v - rho;
        if (std::abs(c) < margin || std::abs(d) < margin) {
            throw ToleranceError("classify: speed is within " + std::to_string(margin) +
                                 " of a critical boundary");
        }
        if (c - d < -1e-6) {
            throw ToleranceError("classify: rate ordering C(v) >= v - rho violated");
        }
        return {c > 0.0 ? ClassicalRegime::Supercritical : ClassicalRegime::Subcritical,
                d > 0.0 ? ConfinedRegime::Supercritical : ConfinedRegime::Subcritical};
    }

private:
    void check_speed(double v) const {
        if (!(v > 0.0) || !(v < vmax_)) {
            throw DomainError("speed v = " + std::to_string(v) + " outside (0, v_max)");
        }
    }

    double solve_p_bar() const {
        // g(q) = kappa(q) - (q+1) kappa'(q) is increasing (g' = -(q+1) kappa'' > 0
        // for q > -1) with g(0) = -kappa'(0) < 0.
        const auto g = [&](double q) {
            const auto [kp, kpp] = kappa_derivatives(model_, q);
            (void)kpp;
            return kappa(model_, q) - (q + 1.0) * kp;
        };
        double hi = 1.0, step = 1.0;
        while (g(hi) < 0.0) {
            step *= 2.0;
            hi += step;
            if (hi > 1e6) {
                throw RootBracketError("p_bar: kappa(q) - (q+1) kappa'(q) has no sign change");
            }
        }
        return bisect(g, 0.0, hi, 1e-14);
    }

    double probe_v_max() const {
        // kappa'(p_lower+): declare +infinity if it exceeds any practical speed.
        const double probe_at = std::isfinite(plower_) ? plower_ + 1e-7 : -50.0;
        double k;
        try {
            k = kappa_prime(model_, probe_at);
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
        if (k > 1e6) return std::numeric_limits<double>::infinity();
        return k;
    }

    DislocationModel model_;
    double plower_, vtyp_, pbar_, vmin_, vmax_;
};

} // namespace fragrate
