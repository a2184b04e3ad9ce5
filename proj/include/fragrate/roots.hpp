#pragma once

#include <cmath>
#include <string>

#include "fragrate/errors.hpp"

namespace fragrate {

// Bisection on a bracketing interval [lo, hi] with f(lo), f(hi) of opposite
// sign (either order). Returns the midpoint of the final bracket.
template <typename F>
double bisect(const F& f, double lo, double hi, double flo, double fhi,
              double xtol = 1e-14, int max_iter = 200) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw RootBracketError("bisect: endpoints do not bracket a sign change");
    }
    for (int i = 0; i < max_iter; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo < xtol * (1.0 + std::abs(mid)) || mid <= lo || mid >= hi) {
            return mid;
        }
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

template <typename F>
double bisect(const F& f, double lo, double hi, double xtol = 1e-14,
              int max_iter = 200) {
    return bisect(f, lo, hi, f(lo), f(hi), xtol, max_iter);
}

// Expands hi geometrically away from lo until f(hi) changes sign against
// f(lo), then bisects. `step` is the initial offset, doubled each try.
template <typename F>
double find_root_expanding_up(const F& f, double lo, double step,
                              double limit, double xtol = 1e-14) {
    const double flo = f(lo);
    if (flo == 0.0) return lo;
    double hi = lo;
    for (int i = 0; i < 200; ++i) {
        hi = std::min(hi + step, limit);
        const double fhi = f(hi);
        if (fhi == 0.0) return hi;
        if ((fhi > 0.0) != (flo > 0.0)) return bisect(f, lo, hi, flo, fhi, xtol);
        if (hi >= limit) break;
        step *= 2.0;
    }
    throw RootBracketError("find_root_expanding_up: no sign change up to limit " +
                           std::to_string(limit));
}

} // namespace fragrate
