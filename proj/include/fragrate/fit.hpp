#pragma once

// Weighted least-squares fit of an exponential rate: given per-time estimates
// y(t) with standard errors, regress log y on t with weights 1/se(log y)^2.
// Points with nonpositive estimates carry no information about the log rate
// and are excluded (and reported).

#include <cmath>
#include <cstddef>
#include <vector>

#include "fragrate/errors.hpp"

namespace fragrate {

struct RatePoint {
    double t;
    double estimate;
    double std_error;
};

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_lo = 0.0;   // 95% interval for the slope
    double ci_hi = 0.0;
    std::size_t n_used = 0;
    std::vector<std::size_t> excluded;  // indices of dropped points
};

inline FitResult fit_rate(const std::vector<RatePoint>& points) {
    FitResult out;
    double sw = 0.0, st = 0.0, sy = 0.0;
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!(p.estimate > 0.0) || !std::isfinite(p.estimate) || !std::isfinite(p.t)) {
            out.excluded.push_back(i);
            continue;
        }
        used.push_back(i);
    }
    if (used.size() < 3) {
        throw InsufficientPoints("fit_rate: need at least 3 usable points, have " +
                                 std::to_string(used.size()));
    }
    std::vector<double> w(used.size()), ly(used.size());
    for (std::size_t k = 0; k < used.size(); ++k) {
        const auto& p = points[used[k]];
        const double se_log = p.std_error > 0.0 ? p.std_error / p.estimate : 1e-12;
        w[k] = 1.0 / (se_log * se_log);
        ly[k] = std::log(p.estimate);
        sw += w[k];
        st += w[k] * p.t;
        sy += w[k] * ly[k];
    }
    const double tbar = st / sw;
    const double ybar = sy / sw;
    double stt = 0.0, sty = 0.0;
    for (std::size_t k = 0; k < used.size(); ++k) {
        const double dt = points[used[k]].t - tbar;
        stt += w[k] * dt * dt;
        sty += w[k] * dt * (ly[k] - ybar);
    }
    if (!(stt > 0.0)) throw InsufficientPoints("fit_rate: degenerate time grid");
    out.slope = sty / stt;
    out.intercept = ybar - out.slope * tbar;
    out.slope_se = std::sqrt(1.0 / stt);  // known per-point variances
    out.ci_lo = out.slope - 1.959963984540054 * out.slope_se;
    out.ci_hi = out.slope + 1.959963984540054 * out.slope_se;
    out.n_used = used.size();
    return out;
}

} // namespace fragrate
