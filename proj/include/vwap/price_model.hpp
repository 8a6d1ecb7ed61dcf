#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vwap/common.hpp"
#include "vwap/market_data.hpp"

namespace vwap {

/// Per-interval return standard deviations, sigma[t-1] = sd of the relative
/// increment entering interval t.
struct VolatilityProfile {
    Eigen::VectorXd sigma;

    int intervals() const { return static_cast<int>(sigma.size()); }

    void validate() const {
        for (int t = 0; t < intervals(); ++t)
            if (!(sigma[t] >= 0.0)) throw DataError("negative volatility entry");
    }
};

/// Pooled sample estimate of the volatility profile over a window of stock-days.
///
/// The squared relative change from interval t to t+1 estimates the variance of
/// the increment entering t+1, so it is stored at index t+1. The first entry
/// (the overnight increment, not observable from intraday bars) is copied from
/// the second.
inline VolatilityProfile estimate_sigma(const std::vector<const MinuteSeries*>& window) {
    if (window.empty()) throw DataError("estimate_sigma: empty window");
    const int T = window.front()->intervals();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(T);
    for (const auto* s : window) {
        if (s->intervals() != T) throw DataError("estimate_sigma: mixed interval counts");
        for (int t = 0; t + 1 < T; ++t) {
            double r = (s->prices[t + 1] - s->prices[t]) / s->prices[t];
            acc[t + 1] += r * r;
        }
    }
    VolatilityProfile out;
    out.sigma = (acc / static_cast<double>(window.size())).cwiseSqrt();
    if (T > 1) out.sigma[0] = out.sigma[1];
    return out;
}

}  // namespace vwap
