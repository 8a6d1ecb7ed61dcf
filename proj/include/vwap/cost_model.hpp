#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "vwap/common.hpp"
#include "vwap/market_data.hpp"
#include "vwap/price_model.hpp"

namespace vwap {

/// Risk-aversion weight; infinity (pure tracking) is a distinct mode, not a
/// large float.
struct RiskAversion {
    double value = 0.0;
    bool infinite = false;

    static RiskAversion finite(double v) {
        if (!(v >= 0.0)) throw UsageError("lambda must be non-negative");
        return {v, false};
    }
    static RiskAversion infinity() { return {0.0, true}; }

    static RiskAversion parse(const std::string& s) {
        if (s == "inf" || s == "Inf" || s == "INF") return infinity();
        return finite(parse_double(s, "lambda"));
    }

    std::string str() const { return infinite ? "inf" : format_double(value); }

    bool operator==(const RiskAversion& o) const {
        return infinite == o.infinite && (infinite || value == o.value);
    }
};

enum class Method { StaticClosedForm, StaticQp, DynamicShdp, DynamicLambdaInf };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::StaticClosedForm: return "static-closed-form";
        case Method::StaticQp: return "static-qp";
        case Method::DynamicShdp: return "dynamic-shdp";
        case Method::DynamicLambdaInf: return "dynamic-lambda-inf";
    }
    throw UsageError("unknown method");
}

/// Transaction-cost parameters: fractional half-spread profile and the
/// market-order participation coefficient alpha.
struct CostParams {
    Eigen::VectorXd spread;  // fractional, e.g. 2e-4 for 2 b.p.
    double alpha = 0.0;

    static CostParams constant(int T, double s, double alpha) {
        if (!(s >= 0.0) || !(alpha >= 0.0)) throw UsageError("spread and alpha must be >= 0");
        return {Eigen::VectorXd::Constant(T, s), alpha};
    }

    void validate() const {
        if (!(alpha >= 0.0)) throw DataError("alpha must be >= 0");
        for (int t = 0; t < spread.size(); ++t)
            if (!(spread[t] >= 0.0)) throw DataError("negative spread entry");
    }
};

struct OrderSpec {
    std::string symbol;
    std::string date;
    double C = 0.0;  // shares to buy
    RiskAversion lambda;

    void validate() const {
        if (!(C > 0.0)) throw DataError("order size must be positive");
    }
};

/// Executed volumes for one order. Feasible by contract: u >= 0 and
/// sum(u) = C within 1e-9 C.
struct Schedule {
    Eigen::VectorXd u;
    Method method = Method::StaticClosedForm;
    RiskAversion lambda;
    bool degenerate = false;  // every feasible point was optimal

    void validate(double C) const {
        for (int t = 0; t < u.size(); ++t)
            if (!(u[t] >= 0.0)) throw NumericError("schedule has negative volume");
        if (std::abs(u.sum() - C) > 1e-9 * C)
            throw NumericError("schedule does not sum to order size");
    }
};

/// Effective per-share price for trading u against market volume m:
/// p (1 - s/2 + alpha (s/2) u/m). Linear in the participation rate.
inline double effective_price(double p, double s, double alpha, double u, double m) {
    if (!(p > 0.0)) throw DataError("effective_price: non-positive price");
    if (!(m > 0.0)) throw DataError("effective_price: zero market volume");
    if (!(u >= 0.0)) throw DataError("effective_price: negative trade");
    return p * (1.0 - 0.5 * s + alpha * 0.5 * s * (u / m));
}

/// Realized normalized slippage and its decomposition. tracking_term is the
/// benchmark shortfall at raw prices, cost_term the spread/impact component;
/// S = tracking_term + cost_term by construction. var_term_1/var_term_2 are
/// the realized values of the two variance components used by the ex-post
/// ratio diagnostic.
struct SlippageReport {
    double S = 0.0;
    double tracking_term = 0.0;
    double cost_term = 0.0;
    double var_term_1 = 0.0;
    double var_term_2 = 0.0;
};

inline SlippageReport realized_slippage(const MinuteSeries& day, const Schedule& schedule,
                                        const OrderSpec& order, const CostParams& costs,
                                        const VolatilityProfile& vol) {
    order.validate();
    const int T = day.intervals();
    if (schedule.u.size() != T || costs.spread.size() != T || vol.sigma.size() != T)
        throw DataError("realized_slippage: dimension mismatch");
    const double C = order.C;
    const double V = day.total_volume();
    const double p_vwap = day.prices.dot(day.volumes) / V;

    SlippageReport rep;
    rep.tracking_term = (day.prices.dot(schedule.u) - C * p_vwap) / (C * p_vwap);
    double cost = 0.0;
    for (int t = 0; t < T; ++t) {
        if (!(day.volumes[t] > 0.0))
            throw DataError("realized_slippage: zero market volume at minute " +
                            std::to_string(t + 1));
        const double ut = schedule.u[t];
        cost += 0.5 * costs.spread[t] *
                (costs.alpha * ut * ut / (C * day.volumes[t]) - ut / C);
    }
    rep.cost_term = cost;
    rep.S = rep.tracking_term + rep.cost_term;
    rep.var_term_2 = cost;

    double vt1 = 0.0;
    double cum_m = 0.0, cum_u = 0.0;
    for (int t = 0; t + 1 < T; ++t) {
        cum_m += day.volumes[t];
        cum_u += schedule.u[t];
        const double dev = cum_m / V - cum_u / C;
        vt1 += vol.sigma[t + 1] * vol.sigma[t + 1] * dev * dev;
    }
    rep.var_term_1 = vt1;
    return rep;
}

/// Pre-approximation slippage from the raw cash flow at effective prices.
/// Differs from realized_slippage().S by the price-weighting of the cost
/// component, so the two paths make that approximation error measurable.
inline double realized_slippage_cashflow(const MinuteSeries& day, const Schedule& schedule,
                                         const OrderSpec& order, const CostParams& costs) {
    order.validate();
    const int T = day.intervals();
    if (schedule.u.size() != T || costs.spread.size() != T)
        throw DataError("realized_slippage_cashflow: dimension mismatch");
    const double C = order.C;
    const double p_vwap = day.prices.dot(day.volumes) / day.total_volume();
    double paid = 0.0;
    for (int t = 0; t < T; ++t)
        paid += schedule.u[t] * effective_price(day.prices[t], costs.spread[t], costs.alpha,
                                                schedule.u[t], day.volumes[t]);
    return (paid - C * p_vwap) / (C * p_vwap);
}

}  // namespace vwap
