#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "vwap/common.hpp"
#include "vwap/cost_model.hpp"
#include "vwap/volume_model.hpp"

namespace vwap {

/// Sufficient statistic of the execution so far: shares we executed and
/// shares the market traded before interval t.
struct ExecutionState {
    double cum_u = 0.0;
    double cum_m = 0.0;
    int t = 1;
};

/// Per-stage expectations of the control problem under the conditional
/// marginals at the current information time. The dynamics are fixed
/// (A = I, B = e1, c = (0, m)); only the cost expectations vary.
struct LqscStageParams {
    Eigen::Matrix2d e_Q = Eigen::Matrix2d::Zero();
    double r = 0.0;    // deterministic linear action cost
    double e_R = 0.0;  // E[quadratic action cost]
    Eigen::Vector2d e_c = Eigen::Vector2d::Zero();
    double e_m2 = 0.0;  // E[m^2], enters only the value-function constant
};

/// Stage expectations from log-normal conditional moments.
inline LqscStageParams make_stage(double lambda, double sigma, double spread, double alpha,
                                  double C, double e_inv_V, double e_inv_V2, double e_m,
                                  double e_inv_m, double e_m2) {
    LqscStageParams st;
    const double ls2 = lambda * sigma * sigma;
    st.e_Q(0, 0) = ls2 / (C * C);
    st.e_Q(0, 1) = st.e_Q(1, 0) = -ls2 * e_inv_V / C;
    st.e_Q(1, 1) = ls2 * e_inv_V2;
    st.r = -0.5 * spread / C;
    st.e_R = 0.5 * alpha * spread * e_inv_m / C;
    st.e_c << 0.0, e_m;
    st.e_m2 = e_m2;
    return st;
}

/// Quadratic cost-to-go v(x) = x^T D x + d^T x + b.
struct ValueCoeffs {
    Eigen::Matrix2d D;
    Eigen::Vector2d d;
    double b = 0.0;
};

/// Affine policy u = K x + l.
struct PolicyCoeffs {
    Eigen::RowVector2d K;
    double l = 0.0;
};

/// The three scalars of the reduced recursion: beta = D(0,0), gamma = D(0,1),
/// delta = d(0).
struct ScalarCoeffs {
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
};

/// Backward value recursion over stages tau = t..T, the last stage being the
/// constraint-forced final trade u_T = C - x_1. Derived from the Bellman
/// equation for the affine-dynamics/quadratic-cost problem:
///   kappa = E[R] + D'(0,0)
///   K = -e1^T D' / kappa,  l = -(r + d'(0) + 2 e1^T D' E[c]) / (2 kappa)
///   D = E[Q] + D' - (D' e1)(e1^T D') / kappa
///   d = d' + 2 D' (e1 l + E[c])
///   b = b' - kappa l^2 + D'(1,1) E[m^2] + d'^T E[c]
inline std::pair<std::vector<ValueCoeffs>, std::vector<PolicyCoeffs>> riccati_full(
    std::span<const LqscStageParams> stages, double C) {
    const int n = static_cast<int>(stages.size());
    if (n == 0) throw UsageError("riccati_full: empty stage list");
    std::vector<ValueCoeffs> values(static_cast<std::size_t>(n));
    std::vector<PolicyCoeffs> policies(static_cast<std::size_t>(n));

    const LqscStageParams& fin = stages[static_cast<std::size_t>(n - 1)];
    ValueCoeffs& vT = values[static_cast<std::size_t>(n - 1)];
    vT.D = fin.e_Q;
    vT.D(0, 0) += fin.e_R;
    vT.d = -(2.0 * C * fin.e_R + fin.r) * Eigen::Vector2d::UnitX();
    vT.b = fin.e_R * C * C + fin.r * C;
    policies[static_cast<std::size_t>(n - 1)].K << -1.0, 0.0;
    policies[static_cast<std::size_t>(n - 1)].l = C;

    for (int i = n - 2; i >= 0; --i) {
        const LqscStageParams& st = stages[static_cast<std::size_t>(i)];
        const ValueCoeffs& next = values[static_cast<std::size_t>(i + 1)];
        const double kappa = st.e_R + next.D(0, 0);
        if (!(kappa > 0.0))
            throw NumericError("riccati_full: vanishing denominator at stage " +
                               std::to_string(i));
        Eigen::RowVector2d g = next.D.row(0);
        PolicyCoeffs& pol = policies[static_cast<std::size_t>(i)];
        pol.K = -g / kappa;
        pol.l = -(st.r + next.d(0) + 2.0 * g.dot(st.e_c)) / (2.0 * kappa);

        ValueCoeffs& val = values[static_cast<std::size_t>(i)];
        val.D = st.e_Q + next.D - (g.transpose() * g) / kappa;
        val.D = 0.5 * (val.D + val.D.transpose()).eval();
        val.d = next.d + 2.0 * next.D * (Eigen::Vector2d::UnitX() * pol.l + st.e_c);
        val.b = next.b - kappa * pol.l * pol.l + next.D(1, 1) * st.e_m2 + next.d.dot(st.e_c);
    }
    return {std::move(values), std::move(policies)};
}

/// Reduced recursion carrying only the scalars the policy needs.
inline std::pair<std::vector<ScalarCoeffs>, std::vector<PolicyCoeffs>> riccati_scalar(
    std::span<const LqscStageParams> stages, double C) {
    const int n = static_cast<int>(stages.size());
    if (n == 0) throw UsageError("riccati_scalar: empty stage list");
    std::vector<ScalarCoeffs> coeffs(static_cast<std::size_t>(n));
    std::vector<PolicyCoeffs> policies(static_cast<std::size_t>(n));

    const LqscStageParams& fin = stages[static_cast<std::size_t>(n - 1)];
    ScalarCoeffs& cT = coeffs[static_cast<std::size_t>(n - 1)];
    cT.beta = fin.e_Q(0, 0) + fin.e_R;
    cT.gamma = fin.e_Q(0, 1);
    cT.delta = -(2.0 * C * fin.e_R + fin.r);
    policies[static_cast<std::size_t>(n - 1)].K << -1.0, 0.0;
    policies[static_cast<std::size_t>(n - 1)].l = C;

    for (int i = n - 2; i >= 0; --i) {
        const LqscStageParams& st = stages[static_cast<std::size_t>(i)];
        const ScalarCoeffs& nx = coeffs[static_cast<std::size_t>(i + 1)];
        const double kappa = st.e_R + nx.beta;
        if (!(kappa > 0.0))
            throw NumericError("riccati_scalar: vanishing denominator at stage " +
                               std::to_string(i));
        PolicyCoeffs& pol = policies[static_cast<std::size_t>(i)];
        pol.K << -nx.beta / kappa, -nx.gamma / kappa;
        pol.l = -(st.r + nx.delta + 2.0 * nx.gamma * st.e_c(1)) / (2.0 * kappa);

        ScalarCoeffs& cur = coeffs[static_cast<std::size_t>(i)];
        cur.beta = st.e_Q(0, 0) + nx.beta - nx.beta * nx.beta / kappa;
        cur.gamma = st.e_Q(0, 1) + nx.gamma - nx.beta * nx.gamma / kappa;
        cur.delta = nx.delta + 2.0 * (nx.beta * pol.l + nx.gamma * st.e_c(1));
    }
    return {std::move(coeffs), std::move(policies)};
}

/// Pure-tracking (lambda = infinity) action in closed form: trade the expected
/// market fraction for this interval plus the accumulated tracking gap.
inline double policy_lambda_inf(const ExecutionState& state, double C, double e_inv_V,
                                double e_m_t) {
    return C * e_inv_V * (state.cum_m + e_m_t) - state.cum_u;
}

struct StepTrace {
    int t = 0;
    double cum_u = 0.0;
    double cum_m = 0.0;
    double e_inv_V = 0.0;
    double u_raw = 0.0;
    double u_clipped = 0.0;
};

struct ShdpResult {
    Schedule schedule;
    std::vector<StepTrace> trace;
    bool final_clipped = false;   // forced final trade went negative
    bool renormalized = false;    // proportional rescale restored sum(u) = C
    int clip_events = 0;          // interior steps where max(u,0) engaged
};

/// Closed-loop execution of one day for several risk-aversion levels at once.
/// The conditional volume distribution and its moments depend only on the
/// realized day, so they are computed once per interval and shared.
inline std::vector<ShdpResult> shdp_execute_multi(const MinuteSeries& day, const OrderSpec& order,
                                                  const CostParams& costs,
                                                  const VolatilityProfile& vol,
                                                  const VolumeModel& model,
                                                  std::span<const RiskAversion> lambdas) {
    order.validate();
    costs.validate();
    const int T = day.intervals();
    if (model.T != T || costs.spread.size() != T || vol.sigma.size() != T)
        throw DataError("shdp_execute: dimension mismatch");
    const double C = order.C;
    const int L = static_cast<int>(lambdas.size());

    std::vector<ShdpResult> results(static_cast<std::size_t>(L));
    for (int a = 0; a < L; ++a) {
        auto& r = results[static_cast<std::size_t>(a)];
        r.schedule.u.setZero(T);
        r.schedule.lambda = lambdas[a];
        r.schedule.method =
            lambdas[a].infinite ? Method::DynamicLambdaInf : Method::DynamicShdp;
        r.trace.reserve(static_cast<std::size_t>(T));
    }
    std::vector<double> cum_u(static_cast<std::size_t>(L), 0.0);

    ConditionalVolumeDist dist = condition(model, order.symbol, {});
    double cum_m = 0.0;
    std::vector<LqscStageParams> stages;
    Eigen::ArrayXd e_m2;

    for (int t = 1; t < T; ++t) {
        const VolumeMoments mom = moments(dist);
        const int n = dist.remaining();  // stages t..T
        bool any_finite = false;
        for (int a = 0; a < L; ++a) any_finite |= !lambdas[a].infinite;
        if (any_finite)
            e_m2 = (2.0 * dist.nu.array() + 2.0 * dist.sigma.diagonal().array().max(0.0)).exp();

        for (int a = 0; a < L; ++a) {
            auto& res = results[static_cast<std::size_t>(a)];
            ExecutionState state{cum_u[static_cast<std::size_t>(a)], cum_m, t};
            double u_raw = 0.0;
            if (lambdas[a].infinite) {
                u_raw = policy_lambda_inf(state, C, mom.e_inv_V, mom.e_m[0]);
            } else {
                const double e_inv_V2 =
                    1.0 / (mom.e_V * mom.e_V) +
                    3.0 * mom.var_V / (mom.e_V * mom.e_V * mom.e_V * mom.e_V);
                stages.clear();
                stages.reserve(static_cast<std::size_t>(n));
                for (int j = 0; j < n; ++j) {
                    const int tau = t + j;  // 1-based interval
                    stages.push_back(make_stage(lambdas[a].value, vol.sigma[tau - 1],
                                                costs.spread[tau - 1], costs.alpha, C,
                                                mom.e_inv_V, e_inv_V2, mom.e_m[j],
                                                mom.e_inv_m[j], e_m2[j]));
                }
                auto [coeffs, policies] = riccati_scalar(stages, C);
                u_raw = policies.front().K(0) * state.cum_u + policies.front().K(1) * state.cum_m +
                        policies.front().l;
            }
            const double u = std::max(u_raw, 0.0);
            if (u_raw < 0.0) res.clip_events += 1;
            res.trace.push_back({t, state.cum_u, state.cum_m, mom.e_inv_V, u_raw, u});
            res.schedule.u[t - 1] = u;
            cum_u[static_cast<std::size_t>(a)] += u;
        }

        advance(dist, day.volumes[t - 1]);
        cum_m += day.volumes[t - 1];
    }

    const VolumeMoments last = moments(dist);
    for (int a = 0; a < L; ++a) {
        auto& res = results[static_cast<std::size_t>(a)];
        const double remainder = C - cum_u[static_cast<std::size_t>(a)];
        const double u = std::max(remainder, 0.0);
        res.trace.push_back({T, cum_u[static_cast<std::size_t>(a)], cum_m, last.e_inv_V,
                             remainder, u});
        res.schedule.u[T - 1] = u;
        if (remainder < 0.0) {
            res.final_clipped = true;
            res.renormalized = true;
            res.schedule.u *= C / res.schedule.u.sum();
        }
        res.schedule.validate(C);
    }
    return results;
}

inline ShdpResult shdp_execute(const MinuteSeries& day, const OrderSpec& order,
                               const CostParams& costs, const VolatilityProfile& vol,
                               const VolumeModel& model) {
    RiskAversion lam[1] = {order.lambda};
    auto v = shdp_execute_multi(day, order, costs, vol, model, lam);
    return std::move(v.front());
}

}  // namespace vwap
