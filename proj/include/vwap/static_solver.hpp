#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vwap/common.hpp"
#include "vwap/cost_model.hpp"

namespace vwap {

/// Open-loop scheduling problem: expected-cost and tracking-variance terms
/// with the cumulative-executed-fraction coupling.
struct StaticProblem {
    double C = 0.0;
    Eigen::VectorXd spread;  // s_t
    double alpha = 0.0;
    Eigen::VectorXd sigma2;  // per-interval return variances
    Eigen::VectorXd M;       // expected market fraction executed before t, M_1 = 0
    Eigen::VectorXd kappa;   // E[1/m_t]
    double lambda = 0.0;

    int intervals() const { return static_cast<int>(spread.size()); }

    void validate() const {
        const int T = intervals();
        if (T == 0 || sigma2.size() != T || M.size() != T || kappa.size() != T)
            throw DataError("static problem dimension mismatch");
        if (!(C > 0.0)) throw DataError("order size must be positive");
        if (!(alpha >= 0.0) || !(lambda >= 0.0) || !std::isfinite(lambda))
            throw DataError("alpha and lambda must be finite and non-negative");
        if (std::abs(M[0]) > 1e-12) throw DataError("M_1 must be zero");
        if (M[T - 1] > 1.0 + 1e-9) throw DataError("M_T must not exceed 1");
        for (int t = 0; t < T; ++t) {
            if (!(spread[t] >= 0.0)) throw DataError("negative spread");
            if (!(sigma2[t] >= 0.0)) throw DataError("negative variance");
            if (!(kappa[t] > 0.0)) throw DataError("kappa must be positive");
            if (t > 0 && M[t] < M[t - 1] - 1e-12) throw DataError("M must be non-decreasing");
        }
    }
};

/// Euclidean projection onto {u >= 0, sum(u) = total}, sort-based and exact.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v, double total) {
    const int n = static_cast<int>(v.size());
    std::vector<double> sorted(v.data(), v.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double running = 0.0, theta = 0.0;
    int support = 0;
    for (int k = 0; k < n; ++k) {
        running += sorted[static_cast<std::size_t>(k)];
        double cand = (running - total) / static_cast<double>(k + 1);
        if (sorted[static_cast<std::size_t>(k)] - cand > 0.0) {
            theta = cand;
            support = k + 1;
        } else {
            break;
        }
    }
    (void)support;
    return (v.array() - theta).max(0.0);
}

/// Industry-standard static schedule u_t = C * E[m_t/V].
inline Schedule closed_form_static(const Eigen::VectorXd& frac, double C) {
    if (!(C > 0.0)) throw DataError("order size must be positive");
    const double total = frac.sum();
    if (std::abs(total - 1.0) > 1e-9) throw DataError("volume fractions must sum to 1");
    for (int t = 0; t < frac.size(); ++t)
        if (!(frac[t] >= 0.0)) throw DataError("negative volume fraction");
    Schedule s;
    s.u = frac * (C / total);
    s.method = Method::StaticClosedForm;
    s.lambda = RiskAversion::finite(0.0);
    return s;
}

struct QpOptions {
    // Residuals are fixed-point gaps of the projected-gradient map at step
    // 1/max(1, L), in executed-fraction units, so the certificate is
    // insensitive to the objective's absolute scale.
    double tol = 1e-9;         // target residual
    double tol_accept = 1e-7;  // hard acceptance threshold
    long max_iters = 2'000'000;
    bool record_objective = false;
    Eigen::VectorXd start;  // executed fractions; empty: market-profile start
};

struct QpSolution {
    Schedule schedule;
    long iterations = 0;
    double kkt_residual = 0.0;
    std::vector<double> objective;  // per accepted iterate, when recorded
};

namespace detail {

// Objective and gradient in executed-fraction units y = u/C, evaluated with
// prefix/suffix sums; the dense Hessian is never formed.
struct QpWork {
    const StaticProblem& p;
    Eigen::VectorXd cum;  // cum[i] = sum_{k<i} y_k
    Eigen::VectorXd w;    // sigma2_i (cum_i - M_i)

    explicit QpWork(const StaticProblem& prob)
        : p(prob), cum(prob.intervals()), w(prob.intervals()) {}

    double value(const Eigen::VectorXd& y) {
        const int T = p.intervals();
        double acc = 0.0, c = 0.0;
        for (int i = 0; i < T; ++i) {
            cum[i] = c;
            acc += 0.5 * p.spread[i] * (p.alpha * p.kappa[i] * p.C * y[i] * y[i] - y[i]);
            acc += p.lambda * p.sigma2[i] * (c * c - 2.0 * p.M[i] * c);
            c += y[i];
        }
        return acc;
    }

    void gradient(const Eigen::VectorXd& y, Eigen::VectorXd& g) {
        const int T = p.intervals();
        double c = 0.0;
        for (int i = 0; i < T; ++i) {
            cum[i] = c;
            w[i] = p.sigma2[i] * (c - p.M[i]);
            c += y[i];
        }
        double suffix = 0.0;
        for (int i = T - 1; i >= 0; --i) {
            g[i] = 0.5 * p.spread[i] * (2.0 * p.alpha * p.kappa[i] * p.C * y[i] - 1.0) +
                   2.0 * p.lambda * suffix;
            suffix += w[i];
        }
    }

    double lipschitz() const {
        const int T = p.intervals();
        double diag = 0.0, coupling = 0.0;
        for (int i = 0; i < T; ++i) {
            diag = std::max(diag, p.alpha * p.spread[i] * p.kappa[i] * p.C);
            coupling += static_cast<double>(i) * p.sigma2[i];
        }
        return std::max(diag + 2.0 * p.lambda * coupling, 1e-12);
    }
};

inline Eigen::VectorXd fractions_from_market_profile(const Eigen::VectorXd& M) {
    const int T = static_cast<int>(M.size());
    Eigen::VectorXd frac(T);
    for (int i = 0; i + 1 < T; ++i) frac[i] = std::max(M[i + 1] - M[i], 0.0);
    frac[T - 1] = std::max(1.0 - M[T - 1], 0.0);
    double total = frac.sum();
    if (total <= 0.0) return Eigen::VectorXd::Constant(T, 1.0 / T);
    return frac / total;
}

}  // namespace detail

/// Solve the open-loop problem by monotone accelerated projected gradient with
/// backtracking; the returned iterate is certified by its fixed-point residual.
inline QpSolution solve_qp_detailed(const StaticProblem& problem, const QpOptions& opt = {}) {
    problem.validate();
    const int T = problem.intervals();

    QpSolution sol;
    sol.schedule.method = Method::StaticQp;
    sol.schedule.lambda = RiskAversion::finite(problem.lambda);

    // Identically-zero objective: every feasible point is optimal; fall back to
    // the market-profile schedule and flag the degeneracy.
    const bool no_cost = problem.spread.maxCoeff() <= 0.0;
    const bool no_tracking = problem.lambda == 0.0 || problem.sigma2.maxCoeff() <= 0.0;
    if (no_cost && no_tracking) {
        sol.schedule.u = detail::fractions_from_market_profile(problem.M) * problem.C;
        sol.schedule.degenerate = true;
        return sol;
    }

    detail::QpWork work(problem);
    double L = work.lipschitz();
    const double inv_scale = 1.0 / std::max(1.0, L);

    Eigen::VectorXd x = project_to_simplex(
        opt.start.size() == T ? opt.start : detail::fractions_from_market_profile(problem.M),
        1.0);
    Eigen::VectorXd z = x, g(T), xc(T), gx(T);
    double fx = work.value(x);
    double momentum = 1.0;
    if (opt.record_objective) sol.objective.push_back(fx);

    auto pg_step = [&](const Eigen::VectorXd& base, const Eigen::VectorXd& grad, double fbase,
                       Eigen::VectorXd& out) {
        for (;;) {
            out = project_to_simplex(base - grad / L, 1.0);
            Eigen::VectorXd d = out - base;
            double fout = work.value(out);
            if (fout <= fbase + grad.dot(d) + 0.5 * L * d.squaredNorm() + 1e-15 * std::abs(fbase))
                return fout;
            L *= 2.0;
        }
    };

    double residual = std::numeric_limits<double>::infinity();
    long it = 0;
    long stalled = 0;
    for (; it < opt.max_iters; ++it) {
        work.gradient(z, g);
        double fz = work.value(z);
        double fc = pg_step(z, g, fz, xc);
        if (fc > fx) {
            // Momentum overshoot: plain descent step from the best iterate.
            work.gradient(x, gx);
            fc = pg_step(x, gx, fx, xc);
            momentum = 1.0;
        }
        double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        z = xc + ((momentum - 1.0) / next) * (xc - x);
        momentum = next;

        stalled = (fc >= fx - 1e-18 * std::max(1.0, std::abs(fx))) ? stalled + 1 : 0;
        x = xc;
        fx = fc;
        if (opt.record_objective) sol.objective.push_back(fx);

        if (it % 8 == 0 || stalled > 400) {
            work.gradient(x, g);
            residual = (x - project_to_simplex(x - g * inv_scale, 1.0)).norm();
            if (residual <= opt.tol || stalled > 400) break;
        }
    }
    work.gradient(x, g);
    residual = (x - project_to_simplex(x - g * inv_scale, 1.0)).norm();
    if (residual > opt.tol_accept)
        throw NumericError("solve_qp: no convergence, fixed-point residual " +
                           format_double(residual) + " after " + std::to_string(it) +
                           " iterations");
    sol.iterations = it;
    sol.kkt_residual = residual;
    sol.schedule.u = x * problem.C;
    return sol;
}

inline Schedule solve_qp(const StaticProblem& problem) {
    return solve_qp_detailed(problem).schedule;
}

}  // namespace vwap
