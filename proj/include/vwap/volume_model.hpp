#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vwap/common.hpp"
#include "vwap/market_data.hpp"

namespace vwap {

/// Symmetric banded matrix stored as main diagonal plus `bandwidth` upper
/// off-diagonals; entries outside the band are zero.
struct BandedMatrix {
    int n = 0;
    int bandwidth = 0;
    std::vector<Eigen::VectorXd> diags;  // diags[d][i] = S(i, i+d), d = 0..bandwidth

    static BandedMatrix zero(int n, int bandwidth) {
        BandedMatrix b;
        b.n = n;
        b.bandwidth = bandwidth;
        b.diags.resize(static_cast<std::size_t>(bandwidth) + 1);
        for (int d = 0; d <= bandwidth; ++d)
            b.diags[static_cast<std::size_t>(d)] = Eigen::VectorXd::Zero(n - d);
        return b;
    }

    double operator()(int i, int j) const {
        int d = std::abs(i - j);
        if (d > bandwidth) return 0.0;
        return diags[static_cast<std::size_t>(d)][std::min(i, j)];
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
        for (int d = 0; d <= bandwidth; ++d)
            for (int i = 0; i + d < n; ++i)
                M(i, i + d) = M(i + d, i) = diags[static_cast<std::size_t>(d)][i];
        return M;
    }
};

/// Joint log-normal intraday volume model: log m ~ N(mu + 1 b_k, Sigma) with
/// Sigma = f f^T + S + psd_shift I, S symmetric banded.
struct VolumeModel {
    int T = 0;
    int band_b = 0;
    Eigen::VectorXd mu;              // sum-zero profile, log-volume units
    std::map<std::string, double> b; // per-symbol level
    Eigen::VectorXd factor_f;
    BandedMatrix banded_S;
    double psd_shift = 0.0;

    double level(const std::string& symbol) const {
        auto it = b.find(symbol);
        if (it == b.end()) throw DataError("no volume level for symbol " + symbol);
        return it->second;
    }

    Eigen::MatrixXd covariance() const {
        Eigen::MatrixXd C = factor_f * factor_f.transpose();
        for (int d = 0; d <= banded_S.bandwidth; ++d)
            for (int i = 0; i + d < T; ++i) {
                double v = banded_S.diags[static_cast<std::size_t>(d)][i];
                C(i, i + d) += v;
                if (d > 0) C(i + d, i) += v;
            }
        C.diagonal().array() += psd_shift;
        return C;
    }

    void validate() const {
        if (static_cast<int>(mu.size()) != T || static_cast<int>(factor_f.size()) != T)
            throw DataError("volume model dimension mismatch");
        if (banded_S.n != T) throw DataError("banded part dimension mismatch");
        if (std::abs(mu.sum()) > 1e-9) throw DataError("volume profile not sum-zero");
    }
};

/// Grand mean of log volumes over one symbol's window.
inline double estimate_b(const std::vector<const MinuteSeries*>& window) {
    if (window.empty()) throw DataError("estimate_b: empty window");
    double acc = 0.0;
    long count = 0;
    for (const auto* s : window) {
        for (int t = 0; t < s->intervals(); ++t) {
            if (!(s->volumes[t] > 0.0))
                throw DataError("estimate_b: non-positive volume in " + s->symbol + " " + s->date);
            acc += std::log(s->volumes[t]);
        }
        count += s->intervals();
    }
    return acc / static_cast<double>(count);
}

/// Pooled mean of level-adjusted log volumes. Sum-zero by construction when the
/// levels come from estimate_b on the same window.
inline Eigen::VectorXd estimate_mu(const std::vector<const MinuteSeries*>& window,
                                   const std::map<std::string, double>& b) {
    if (window.empty()) throw DataError("estimate_mu: empty window");
    const int T = window.front()->intervals();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(T);
    for (const auto* s : window) {
        if (s->intervals() != T) throw DataError("estimate_mu: mixed interval counts");
        auto it = b.find(s->symbol);
        if (it == b.end()) throw DataError("estimate_mu: no level for symbol " + s->symbol);
        for (int t = 0; t < T; ++t) {
            if (!(s->volumes[t] > 0.0))
                throw DataError("estimate_mu: non-positive volume in " + s->symbol + " " + s->date);
            acc[t] += std::log(s->volumes[t]) - it->second;
        }
    }
    return acc / static_cast<double>(window.size());
}

/// Residual observation matrix X, one column log m - 1 b_k - mu per stock-day.
inline Eigen::MatrixXd residual_matrix(const std::vector<const MinuteSeries*>& window,
                                       const std::map<std::string, double>& b,
                                       const Eigen::VectorXd& mu) {
    const int T = static_cast<int>(mu.size());
    Eigen::MatrixXd X(T, static_cast<int>(window.size()));
    for (std::size_t j = 0; j < window.size(); ++j) {
        const auto* s = window[j];
        auto it = b.find(s->symbol);
        if (it == b.end()) throw DataError("residual_matrix: no level for symbol " + s->symbol);
        for (int t = 0; t < T; ++t)
            X(t, static_cast<int>(j)) = std::log(s->volumes[t]) - it->second - mu[t];
    }
    return X;
}

struct CovarianceFactor {
    Eigen::VectorXd f;          // leading singular pair of X, scaled to covariance units
    Eigen::MatrixXd sigma_hat;  // X X^T / (n - 1)
};

/// Empirical covariance and its best (Frobenius) rank-1 approximation f f^T.
/// f is the leading eigenpair of sigma_hat, which equals the leading singular
/// pair of X scaled by 1/sqrt(n-1).
inline CovarianceFactor factor_covariance(const Eigen::MatrixXd& X) {
    const int n = static_cast<int>(X.cols());
    if (n < 2) throw DataError("factor_covariance: need at least 2 observations");
    CovarianceFactor out;
    out.sigma_hat.noalias() = X * X.transpose() / static_cast<double>(n - 1);
    if (out.sigma_hat.norm() == 0.0) throw DataError("factor_covariance: degenerate residuals");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.sigma_hat);
    if (es.info() != Eigen::Success) throw NumericError("factor_covariance: eigensolver failed");
    const int last = static_cast<int>(out.sigma_hat.rows()) - 1;
    double lambda1 = std::max(es.eigenvalues()[last], 0.0);
    Eigen::VectorXd v = es.eigenvectors().col(last);
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;  // sign convention: dominant entry positive
    out.f = std::sqrt(lambda1) * v;
    return out;
}

/// In-band residual S(i,j) = (sigma_hat - f f^T)(i,j), zero outside the band.
inline BandedMatrix banded_residual(const Eigen::MatrixXd& sigma_hat, const Eigen::VectorXd& f,
                                    int bandwidth) {
    if (bandwidth < 0) throw UsageError("bandwidth must be non-negative");
    const int T = static_cast<int>(sigma_hat.rows());
    BandedMatrix S = BandedMatrix::zero(T, bandwidth);
    for (int d = 0; d <= bandwidth; ++d)
        for (int i = 0; i + d < T; ++i)
            S.diags[static_cast<std::size_t>(d)][i] = sigma_hat(i, i + d) - f[i] * f[i + d];
    return S;
}

inline std::pair<Eigen::VectorXd, BandedMatrix> estimate_covariance(const Eigen::MatrixXd& X,
                                                                    int bandwidth) {
    CovarianceFactor cf = factor_covariance(X);
    return {cf.f, banded_residual(cf.sigma_hat, cf.f, bandwidth)};
}

/// Smallest diagonal shift on the doubling ladder delta0 * 2^k (delta0 =
/// 1e-10 trace/T) that makes f f^T + S pass a Cholesky factorization. Returns 0
/// when no shift is needed. The minimum eigenvalue picks the starting rung so
/// the ladder costs one eigensolve plus a couple of factorizations.
inline double psd_shift_for(const Eigen::VectorXd& f, const BandedMatrix& S) {
    const int T = static_cast<int>(f.size());
    Eigen::MatrixXd C = f * f.transpose();
    C += S.dense();
    auto chol_ok = [&](double shift) {
        Eigen::MatrixXd M = C;
        M.diagonal().array() += shift;
        return Eigen::LLT<Eigen::MatrixXd>(M).info() == Eigen::Success;
    };
    if (chol_ok(0.0)) return 0.0;
    double delta = 1e-10 * C.trace() / static_cast<double>(T);
    if (!(delta > 0.0)) delta = 1e-16;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    if (es.info() == Eigen::Success) {
        const double needed = -es.eigenvalues().minCoeff();
        while (delta < needed) delta *= 2.0;
    }
    for (int k = 0; k < 128; ++k) {
        if (chol_ok(delta)) return delta;
        delta *= 2.0;
    }
    throw NumericError("psd_shift_for: no shift makes covariance positive definite");
}

/// Full model fit on a pooled window: per-symbol levels, shared profile,
/// factored covariance, and the recorded PSD repair shift.
inline VolumeModel fit_volume_model(const std::vector<const MinuteSeries*>& window,
                                    int bandwidth) {
    if (window.size() < 2) throw DataError("fit_volume_model: need at least 2 stock-days");
    VolumeModel m;
    m.T = window.front()->intervals();
    m.band_b = bandwidth;

    std::map<std::string, std::vector<const MinuteSeries*>> by_symbol;
    for (const auto* s : window) by_symbol[s->symbol].push_back(s);
    for (const auto& [sym, group] : by_symbol) m.b[sym] = estimate_b(group);

    m.mu = estimate_mu(window, m.b);
    Eigen::MatrixXd X = residual_matrix(window, m.b, m.mu);
    auto [f, S] = estimate_covariance(X, bandwidth);
    m.factor_f = std::move(f);
    m.banded_S = std::move(S);
    m.psd_shift = psd_shift_for(m.factor_f, m.banded_S);
    return m;
}

/// Gaussian conditional of the log-volume vector on observed volumes
/// m_1..m_{t-1}; covers intervals t..T.
struct ConditionalVolumeDist {
    Eigen::VectorXd nu;     // conditional mean, length T - t + 1
    Eigen::MatrixXd sigma;  // conditional covariance
    int t = 1;              // first unobserved interval, 1-based
    double observed_sum = 0.0;

    int remaining() const { return static_cast<int>(nu.size()); }
};

namespace detail {
// Below this, an interval's conditional variance is treated as deterministic
// and its observation carries no update. Fitted models sit far above it
// (the PSD repair shift alone is ~1e-11 of trace); exact-zero covariance
// models (perfect-foresight replay) hit it by construction.
inline constexpr double kDegenerateVariance = 1e-18;
}  // namespace detail

/// Exact one-step conditioning on the next observed volume.
inline void advance(ConditionalVolumeDist& dist, double m_observed) {
    if (!(m_observed > 0.0)) throw DataError("advance: non-positive observed volume");
    const int n = dist.remaining();
    if (n <= 1) throw UsageError("advance: nothing left to condition");
    const double s11 = dist.sigma(0, 0);
    const double innov = std::log(m_observed) - dist.nu[0];
    Eigen::VectorXd c = dist.sigma.col(0).tail(n - 1);
    Eigen::VectorXd nu2 = dist.nu.tail(n - 1);
    Eigen::MatrixXd S2 = dist.sigma.bottomRightCorner(n - 1, n - 1);
    if (s11 > detail::kDegenerateVariance) {
        nu2 += c * (innov / s11);
        S2.selfadjointView<Eigen::Lower>().rankUpdate(c, -1.0 / s11);
        S2.triangularView<Eigen::StrictlyUpper>() = S2.transpose();
    }
    dist.nu = std::move(nu2);
    dist.sigma = std::move(S2);
    dist.t += 1;
    dist.observed_sum += m_observed;
}

/// Conditional distribution given observed volumes, computed from scratch by a
/// factorized solve of the leading block (Schur complement).
inline ConditionalVolumeDist condition(const VolumeModel& model, const std::string& symbol,
                                       std::span<const double> observed) {
    model.validate();
    const int T = model.T;
    const int k = static_cast<int>(observed.size());
    if (k >= T) throw UsageError("condition: at least one interval must remain");
    const double bk = model.level(symbol);

    ConditionalVolumeDist dist;
    dist.t = k + 1;
    dist.observed_sum = 0.0;
    Eigen::MatrixXd cov = model.covariance();
    if (k == 0) {
        dist.nu = model.mu.array() + bk;
        dist.sigma = std::move(cov);
        return dist;
    }

    Eigen::VectorXd resid(k);
    for (int i = 0; i < k; ++i) {
        if (!(observed[static_cast<std::size_t>(i)] > 0.0))
            throw DataError("condition: non-positive observed volume");
        dist.observed_sum += observed[static_cast<std::size_t>(i)];
        resid[i] = std::log(observed[static_cast<std::size_t>(i)]) - model.mu[i] - bk;
    }

    const int n = T - k;
    Eigen::MatrixXd A = cov.topLeftCorner(k, k);
    Eigen::MatrixXd B = cov.topRightCorner(k, n);
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
        double dmin = ldlt.vectorD().minCoeff();
        throw NumericError("condition: singular leading block of size " + std::to_string(k) +
                           " (pivot range " + format_double(dmin) + " .. " + format_double(dmax) +
                           ")");
    }
    dist.nu = model.mu.tail(n).array() + bk;
    dist.nu += B.transpose() * llt.solve(resid);
    dist.sigma = cov.bottomRightCorner(n, n);
    dist.sigma.noalias() -= B.transpose() * llt.solve(B);
    dist.sigma = ((dist.sigma + dist.sigma.transpose()) / 2.0).eval();
    return dist;
}

/// Conditional moments needed by the schedule solvers.
struct VolumeMoments {
    Eigen::VectorXd e_m;      // E_t[m_tau], tau = t..T
    Eigen::VectorXd e_inv_m;  // E_t[1/m_tau]
    double e_V = 0.0;         // E_t[V], includes the observed prefix
    double var_V = 0.0;
    double e_inv_V = 0.0;     // second-order expansion 1/E[V] + Var(V)/E[V]^3
};

inline VolumeMoments moments(const ConditionalVolumeDist& dist) {
    const int n = dist.remaining();
    VolumeMoments out;
    Eigen::ArrayXd half_diag = 0.5 * dist.sigma.diagonal().array().max(0.0);
    out.e_m = (dist.nu.array() + half_diag).exp();
    out.e_inv_m = (-dist.nu.array() + half_diag).exp();
    out.e_V = dist.observed_sum + out.e_m.sum();

    // var_V = sum_ij E[m_i] E[m_j] (exp(sigma_ij) - 1), lower-triangle sweep
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        const double emi = out.e_m[i];
        var += emi * emi * std::expm1(std::max(dist.sigma(i, i), 0.0));
        const int rest = n - i - 1;
        if (rest > 0) {
            auto below = dist.sigma.col(i).segment(i + 1, rest).array();
            auto emj = out.e_m.segment(i + 1, rest).array();
            var += 2.0 * emi * ((below.exp() - 1.0) * emj).sum();
        }
    }
    out.var_V = std::max(var, 0.0);
    out.e_inv_V = 1.0 / out.e_V + out.var_V / (out.e_V * out.e_V * out.e_V);

    if (!std::isfinite(out.e_V) || !std::isfinite(out.var_V) || !out.e_m.allFinite() ||
        !out.e_inv_m.allFinite())
        throw NumericError("moments: overflow at interval " + std::to_string(dist.t));
    return out;
}

}  // namespace vwap
