#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vwap/common.hpp"
#include "vwap/market_data.hpp"
#include "vwap/price_model.hpp"
#include "vwap/rng.hpp"
#include "vwap/volume_model.hpp"

namespace vwap {

/// Draw synthetic stock-days: volumes as exp of a multivariate normal with
/// mean mu + 1 b_k and the model covariance, prices as a zero-drift geometric
/// walk with the given per-interval volatilities. Deterministic per
/// (seed, day, symbol) so results do not depend on evaluation order.
inline Dataset synthesize(const VolumeModel& model, const VolatilityProfile& vol_profile,
                          double p0, int n_days, const std::vector<std::string>& symbols,
                          std::uint64_t seed, const std::string& start_date = "2024-01-02") {
    model.validate();
    vol_profile.validate();
    const int T = model.T;
    if (vol_profile.intervals() != T) throw DataError("synthesize: sigma length mismatch");
    if (n_days <= 0) throw UsageError("synthesize: need at least one day");
    if (symbols.empty()) throw UsageError("synthesize: need at least one symbol");
    if (!(p0 > 0.0)) throw UsageError("synthesize: initial price must be positive");
    for (const auto& sym : symbols) model.level(sym);

    // Sampling transform A with A A^T = Sigma; LDLT admits positive
    // semidefinite covariances (a zero matrix yields deterministic volumes).
    Eigen::MatrixXd cov = model.covariance();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success)
        throw NumericError("synthesize: covariance factorization failed");
    const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    if (ldlt.vectorD().minCoeff() < -1e-10 * scale)
        throw NumericError("synthesize: covariance is not positive semidefinite");
    Eigen::MatrixXd A = Eigen::MatrixXd(ldlt.matrixL()) *
                        ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    A = ldlt.transpositionsP().transpose() * A;

    Dataset out;
    for (int d = 0; d < n_days; ++d) {
        const std::string date = add_days(start_date, d);
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            const double bk = model.level(symbols[k]);

            NormalSampler vol_rng(derive_seed(seed, static_cast<std::uint64_t>(d), k, 1));
            Eigen::VectorXd z(T);
            for (int t = 0; t < T; ++t) z[t] = vol_rng.next();
            Eigen::VectorXd logm = model.mu;
            logm.array() += bk;
            logm.noalias() += A * z;

            NormalSampler px_rng(derive_seed(seed, static_cast<std::uint64_t>(d), k, 2));
            MinuteSeries s;
            s.symbol = symbols[k];
            s.date = date;
            s.volumes = logm.array().exp();
            s.prices.resize(T);
            double p = p0;
            for (int t = 0; t < T; ++t) {
                double growth = 1.0 + vol_profile.sigma[t] * px_rng.next();
                p *= std::max(growth, 1e-6);
                s.prices[t] = p;
            }
            out.add(std::move(s));
        }
    }
    return out;
}

}  // namespace vwap
