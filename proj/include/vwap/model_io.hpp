#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vwap/common.hpp"
#include "vwap/price_model.hpp"
#include "vwap/volume_model.hpp"

namespace vwap {

/// Volume model plus the price inputs needed to synthesize data.
struct MarketModel {
    VolumeModel volume;
    VolatilityProfile vol;
    double p0 = 100.0;
};

inline nlohmann::json volume_model_to_json(const VolumeModel& m) {
    nlohmann::json j;
    j["T"] = m.T;
    j["band_b"] = m.band_b;
    j["mu"] = std::vector<double>(m.mu.data(), m.mu.data() + m.mu.size());
    j["b"] = m.b;
    j["f"] = std::vector<double>(m.factor_f.data(), m.factor_f.data() + m.factor_f.size());
    nlohmann::json diags = nlohmann::json::array();
    for (const auto& d : m.banded_S.diags)
        diags.push_back(std::vector<double>(d.data(), d.data() + d.size()));
    j["S_band"] = {{"bandwidth", m.banded_S.bandwidth}, {"diagonals", diags}};
    j["psd_shift"] = m.psd_shift;
    return j;
}

inline VolumeModel volume_model_from_json(const nlohmann::json& j) {
    VolumeModel m;
    m.T = j.at("T").get<int>();
    m.band_b = j.at("band_b").get<int>();
    auto mu = j.at("mu").get<std::vector<double>>();
    auto f = j.at("f").get<std::vector<double>>();
    m.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
    m.factor_f = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<long>(f.size()));
    m.b = j.at("b").get<std::map<std::string, double>>();
    const auto& sb = j.at("S_band");
    m.banded_S.n = m.T;
    m.banded_S.bandwidth = sb.at("bandwidth").get<int>();
    for (const auto& dj : sb.at("diagonals")) {
        auto d = dj.get<std::vector<double>>();
        m.banded_S.diags.push_back(
            Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<long>(d.size())));
    }
    m.psd_shift = j.at("psd_shift").get<double>();
    m.validate();
    return m;
}

inline nlohmann::json market_model_to_json(const MarketModel& mm) {
    nlohmann::json j = volume_model_to_json(mm.volume);
    j["sigma"] =
        std::vector<double>(mm.vol.sigma.data(), mm.vol.sigma.data() + mm.vol.sigma.size());
    j["p0"] = mm.p0;
    return j;
}

inline MarketModel market_model_from_json(const nlohmann::json& j) {
    MarketModel mm;
    mm.volume = volume_model_from_json(j);
    auto sig = j.at("sigma").get<std::vector<double>>();
    mm.vol.sigma = Eigen::Map<const Eigen::VectorXd>(sig.data(), static_cast<long>(sig.size()));
    mm.vol.validate();
    mm.p0 = j.at("p0").get<double>();
    if (!(mm.p0 > 0.0)) throw DataError("p0 must be positive");
    return mm;
}

inline MarketModel load_market_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
        return market_model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad model file " + path + ": " + e.what());
    }
}

inline void save_market_model(const MarketModel& mm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file " + path);
    out << market_model_to_json(mm).dump(2) << '\n';
}

inline std::vector<std::string> default_symbols(int n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "SYM%02d", k + 1);
        out.emplace_back(buf);
    }
    return out;
}

/// Built-in market model with the usual intraday anatomy: U-shaped volume
/// profile with an open spike, one strong common log-volume factor, a
/// short-memory banded residual, and a U-shaped volatility curve.
inline MarketModel builtin_market_model(int T, const std::vector<std::string>& symbols) {
    if (T < 2) throw UsageError("builtin model needs at least 2 intervals");
    if (symbols.empty()) throw UsageError("builtin model needs at least one symbol");
    MarketModel mm;
    VolumeModel& m = mm.volume;
    m.T = T;
    m.band_b = 3;
    m.mu.resize(T);
    m.factor_f.resize(T);
    mm.vol.sigma.resize(T);
    for (int t = 0; t < T; ++t) {
        const double x = (t + 0.5) / T;
        const double bowl = 4.0 * (x - 0.5) * (x - 0.5);
        m.mu[t] = 0.9 * bowl + 0.6 * std::exp(-x / 0.03) + 0.45 * std::exp(-(1.0 - x) / 0.05);
        // tilt-heavy factor: a day's volume surprise shows up early and tilts
        // the realized fraction profile over the rest of the day, while the
        // near-zero mean loading keeps the total-volume dispersion moderate
        m.factor_f[t] = 0.06 + 0.14 * (1.0 - 2.0 * x);
        mm.vol.sigma[t] = 1e-4 * (2.2 + 5.5 * std::exp(-x / 0.04) +
                                  2.2 * std::exp(-(1.0 - x) / 0.07) + 0.8 * bowl);
    }
    m.mu.array() -= m.mu.mean();

    const int band = std::min(m.band_b, T - 1);
    m.banded_S = BandedMatrix::zero(T, band);
    // geometric decay 0.18 * 0.5^d: positive spectrum for any length
    for (int d = 0; d <= band; ++d)
        m.banded_S.diags[static_cast<std::size_t>(d)].setConstant(0.18 * std::pow(0.5, d));
    m.psd_shift = 0.0;

    const double golden = 0.6180339887498949;
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        double frac = std::fmod(static_cast<double>(k + 1) * golden, 1.0);
        m.b[symbols[k]] = 3.9 + 1.1 * frac;
    }
    mm.p0 = 100.0;
    return mm;
}

}  // namespace vwap
