#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vwap/common.hpp"
#include "vwap/cost_model.hpp"
#include "vwap/dynamic_solver.hpp"
#include "vwap/market_data.hpp"
#include "vwap/price_model.hpp"
#include "vwap/static_solver.hpp"
#include "vwap/volume_model.hpp"

namespace vwap {

inline constexpr const char* kToolVersion = "0.1.0";

struct BacktestConfig {
    int W = 20;       // estimation window, days
    int W_cv = 10;    // days reserved for bandwidth cross-validation
    int T = 390;      // intervals per day
    double order_frac = 0.01;
    double spread_bp = 2.0;
    double alpha = 90.0;
    std::vector<RiskAversion> lambdas = {
        RiskAversion::finite(0), RiskAversion::finite(1),    RiskAversion::finite(10),
        RiskAversion::finite(100), RiskAversion::finite(1000), RiskAversion::infinity()};
    int band_b = 3;
    bool band_cv = false;  // select band_b by cross-validation
    std::vector<int> cv_candidates = {0, 1, 3, 5, 10};
    int threads = 0;  // 0: hardware concurrency

    void validate() const {
        if (W < 2) throw UsageError("window must be at least 2 days");
        if (W_cv < 0) throw UsageError("cv-days must be non-negative");
        if (T < 2) throw UsageError("need at least 2 intervals");
        if (!(order_frac > 0.0)) throw UsageError("order-frac must be positive");
        if (!(spread_bp >= 0.0) || !(alpha >= 0.0))
            throw UsageError("spread and alpha must be non-negative");
        if (band_cv && cv_candidates.empty()) throw UsageError("no bandwidth candidates");
    }

    CostParams costs() const { return CostParams::constant(T, spread_bp * 1e-4, alpha); }
};

/// Everything estimated from one trailing window.
struct WindowEstimates {
    Eigen::VectorXd frac;  // E[m_t / V], sums to 1
    VolatilityProfile vol;
    std::map<std::string, double> expected_V;
    VolumeModel model;
};

namespace detail {

inline std::vector<const MinuteSeries*> window_series(const Dataset& data,
                                                      std::span<const std::string> days) {
    std::vector<const MinuteSeries*> out;
    std::string gaps;
    for (const auto& day : days)
        for (const auto& sym : data.symbols) {
            if (!data.has(day, sym)) {
                gaps += (gaps.empty() ? "" : ", ") + sym + " " + day;
                continue;
            }
            out.push_back(&data.at(day, sym));
        }
    if (!gaps.empty()) throw DataError("window has missing series: " + gaps);
    return out;
}

inline void run_parallel(int n_tasks, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n_tasks));
    if (threads == 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (;;) {
                    int i = next.fetch_add(1);
                    if (i >= n_tasks) break;
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Estimate the volume fraction profile, volatility profile, expected daily
/// volumes and the volume model on one window. All symbols must be present on
/// every window day.
inline WindowEstimates estimate_window(const Dataset& data, std::span<const std::string> days,
                                       int bandwidth) {
    if (days.empty()) throw DataError("estimate_window: empty window");
    auto series = detail::window_series(data, days);
    const int T = series.front()->intervals();

    WindowEstimates est;
    est.frac = Eigen::VectorXd::Zero(T);
    std::map<std::string, double> vol_sum;
    std::map<std::string, int> vol_cnt;
    for (const auto* s : series) {
        est.frac += s->volumes / s->total_volume();
        vol_sum[s->symbol] += s->total_volume();
        vol_cnt[s->symbol] += 1;
    }
    est.frac /= est.frac.sum();
    for (const auto& [sym, total] : vol_sum) est.expected_V[sym] = total / vol_cnt[sym];
    est.vol = estimate_sigma(series);
    est.model = fit_volume_model(series, bandwidth);
    return est;
}

struct OrderResult {
    std::string date;
    std::string symbol;
    Method method = Method::StaticClosedForm;
    RiskAversion lambda;
    double C = 0.0;
    SlippageReport report;
    bool ok = false;
    std::string error;
};

struct MethodStats {
    Method method = Method::StaticClosedForm;
    RiskAversion lambda;
    double mean_S = 0.0;
    double var_S = 0.0;  // unbiased sample variance
    double std_S = 0.0;
    double mean_vt1 = 0.0;
    double mean_vt2 = 0.0;
    double var_vt2 = 0.0;
    // Across-order variance of the cost component relative to the mean
    // realized tracking-variance term: the ex-post check that dropping the
    // cost-variance term from the objective was benign.
    double ratio = 0.0;
    int count = 0;
    int failures = 0;
};

struct AggregateStats {
    std::vector<MethodStats> methods;
};

struct BacktestResult {
    std::vector<OrderResult> orders;  // canonical (day, symbol, method) order
    AggregateStats stats;
    int chosen_band = 0;
    long elapsed_ms = 0;
};

namespace detail {

inline std::string lambda_label(const OrderResult& r) {
    return r.method == Method::StaticClosedForm ? "na" : r.lambda.str();
}

inline AggregateStats aggregate(const std::vector<OrderResult>& orders,
                                const std::vector<std::pair<Method, RiskAversion>>& methods) {
    AggregateStats stats;
    for (const auto& [method, lambda] : methods) {
        MethodStats ms;
        ms.method = method;
        ms.lambda = lambda;
        std::vector<const OrderResult*> rows;
        for (const auto& r : orders) {
            bool same = (method == Method::StaticClosedForm)
                            ? r.method == Method::StaticClosedForm
                            : r.method != Method::StaticClosedForm && r.lambda == lambda;
            if (!same) continue;
            if (r.ok)
                rows.push_back(&r);
            else
                ms.failures += 1;
        }
        ms.count = static_cast<int>(rows.size());
        if (ms.count > 0) {
            double s = 0, vt1 = 0, vt2 = 0;
            for (const auto* r : rows) {
                s += r->report.S;
                vt1 += r->report.var_term_1;
                vt2 += r->report.var_term_2;
            }
            ms.mean_S = s / ms.count;
            ms.mean_vt1 = vt1 / ms.count;
            ms.mean_vt2 = vt2 / ms.count;
            if (ms.count > 1) {
                double ss = 0, sv = 0;
                for (const auto* r : rows) {
                    ss += (r->report.S - ms.mean_S) * (r->report.S - ms.mean_S);
                    sv += (r->report.var_term_2 - ms.mean_vt2) *
                          (r->report.var_term_2 - ms.mean_vt2);
                }
                ms.var_S = ss / (ms.count - 1);
                ms.var_vt2 = sv / (ms.count - 1);
            }
            ms.std_S = std::sqrt(ms.var_S);
            ms.ratio = ms.mean_vt1 > 0.0 ? ms.var_vt2 / ms.mean_vt1 : 0.0;
        }
        stats.methods.push_back(ms);
    }
    return stats;
}

}  // namespace detail

/// Choose the covariance bandwidth by simulating the pure-tracking dynamic
/// policy on the reserved cross-validation days and minimizing the empirical
/// standard deviation of the slippage. Ties resolve to the smaller bandwidth.
inline int pick_best_band(const std::vector<int>& candidates, const std::vector<double>& stds) {
    if (candidates.empty() || candidates.size() != stds.size())
        throw UsageError("pick_best_band: bad inputs");
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return candidates[a] < candidates[b]; });
    std::size_t best = order[0];
    for (std::size_t i : order)
        if (stds[i] < stds[best]) best = i;
    return candidates[best];
}

inline int cross_validate_band(const Dataset& data, const BacktestConfig& config,
                               const std::vector<int>& candidates) {
    config.validate();
    if (candidates.empty()) throw UsageError("cross_validate_band: no candidates");
    if (config.W_cv < 1) throw UsageError("cross_validate_band: no cv days reserved");
    const int N = static_cast<int>(data.days.size());
    if (N < config.W + config.W_cv) throw UsageError("cross_validate_band: insufficient days");

    const int n_days = config.W_cv;
    const int n_bands = static_cast<int>(candidates.size());
    const CostParams costs = config.costs();
    const RiskAversion inf = RiskAversion::infinity();

    // slippage[day][band][symbol]
    std::vector<std::vector<std::vector<double>>> slippage(
        static_cast<std::size_t>(n_days),
        std::vector<std::vector<double>>(static_cast<std::size_t>(n_bands)));

    detail::run_parallel(n_days, config.threads, [&](int di) {
        const int i = config.W + di;  // 0-based index of the simulated day
        std::span<const std::string> window(data.days.data() + (i - config.W),
                                            static_cast<std::size_t>(config.W));
        auto series = detail::window_series(data, window);

        // Shared fit pieces; only the banded residual depends on the candidate.
        std::map<std::string, std::vector<const MinuteSeries*>> by_symbol;
        for (const auto* s : series) by_symbol[s->symbol].push_back(s);
        VolumeModel base;
        base.T = series.front()->intervals();
        for (const auto& [sym, group] : by_symbol) base.b[sym] = estimate_b(group);
        base.mu = estimate_mu(series, base.b);
        Eigen::MatrixXd X = residual_matrix(series, base.b, base.mu);
        CovarianceFactor cf = factor_covariance(X);
        base.factor_f = cf.f;

        VolatilityProfile vol = estimate_sigma(series);
        std::map<std::string, double> ev;
        std::map<std::string, int> cnt;
        for (const auto* s : series) {
            ev[s->symbol] += s->total_volume();
            cnt[s->symbol] += 1;
        }

        for (int bi = 0; bi < n_bands; ++bi) {
            VolumeModel model = base;
            model.band_b = candidates[static_cast<std::size_t>(bi)];
            model.banded_S = banded_residual(cf.sigma_hat, cf.f, model.band_b);
            model.psd_shift = psd_shift_for(model.factor_f, model.banded_S);
            auto& out = slippage[static_cast<std::size_t>(di)][static_cast<std::size_t>(bi)];
            for (const auto& sym : data.symbols) {
                const MinuteSeries& day = data.at(data.days[static_cast<std::size_t>(i)], sym);
                OrderSpec order{sym, day.date, config.order_frac * ev[sym] / cnt[sym], inf};
                ShdpResult res = shdp_execute(day, order, costs, vol, model);
                out.push_back(realized_slippage(day, res.schedule, order, costs, vol).S);
            }
        }
    });

    std::vector<double> stds(static_cast<std::size_t>(n_bands), 0.0);
    for (int bi = 0; bi < n_bands; ++bi) {
        std::vector<double> all;
        for (int di = 0; di < n_days; ++di)
            for (double s : slippage[static_cast<std::size_t>(di)][static_cast<std::size_t>(bi)])
                all.push_back(s);
        if (all.size() < 2) throw DataError("cross_validate_band: too few orders");
        double mean = 0.0;
        for (double s : all) mean += s;
        mean /= static_cast<double>(all.size());
        double var = 0.0;
        for (double s : all) var += (s - mean) * (s - mean);
        stds[static_cast<std::size_t>(bi)] =
            std::sqrt(var / static_cast<double>(all.size() - 1));
    }
    return pick_best_band(candidates, stds);
}

/// Rolling out-of-sample simulation. Each simulated day uses only the trailing
/// window for estimation; per-order failures are recorded and excluded from
/// the aggregates.
inline BacktestResult run_backtest(const Dataset& data, const BacktestConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int N = static_cast<int>(data.days.size());
    if (N <= config.W + config.W_cv)
        throw UsageError("insufficient days: need more than W + W_cv = " +
                         std::to_string(config.W + config.W_cv) + ", have " + std::to_string(N));

    BacktestResult result;
    result.chosen_band = config.band_cv
                             ? cross_validate_band(data, config, config.cv_candidates)
                             : config.band_b;

    std::vector<std::pair<Method, RiskAversion>> methods;
    methods.emplace_back(Method::StaticClosedForm, RiskAversion::finite(0));
    for (const auto& lam : config.lambdas)
        methods.emplace_back(lam.infinite ? Method::DynamicLambdaInf : Method::DynamicShdp, lam);

    const int first_test = config.W + config.W_cv;  // 0-based day index
    const int n_days = N - first_test;
    const int K = static_cast<int>(data.symbols.size());
    const int per_day = K * static_cast<int>(methods.size());
    const CostParams costs = config.costs();

    result.orders.resize(static_cast<std::size_t>(n_days * per_day));

    detail::run_parallel(n_days, config.threads, [&](int di) {
        const int i = first_test + di;
        const std::string& date = data.days[static_cast<std::size_t>(i)];
        OrderResult* slot = result.orders.data() + static_cast<std::size_t>(di) * per_day;

        // Pre-fill identities so failures stay attributable.
        for (int k = 0; k < K; ++k)
            for (std::size_t m = 0; m < methods.size(); ++m) {
                OrderResult& r = slot[k * methods.size() + m];
                r.date = date;
                r.symbol = data.symbols[static_cast<std::size_t>(k)];
                r.method = methods[m].first;
                r.lambda = methods[m].second;
            }

        WindowEstimates est;
        try {
            std::span<const std::string> window(data.days.data() + (i - config.W),
                                                static_cast<std::size_t>(config.W));
            est = estimate_window(data, window, result.chosen_band);
        } catch (const std::exception& e) {
            for (int j = 0; j < per_day; ++j) slot[j].error = e.what();
            return;
        }

        std::vector<RiskAversion> dyn_lambdas;
        for (const auto& [m, lam] : methods)
            if (m != Method::StaticClosedForm) dyn_lambdas.push_back(lam);

        for (int k = 0; k < K; ++k) {
            const std::string& sym = data.symbols[static_cast<std::size_t>(k)];
            OrderResult* row = slot + static_cast<std::size_t>(k) * methods.size();
            try {
                const MinuteSeries& day = data.at(date, sym);
                const double C = config.order_frac * est.expected_V.at(sym);

                {
                    OrderResult& r = row[0];
                    r.C = C;
                    OrderSpec order{sym, date, C, RiskAversion::finite(0)};
                    Schedule sch = closed_form_static(est.frac, C);
                    sch.validate(C);
                    r.report = realized_slippage(day, sch, order, costs, est.vol);
                    r.ok = true;
                }
                if (!dyn_lambdas.empty()) {
                    OrderSpec order{sym, date, C, dyn_lambdas.front()};
                    auto runs = shdp_execute_multi(day, order, costs, est.vol, est.model,
                                                   dyn_lambdas);
                    for (std::size_t a = 0; a < runs.size(); ++a) {
                        OrderResult& r = row[1 + a];
                        r.C = C;
                        OrderSpec o{sym, date, C, dyn_lambdas[a]};
                        r.report = realized_slippage(day, runs[a].schedule, o, costs, est.vol);
                        r.ok = true;
                    }
                }
            } catch (const std::exception& e) {
                for (std::size_t m = 0; m < methods.size(); ++m)
                    if (!row[m].ok) row[m].error = e.what();
            }
        }
    });

    result.stats = detail::aggregate(result.orders, methods);
    result.elapsed_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                              std::chrono::steady_clock::now() - t0)
                                              .count());
    return result;
}

inline void emit_orders_csv(const std::vector<OrderResult>& orders, std::ostream& out) {
    out << "date,symbol,method,lambda,S,tracking_term,cost_term,var_term_1,var_term_2\n";
    for (const auto& r : orders) {
        if (!r.ok) continue;
        out << r.date << ',' << r.symbol << ',' << method_name(r.method) << ','
            << detail::lambda_label(r) << ',' << format_double(r.report.S) << ','
            << format_double(r.report.tracking_term) << ',' << format_double(r.report.cost_term)
            << ',' << format_double(r.report.var_term_1) << ','
            << format_double(r.report.var_term_2) << '\n';
    }
}

inline void emit_frontier(const AggregateStats& stats, std::ostream& out) {
    if (stats.methods.empty()) throw DataError("emit_frontier: no aggregate stats");
    out << "method,lambda,mean_S_bp,std_S_bp,ratio_var_terms\n";
    for (const auto& ms : stats.methods) {
        const std::string lam =
            ms.method == Method::StaticClosedForm ? "na" : ms.lambda.str();
        out << method_name(ms.method) << ',' << lam << ',' << format_double(ms.mean_S * 1e4)
            << ',' << format_double(ms.std_S * 1e4) << ',' << format_double(ms.ratio) << '\n';
    }
}

inline void emit_orders_csv(const std::vector<OrderResult>& orders, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    emit_orders_csv(orders, out);
}

inline void emit_frontier(const AggregateStats& stats, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    emit_frontier(stats, out);
}

inline nlohmann::json config_to_json(const BacktestConfig& c) {
    nlohmann::json j;
    j["window"] = c.W;
    j["cv_days"] = c.W_cv;
    j["intervals"] = c.T;
    j["order_frac"] = c.order_frac;
    j["spread_bp"] = c.spread_bp;
    j["alpha"] = c.alpha;
    std::vector<std::string> lams;
    for (const auto& l : c.lambdas) lams.push_back(l.str());
    j["lambdas"] = lams;
    j["band"] = c.band_cv ? nlohmann::json("cv") : nlohmann::json(c.band_b);
    j["threads"] = c.threads;
    return j;
}

inline nlohmann::json make_manifest(const BacktestConfig& config, const std::string& data_digest,
                                    std::uint64_t seed, int chosen_band, long elapsed_ms) {
    nlohmann::json j;
    j["config"] = config_to_json(config);
    j["data_digest"] = data_digest;
    j["seed"] = seed;
    j["chosen_band"] = chosen_band;
    j["version"] = kToolVersion;
    j["elapsed_ms"] = elapsed_ms;
    return j;
}

}  // namespace vwap
