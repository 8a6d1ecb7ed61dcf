#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vwap/backtest.hpp"
#include "vwap/common.hpp"
#include "vwap/dynamic_solver.hpp"
#include "vwap/market_data.hpp"
#include "vwap/model_io.hpp"
#include "vwap/static_solver.hpp"
#include "vwap/synth.hpp"

namespace vwap::cli {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

inline std::vector<RiskAversion> parse_lambdas(const std::string& s) {
    std::vector<RiskAversion> out;
    for (const auto& tok : split(s, ','))
        if (!tok.empty()) out.push_back(RiskAversion::parse(tok));
    if (out.empty()) throw UsageError("empty lambda list");
    return out;
}

inline std::vector<std::string> parse_symbols(const std::string& s) {
    bool digits = !s.empty();
    for (char c : s) digits = digits && c >= '0' && c <= '9';
    if (digits) {
        int n = static_cast<int>(parse_long(s, "symbol count"));
        if (n < 1) throw UsageError("need at least one symbol");
        return default_symbols(n);
    }
    auto names = split(s, ',');
    if (names.empty()) throw UsageError("need at least one symbol");
    return names;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return "fnv1a64:" + hex64(h);
}

inline int default_threads() {
    if (const char* env = std::getenv("VWAP_THREADS")) {
        try {
            return static_cast<int>(parse_long(env, "VWAP_THREADS"));
        } catch (const DataError&) {
            throw UsageError(std::string("bad VWAP_THREADS value: ") + env);
        }
    }
    return 0;  // library default: hardware concurrency
}

inline void write_schedule_csv(const Schedule& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "t,u_t\n";
    for (int t = 0; t < s.u.size(); ++t)
        out << (t + 1) << ',' << format_double(s.u[t]) << '\n';
}

inline void write_trace_csv(const std::vector<StepTrace>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "t,cum_u,cum_m,e_inv_V,u_raw,u_clipped\n";
    for (const auto& st : trace)
        out << st.t << ',' << format_double(st.cum_u) << ',' << format_double(st.cum_m) << ','
            << format_double(st.e_inv_V) << ',' << format_double(st.u_raw) << ','
            << format_double(st.u_clipped) << '\n';
}

struct BacktestFlags {
    std::string data;
    std::string out_dir = ".";
    std::string lambdas = "0,1,10,100,1000,inf";
    std::string band = "3";
    std::string config_file;
    int window = 20;
    int cv_days = 10;
    int intervals = 390;
    double order_frac = 0.01;
    double spread_bp = 2.0;
    double alpha = 90.0;
    int threads = -1;
    std::uint64_t seed = 0;
};

// --config supplies defaults for flags the user did not pass explicitly.
inline void apply_config_file(const CLI::App* sub, BacktestFlags& f) {
    std::ifstream in(f.config_file);
    if (!in) throw DataError("cannot open config " + f.config_file);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad config " + f.config_file + ": " + e.what());
    }
    auto unseen = [&](const char* flag) { return sub->count(flag) == 0; };
    if (j.contains("window") && unseen("--window")) f.window = j["window"].get<int>();
    if (j.contains("cv_days") && unseen("--cv-days")) f.cv_days = j["cv_days"].get<int>();
    if (j.contains("intervals") && unseen("--intervals"))
        f.intervals = j["intervals"].get<int>();
    if (j.contains("order_frac") && unseen("--order-frac"))
        f.order_frac = j["order_frac"].get<double>();
    if (j.contains("spread_bp") && unseen("--spread-bp"))
        f.spread_bp = j["spread_bp"].get<double>();
    if (j.contains("alpha") && unseen("--alpha")) f.alpha = j["alpha"].get<double>();
    if (j.contains("threads") && unseen("--threads")) f.threads = j["threads"].get<int>();
    if (j.contains("lambdas") && unseen("--lambdas")) {
        std::string joined;
        for (const auto& item : j["lambdas"]) {
            if (!joined.empty()) joined += ',';
            joined += item.is_string() ? item.get<std::string>()
                                       : format_double(item.get<double>());
        }
        f.lambdas = joined;
    }
    if (j.contains("band") && unseen("--band"))
        f.band = j["band"].is_string() ? j["band"].get<std::string>()
                                       : std::to_string(j["band"].get<int>());
}

inline BacktestConfig build_config(const BacktestFlags& f) {
    BacktestConfig cfg;
    cfg.W = f.window;
    cfg.W_cv = f.cv_days;
    cfg.T = f.intervals;
    cfg.order_frac = f.order_frac;
    cfg.spread_bp = f.spread_bp;
    cfg.alpha = f.alpha;
    cfg.lambdas = parse_lambdas(f.lambdas);
    if (f.band == "cv") {
        cfg.band_cv = true;
    } else {
        cfg.band_b = static_cast<int>(parse_long(f.band, "band"));
        if (cfg.band_b < 0) throw UsageError("band must be non-negative or 'cv'");
    }
    cfg.threads = f.threads >= 0 ? f.threads : default_threads();
    cfg.validate();
    return cfg;
}

inline int cmd_synth(int days, const std::string& symbols_arg, std::uint64_t seed,
                     const std::string& model_arg, int intervals, const std::string& out) {
    if (days < 1) throw UsageError("--days must be at least 1");
    auto symbols = parse_symbols(symbols_arg);
    MarketModel mm;
    if (model_arg == "builtin") {
        mm = builtin_market_model(intervals, symbols);
    } else {
        mm = load_market_model(model_arg);
        for (const auto& sym : symbols)
            if (!mm.volume.b.count(sym))
                throw DataError("model has no level for symbol " + sym);
    }
    Dataset data = synthesize(mm.volume, mm.vol, mm.p0, days, symbols, seed);
    write_csv(data, out);
    return kExitOk;
}

inline int cmd_backtest(const BacktestFlags& f) {
    if (f.data.empty()) throw UsageError("--data is required");
    BacktestConfig cfg = build_config(f);
    Dataset data = load_csv(f.data, cfg.T);
    BacktestResult result = run_backtest(data, cfg);

    std::filesystem::create_directories(f.out_dir);
    emit_orders_csv(result.orders, f.out_dir + "/orders.csv");
    emit_frontier(result.stats, f.out_dir + "/frontier.csv");
    nlohmann::json manifest = make_manifest(cfg, file_digest(f.data), f.seed,
                                            result.chosen_band, result.elapsed_ms);
    std::ofstream mf(f.out_dir + "/manifest.json");
    if (!mf) throw DataError("cannot write manifest");
    mf << manifest.dump(2) << '\n';
    return kExitOk;
}

inline int cmd_schedule(const BacktestFlags& f, const std::string& date,
                        const std::string& symbol, const std::string& method,
                        const std::string& lambda_arg, bool lambda_given,
                        const std::string& out, const std::string& trace_path) {
    if (f.data.empty()) throw UsageError("--data is required");
    if (method != "static" && method != "dynamic")
        throw UsageError("--method must be static or dynamic");
    if (method == "static" && lambda_given)
        throw UsageError("--lambda applies to the dynamic method only");

    BacktestConfig cfg = build_config(f);
    Dataset data = load_csv(f.data, cfg.T);
    auto it = std::find(data.days.begin(), data.days.end(), date);
    if (it == data.days.end()) throw DataError("date " + date + " not in dataset");
    const int di = static_cast<int>(it - data.days.begin());
    if (di < cfg.W)
        throw DataError("need " + std::to_string(cfg.W) + " preceding days for estimation");
    if (!data.has(date, symbol)) throw DataError("no series for " + symbol + " on " + date);

    int band = cfg.band_cv ? cross_validate_band(data, cfg, cfg.cv_candidates) : cfg.band_b;
    std::span<const std::string> window(data.days.data() + (di - cfg.W),
                                        static_cast<std::size_t>(cfg.W));
    WindowEstimates est = estimate_window(data, window, band);
    const double C = cfg.order_frac * est.expected_V.at(symbol);
    const CostParams costs = cfg.costs();

    if (method == "static") {
        Schedule sch = closed_form_static(est.frac, C);
        write_schedule_csv(sch, out);
    } else {
        OrderSpec order{symbol, date, C, RiskAversion::parse(lambda_arg)};
        ShdpResult res =
            shdp_execute(data.at(date, symbol), order, costs, est.vol, est.model);
        write_schedule_csv(res.schedule, out);
        write_trace_csv(res.trace, trace_path.empty() ? out + ".trace.csv" : trace_path);
    }
    return kExitOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"VWAP execution schedules: synthetic data, backtests, single orders"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic minute bars");
    int synth_days = 0;
    std::string synth_symbols = "5";
    std::uint64_t synth_seed = 0;
    std::string synth_model = "builtin";
    int synth_intervals = 390;
    std::string synth_out = "data.csv";
    synth->add_option("--days", synth_days, "number of days")->required();
    synth->add_option("--symbols", synth_symbols, "symbol count or comma-separated names");
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--model", synth_model, "'builtin' or model JSON path");
    synth->add_option("--intervals", synth_intervals, "intervals per day (builtin model)");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // backtest
    auto* bt = app.add_subcommand("backtest", "rolling out-of-sample backtest");
    detail::BacktestFlags bf;
    bt->add_option("--data", bf.data, "input minute-bar CSV")->required();
    bt->add_option("--window", bf.window, "estimation window, days");
    bt->add_option("--cv-days", bf.cv_days, "days reserved for bandwidth cross-validation");
    bt->add_option("--intervals", bf.intervals, "intervals per day");
    bt->add_option("--order-frac", bf.order_frac, "order size as fraction of expected volume");
    bt->add_option("--spread-bp", bf.spread_bp, "constant spread, basis points");
    bt->add_option("--alpha", bf.alpha, "market-order participation coefficient");
    bt->add_option("--lambdas", bf.lambdas, "comma list of risk aversions, inf allowed");
    bt->add_option("--band", bf.band, "covariance bandwidth, or 'cv'");
    bt->add_option("--out-dir", bf.out_dir, "output directory");
    bt->add_option("--threads", bf.threads, "worker threads (0: all cores)");
    bt->add_option("--seed", bf.seed, "seed recorded in the manifest");
    bt->add_option("--config", bf.config_file, "JSON config supplying flag defaults");

    // schedule
    auto* sch = app.add_subcommand("schedule", "compute one order schedule");
    detail::BacktestFlags sf;
    std::string sch_date, sch_symbol, sch_method = "static", sch_lambda = "inf";
    std::string sch_out = "schedule.csv", sch_trace;
    sch->add_option("--data", sf.data, "input minute-bar CSV")->required();
    sch->add_option("--date", sch_date, "execution date")->required();
    sch->add_option("--symbol", sch_symbol, "symbol")->required();
    sch->add_option("--method", sch_method, "static or dynamic");
    sch->add_option("--lambda", sch_lambda, "risk aversion (dynamic only)");
    sch->add_option("--window", sf.window, "estimation window, days");
    sch->add_option("--intervals", sf.intervals, "intervals per day");
    sch->add_option("--order-frac", sf.order_frac, "order size fraction");
    sch->add_option("--spread-bp", sf.spread_bp, "constant spread, basis points");
    sch->add_option("--alpha", sf.alpha, "participation coefficient");
    sch->add_option("--band", sf.band, "covariance bandwidth, or 'cv'");
    sch->add_option("--config", sf.config_file, "JSON config supplying flag defaults");
    sch->add_option("--out", sch_out, "schedule CSV path");
    sch->add_option("--trace", sch_trace, "per-step trace CSV path (dynamic)");

    std::vector<const char*> argv;
    argv.push_back("vwapsched");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (synth->parsed())
            return detail::cmd_synth(synth_days, synth_symbols, synth_seed, synth_model,
                                     synth_intervals, synth_out);
        if (bt->parsed()) {
            if (!bf.config_file.empty()) detail::apply_config_file(bt, bf);
            return detail::cmd_backtest(bf);
        }
        if (sch->parsed()) {
            if (!sf.config_file.empty()) detail::apply_config_file(sch, sf);
            return detail::cmd_schedule(sf, sch_date, sch_symbol, sch_method, sch_lambda,
                                        sch->count("--lambda") > 0, sch_out, sch_trace);
        }
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
}

}  // namespace vwap::cli
