#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vwap/common.hpp"

namespace vwap {

/// One stock-day of per-interval market volumes and average prices.
struct MinuteSeries {
    std::string symbol;
    std::string date;  // ISO-8601, YYYY-MM-DD
    Eigen::VectorXd volumes;
    Eigen::VectorXd prices;

    int intervals() const { return static_cast<int>(volumes.size()); }

    double total_volume() const { return volumes.sum(); }

    void validate() const {
        if (volumes.size() != prices.size())
            throw DataError(symbol + " " + date + ": volume/price length mismatch");
        if (volumes.size() == 0) throw DataError(symbol + " " + date + ": empty series");
        for (int t = 0; t < intervals(); ++t) {
            if (!(volumes[t] >= 0.0))
                throw DataError(symbol + " " + date + ": negative volume at minute " +
                                std::to_string(t + 1));
            if (!(prices[t] > 0.0))
                throw DataError(symbol + " " + date + ": non-positive price at minute " +
                                std::to_string(t + 1));
        }
        if (!(total_volume() > 0.0))
            throw DataError(symbol + " " + date + ": zero total volume");
    }
};

/// Immutable-after-construction container of stock-days keyed by (date, symbol).
struct Dataset {
    std::vector<std::string> days;     // strictly increasing
    std::vector<std::string> symbols;  // sorted, unique
    std::map<std::pair<std::string, std::string>, MinuteSeries> series;

    bool has(const std::string& date, const std::string& symbol) const {
        return series.count({date, symbol}) > 0;
    }

    const MinuteSeries& at(const std::string& date, const std::string& symbol) const {
        auto it = series.find({date, symbol});
        if (it == series.end()) throw DataError("no series for " + symbol + " on " + date);
        return it->second;
    }

    void add(MinuteSeries s) {
        s.validate();
        auto key = std::make_pair(s.date, s.symbol);
        if (series.count(key)) throw DataError("duplicate series " + s.symbol + " " + s.date);
        if (std::find(days.begin(), days.end(), s.date) == days.end()) {
            days.push_back(s.date);
            std::sort(days.begin(), days.end());
        }
        if (std::find(symbols.begin(), symbols.end(), s.symbol) == symbols.end()) {
            symbols.push_back(s.symbol);
            std::sort(symbols.begin(), symbols.end());
        }
        series.emplace(std::move(key), std::move(s));
    }
};

namespace detail {

inline void split_csv_line(const std::string& line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.emplace_back(line.data() + start, i - start);
            start = i + 1;
        }
    }
}

inline bool valid_iso_date(std::string_view d) {
    if (d.size() != 10 || d[4] != '-' || d[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (d[i] < '0' || d[i] > '9') return false;
    return true;
}

// Civil-calendar conversion (proleptic Gregorian), for synthetic date ranges.
inline long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

inline void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace detail

inline std::string add_days(const std::string& iso, int n) {
    if (!detail::valid_iso_date(iso)) throw DataError("bad date: " + iso);
    int y = static_cast<int>(parse_long(std::string_view(iso).substr(0, 4), "year"));
    int m = static_cast<int>(parse_long(std::string_view(iso).substr(5, 2), "month"));
    int d = static_cast<int>(parse_long(std::string_view(iso).substr(8, 2), "day"));
    long z = detail::days_from_civil(y, m, d) + n;
    detail::civil_from_days(z, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

/// Load minute bars from CSV with header `date,symbol,minute_index,price,volume`.
/// Every (date, symbol) group must contain exactly T rows with minute_index 1..T,
/// strictly positive prices and strictly positive volumes. Zero-volume minutes are
/// rejected (the log-volume model downstream cannot absorb them); callers with
/// sparse data should floor volumes at one share before ingest.
inline Dataset load_csv(const std::string& path, int T) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    if (T <= 0) throw UsageError("interval count must be positive");

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "date,symbol,minute_index,price,volume")
        throw DataError(path + ": bad header '" + line + "'");

    struct Group {
        Eigen::VectorXd volumes, prices;
        std::vector<bool> seen;
        long first_row = 0;
    };
    std::map<std::pair<std::string, std::string>, Group> groups;
    std::vector<std::string_view> fields;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_csv_line(line, fields);
        const std::string where = path + " row " + std::to_string(row);
        if (fields.size() != 5) throw DataError(where + ": expected 5 fields");
        if (!detail::valid_iso_date(fields[0])) throw DataError(where + ": bad date");
        std::string date(fields[0]);
        std::string symbol(fields[1]);
        if (symbol.empty()) throw DataError(where + ": empty symbol");
        long minute = parse_long(fields[2], "minute_index at " + where);
        double price = parse_double(fields[3], "price at " + where);
        double volume = parse_double(fields[4], "volume at " + where);
        if (minute < 1 || minute > T)
            throw DataError(where + ": minute_index " + std::to_string(minute) +
                            " outside 1.." + std::to_string(T));
        if (!(price > 0.0)) throw DataError(where + ": non-positive price");
        if (volume < 0.0) throw DataError(where + ": negative volume");
        if (volume == 0.0) throw DataError(where + ": zero volume minute (unsupported)");

        auto& g = groups[{date, symbol}];
        if (g.seen.empty()) {
            g.volumes.setZero(T);
            g.prices.setZero(T);
            g.seen.assign(static_cast<std::size_t>(T), false);
            g.first_row = row;
        }
        auto idx = static_cast<std::size_t>(minute - 1);
        if (g.seen[idx])
            throw DataError(where + ": duplicate minute " + std::to_string(minute) + " for " +
                            symbol + " " + date);
        g.seen[idx] = true;
        g.volumes[minute - 1] = volume;
        g.prices[minute - 1] = price;
    }

    Dataset out;
    for (auto& [key, g] : groups) {
        auto missing = std::find(g.seen.begin(), g.seen.end(), false);
        if (missing != g.seen.end()) {
            long minute = missing - g.seen.begin() + 1;
            throw DataError(path + ": incomplete day " + key.first + " for " + key.second +
                            " (missing minute " + std::to_string(minute) + ")");
        }
        MinuteSeries s;
        s.date = key.first;
        s.symbol = key.second;
        s.volumes = std::move(g.volumes);
        s.prices = std::move(g.prices);
        out.add(std::move(s));
    }
    return out;
}

inline void write_csv(const Dataset& data, std::ostream& out) {
    out << "date,symbol,minute_index,price,volume\n";
    for (const auto& [key, s] : data.series) {
        for (int t = 0; t < s.intervals(); ++t) {
            out << s.date << ',' << s.symbol << ',' << (t + 1) << ',' << format_double(s.prices[t])
                << ',' << format_double(s.volumes[t]) << '\n';
        }
    }
}

inline void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_csv(data, out);
}

}  // namespace vwap
