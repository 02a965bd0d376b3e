#pragma once

// Airport records, the variable schema fed to the forecaster, target
// smoothing, per-airport normalization and windowing into forecast samples.
//
// Window convention: a sample anchored at t has past steps t-k+1 .. t and
// future steps t+1 .. t+tau_max. Observed fields and past targets never come
// from after t; labels always do.

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tftdelay::data {

inline constexpr std::size_t kAirports = 4;
inline constexpr std::array<const char*, kAirports> kAirportNames{"LGA", "JFK", "EWR", "PHL"};
inline constexpr std::size_t kWxFeatures = 16;
inline constexpr std::size_t kTmiCount = 15;
inline constexpr std::size_t kSharedTmis = 11;
inline constexpr std::size_t kTargets = 2;  // 0: departure delay MA, 1: arrival delay MA
inline constexpr std::array<const char*, kTargets> kTargetNames{"dep_delay_ma", "arr_delay_ma"};
inline constexpr std::size_t kTargetWindow = 4;

// 9 AFP FCAs and the two ZNY reroutes are shared by all airports; the last
// four are specific to the record's airport.
inline constexpr std::array<const char*, kTmiCount> kTmiNames{
    "FCAA08", "FCABW1", "FCADC1", "FCADC7", "FCAID1", "FCAN92", "FCAOB1",     "FCAOB3",
    "FCAOB6", "ZNY_IN", "ZNY_OUT", "GDP",   "GS",     "IN_REROUTE", "OUT_REROUTE"};
inline constexpr std::size_t kTmiGdp = 11, kTmiGs = 12, kTmiInReroute = 13, kTmiOutReroute = 14;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::size_t airport_index(const std::string& name) {
    for (std::size_t i = 0; i < kAirports; ++i)
        if (name == kAirportNames[i]) return i;
    throw DataError("unknown airport '" + name + "'");
}

struct AirportRecord {
    std::size_t airport = 0;
    long t = 0;
    // observed
    double arrivals = 0, departures = 0, arr_delay = 0, dep_delay = 0, arr_otp = 100, dep_otp = 100;
    std::array<double, kWxFeatures> wx{};
    // known
    double arr_demand = 0, dep_demand = 0, aar = 0, adr = 0, aar_eff = 0;
    std::array<int, kTmiCount> tmi{};
    int hour = 0, qod = 0, month = 1;
    // targets
    double dep_delay_ma = 0, arr_delay_ma = 0;

    double target(std::size_t i) const { return i == 0 ? dep_delay_ma : arr_delay_ma; }
    double& target(std::size_t i) { return i == 0 ? dep_delay_ma : arr_delay_ma; }

    void validate() const {
        auto fail = [&](const std::string& what) {
            throw DataError(std::string(kAirportNames.at(airport)) + " t=" + std::to_string(t) + ": " + what);
        };
        if (airport >= kAirports) throw DataError("airport index out of range");
        for (double p : {arr_otp, dep_otp})
            if (!(p >= 0.0 && p <= 100.0)) fail("on-time percentage outside [0,100]");
        for (double v : {arrivals, departures, arr_demand, dep_demand, aar, adr, aar_eff})
            if (!(v >= 0.0)) fail("negative count, demand or rate");
        for (int f : tmi)
            if (f != 0 && f != 1) fail("TMI flag not binary");
        if (hour < 0 || hour > 23 || qod < 0 || qod > 95 || month < 1 || month > 12) fail("calendar field out of range");
        for (double v : {arr_delay, dep_delay, dep_delay_ma, arr_delay_ma})
            if (!std::isfinite(v)) fail("non-finite delay");
    }

    bool operator==(const AirportRecord&) const = default;
};

using Series = std::vector<AirportRecord>;  // one airport, contiguous in t

// Trailing mean over min(window, i + 1) values.
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t window) {
    if (window == 0) throw std::invalid_argument("moving average window must be >= 1");
    if (x.empty()) throw std::invalid_argument("moving average of an empty series");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double s = 0.0;
        for (std::size_t j = lo; j <= i; ++j) s += x[j];
        out[i] = s / double(i + 1 - lo);
    }
    return out;
}

// Recomputes both targets from the raw delays of a series.
inline void fill_targets(Series& s, std::size_t window = kTargetWindow) {
    if (s.empty()) return;
    std::vector<double> dep, arr;
    for (const auto& r : s) {
        dep.push_back(r.dep_delay);
        arr.push_back(r.arr_delay);
    }
    const auto dm = moving_average(dep, window), am = moving_average(arr, window);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i].dep_delay_ma = dm[i];
        s[i].arr_delay_ma = am[i];
    }
}

// ------------------------------------------------------------------ schema

enum class VarKind { Scalar, Categorical, Vector };

struct VariableSpec {
    std::string name;
    VarKind kind = VarKind::Scalar;
    std::size_t size = 1;  // cardinality (categorical) or width (vector)

    std::size_t columns() const { return kind == VarKind::Vector ? size : 1; }
    bool operator==(const VariableSpec&) const = default;
};

struct InputSchema {
    std::vector<VariableSpec> static_vars, past_vars, future_vars;

    static std::size_t columns(const std::vector<VariableSpec>& vars) {
        std::size_t n = 0;
        for (const auto& v : vars) n += v.columns();
        return n;
    }
    bool operator==(const InputSchema&) const = default;
};

inline std::vector<VariableSpec> observed_variables() {
    std::vector<VariableSpec> v;
    for (const char* n : {"arrivals", "departures", "arr_delay", "dep_delay", "arr_otp", "dep_otp"}) v.push_back({n});
    for (std::size_t i = 0; i < kWxFeatures; ++i) v.push_back({"f" + std::to_string(i)});
    return v;
}

inline std::vector<VariableSpec> known_variables() {
    std::vector<VariableSpec> v;
    for (const char* n : {"arr_demand", "dep_demand", "aar", "adr", "aar_eff"}) v.push_back({n});
    for (const char* n : kTmiNames) v.push_back({std::string("tmi_") + n});
    v.push_back({"hour", VarKind::Categorical, 24});
    v.push_back({"qod", VarKind::Vector, 2});
    v.push_back({"month", VarKind::Categorical, 12});
    return v;
}

// Past steps carry observed + known + past targets; future steps carry known only.
inline InputSchema airport_schema() {
    InputSchema s;
    s.static_vars = {{"airport", VarKind::Categorical, kAirports}};
    s.past_vars = observed_variables();
    for (auto& v : known_variables()) s.past_vars.push_back(v);
    for (const char* n : kTargetNames) s.past_vars.push_back({n});
    s.future_vars = known_variables();
    return s;
}

namespace detail {

inline void append_observed(const AirportRecord& r, std::vector<double>& out) {
    for (double v : {r.arrivals, r.departures, r.arr_delay, r.dep_delay, r.arr_otp, r.dep_otp}) out.push_back(v);
    for (double v : r.wx) out.push_back(v);
}

inline void append_known(const AirportRecord& r, std::vector<double>& out) {
    for (double v : {r.arr_demand, r.dep_demand, r.aar, r.adr, r.aar_eff}) out.push_back(v);
    for (int f : r.tmi) out.push_back(f);
    constexpr double two_pi = 6.283185307179586;
    out.push_back(r.hour);
    out.push_back(std::sin(two_pi * r.qod / 96.0));
    out.push_back(std::cos(two_pi * r.qod / 96.0));
    out.push_back(r.month - 1);
}

}  // namespace detail

inline std::vector<double> past_row(const AirportRecord& r) {
    std::vector<double> out;
    detail::append_observed(r, out);
    detail::append_known(r, out);
    out.push_back(r.dep_delay_ma);
    out.push_back(r.arr_delay_ma);
    return out;
}

inline std::vector<double> future_row(const AirportRecord& r) {
    std::vector<double> out;
    detail::append_known(r, out);
    return out;
}

// ----------------------------------------------------------- normalization

// Continuous fields, addressable by name. Binary flags and calendar fields
// are left as they are.
inline std::vector<std::pair<std::string, double*>> continuous_fields(AirportRecord& r) {
    std::vector<std::pair<std::string, double*>> f{
        {"arrivals", &r.arrivals},     {"departures", &r.departures}, {"arr_delay", &r.arr_delay},
        {"dep_delay", &r.dep_delay},   {"arr_otp", &r.arr_otp},       {"dep_otp", &r.dep_otp}};
    for (std::size_t i = 0; i < kWxFeatures; ++i) f.emplace_back("f" + std::to_string(i), &r.wx[i]);
    for (auto [n, p] : std::initializer_list<std::pair<const char*, double*>>{{"arr_demand", &r.arr_demand},
                                                                           {"dep_demand", &r.dep_demand},
                                                                           {"aar", &r.aar},
                                                                           {"adr", &r.adr},
                                                                           {"aar_eff", &r.aar_eff},
                                                                           {"dep_delay_ma", &r.dep_delay_ma},
                                                                           {"arr_delay_ma", &r.arr_delay_ma}}) {
        f.emplace_back(n, p);
    }
    return f;
}

inline std::vector<std::string> continuous_field_names() {
    AirportRecord r;
    std::vector<std::string> out;
    for (auto& [n, p] : continuous_fields(r)) out.push_back(n);
    return out;
}

struct NormStats {
    std::vector<std::string> fields;
    // [airport][field]
    std::vector<std::vector<double>> mean, scale;
    std::vector<std::string> warnings;

    std::size_t field_index(const std::string& name) const {
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (fields[i] == name) return i;
        throw std::out_of_range("no normalization stats for field '" + name + "'");
    }

    double denormalize(double z, std::size_t airport, std::size_t field) const {
        return z * scale.at(airport).at(field) + mean.at(airport).at(field);
    }
    double normalize(double x, std::size_t airport, std::size_t field) const {
        return (x - mean.at(airport).at(field)) / scale.at(airport).at(field);
    }
    double denormalize_target(double z, std::size_t airport, std::size_t target) const {
        return denormalize(z, airport, field_index(kTargetNames.at(target)));
    }

    bool operator==(const NormStats& o) const {
        return fields == o.fields && mean == o.mean && scale == o.scale;
    }
};

// Per-airport, per-field mean and population std. Zero-variance fields get
// scale 1 and a warning.
inline NormStats normalize_fit(const std::vector<Series>& train) {
    NormStats s;
    s.fields = continuous_field_names();
    const std::size_t nf = s.fields.size();
    s.mean.assign(kAirports, std::vector<double>(nf, 0.0));
    s.scale.assign(kAirports, std::vector<double>(nf, 1.0));
    for (const auto& series : train) {
        if (series.empty()) continue;
        const std::size_t a = series.front().airport;
        std::vector<double> sum(nf, 0.0), sq(nf, 0.0);
        for (auto r : series) {
            auto f = continuous_fields(r);
            for (std::size_t i = 0; i < nf; ++i) sum[i] += *f[i].second;
        }
        const double n = double(series.size());
        for (std::size_t i = 0; i < nf; ++i) s.mean[a][i] = sum[i] / n;
        for (auto r : series) {
            auto f = continuous_fields(r);
            for (std::size_t i = 0; i < nf; ++i) {
                const double d = *f[i].second - s.mean[a][i];
                sq[i] += d * d;
            }
        }
        for (std::size_t i = 0; i < nf; ++i) {
            const double sd = std::sqrt(sq[i] / n);
            if (sd > 1e-12) {
                s.scale[a][i] = sd;
            } else {
                s.warnings.push_back(std::string(kAirportNames[a]) + "." + s.fields[i] +
                                     ": zero variance, scale set to 1");
            }
        }
    }
    return s;
}

inline Series normalize_apply(Series series, const NormStats& s) {
    for (auto& r : series) {
        auto f = continuous_fields(r);
        for (std::size_t i = 0; i < f.size(); ++i) *f[i].second = s.normalize(*f[i].second, r.airport, i);
    }
    return series;
}

inline std::vector<Series> normalize_apply(const std::vector<Series>& all, const NormStats& s) {
    std::vector<Series> out;
    for (const auto& series : all) out.push_back(normalize_apply(series, s));
    return out;
}

// --------------------------------------------------------------- windowing

struct ForecastSample {
    std::size_t airport = 0;
    long anchor = 0;
    std::vector<long> past_t, future_t;  // timestamps, for leakage checks
    std::vector<double> past;            // [k][past columns]
    std::vector<double> future;          // [tau][future columns]
    std::vector<double> labels;          // [tau][2]
};

struct SampleRef {
    std::size_t airport = 0;  // index into the dataset's series
    std::size_t offset = 0;   // position of the anchor inside the series
    long anchor = 0;
};

// Pre-extracted rows for every airport series plus the list of windows.
class WindowedDataset {
public:
    WindowedDataset() = default;

    WindowedDataset(const std::vector<Series>& series, std::size_t k, std::size_t tau)
        : k_(k), tau_(tau), past_cols_(InputSchema::columns(airport_schema().past_vars)),
          future_cols_(InputSchema::columns(airport_schema().future_vars)) {
        if (k == 0 || tau == 0) throw std::invalid_argument("k and tau_max must be >= 1");
        for (std::size_t s = 0; s < series.size(); ++s) {
            const auto& rs = series[s];
            Rows rows;
            rows.airport = rs.empty() ? 0 : rs.front().airport;
            for (std::size_t i = 0; i < rs.size(); ++i) {
                if (rs[i].airport != rows.airport) throw DataError("series mixes airports");
                if (i > 0 && rs[i].t != rs[i - 1].t + 1) {
                    throw DataError(std::string("gap in ") + kAirportNames.at(rows.airport) + " records between t=" +
                                    std::to_string(rs[i - 1].t) + " and t=" + std::to_string(rs[i].t));
                }
                const auto p = past_row(rs[i]);
                const auto f = future_row(rs[i]);
                rows.past.insert(rows.past.end(), p.begin(), p.end());
                rows.future.insert(rows.future.end(), f.begin(), f.end());
                rows.targets.push_back(rs[i].dep_delay_ma);
                rows.targets.push_back(rs[i].arr_delay_ma);
                rows.t.push_back(rs[i].t);
            }
            const std::size_t n = rs.size();
            for (std::size_t off = k - 1; off + tau < n; ++off) refs_.push_back({s, off, rows.t[off]});
            rows_.push_back(std::move(rows));
        }
    }

    std::size_t size() const { return refs_.size(); }
    const std::vector<SampleRef>& refs() const { return refs_; }
    std::size_t k() const { return k_; }
    std::size_t tau() const { return tau_; }
    std::size_t past_columns() const { return past_cols_; }
    std::size_t future_columns() const { return future_cols_; }
    std::size_t series_airport(std::size_t s) const { return rows_.at(s).airport; }

    const double* past_rows(const SampleRef& r) const {
        return rows_[r.airport].past.data() + (r.offset + 1 - k_) * past_cols_;
    }
    const double* future_rows(const SampleRef& r) const {
        return rows_[r.airport].future.data() + (r.offset + 1) * future_cols_;
    }
    const double* label_rows(const SampleRef& r) const {
        return rows_[r.airport].targets.data() + (r.offset + 1) * kTargets;
    }
    // Smoothed targets at the anchor (the persistence forecast).
    const double* anchor_targets(const SampleRef& r) const {
        return rows_[r.airport].targets.data() + r.offset * kTargets;
    }

    ForecastSample materialize(const SampleRef& r) const {
        ForecastSample s;
        s.airport = rows_[r.airport].airport;
        s.anchor = r.anchor;
        const auto& t = rows_[r.airport].t;
        for (std::size_t i = 0; i < k_; ++i) s.past_t.push_back(t[r.offset + 1 - k_ + i]);
        for (std::size_t i = 0; i < tau_; ++i) s.future_t.push_back(t[r.offset + 1 + i]);
        s.past.assign(past_rows(r), past_rows(r) + k_ * past_cols_);
        s.future.assign(future_rows(r), future_rows(r) + tau_ * future_cols_);
        s.labels.assign(label_rows(r), label_rows(r) + tau_ * kTargets);
        return s;
    }

    // Windows whose labels all precede t_split, and windows whose labels all
    // start at or after it. Windows straddling the boundary are dropped.
    std::pair<std::vector<SampleRef>, std::vector<SampleRef>> temporal_split(long t_split) const {
        long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
        for (const auto& rows : rows_) {
            if (rows.t.empty()) continue;
            lo = std::min(lo, rows.t.front());
            hi = std::max(hi, rows.t.back());
        }
        if (t_split <= lo || t_split > hi) {
            throw std::out_of_range("split boundary t=" + std::to_string(t_split) + " outside data range [" +
                                    std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        std::pair<std::vector<SampleRef>, std::vector<SampleRef>> out;
        for (const auto& r : refs_) {
            if (r.anchor + long(tau_) < t_split) {
                out.first.push_back(r);
            } else if (r.anchor + 1 >= t_split) {
                out.second.push_back(r);
            }
        }
        return out;
    }

private:
    struct Rows {
        std::size_t airport = 0;
        std::vector<double> past, future, targets;
        std::vector<long> t;
    };
    std::size_t k_ = 0, tau_ = 0, past_cols_ = 0, future_cols_ = 0;
    std::vector<Rows> rows_;
    std::vector<SampleRef> refs_;
};

// Records with t < t_split, and records with t >= t_split.
inline std::pair<std::vector<Series>, std::vector<Series>> temporal_split(const std::vector<Series>& all,
                                                                          long t_split) {
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (const auto& s : all) {
        if (s.empty()) continue;
        lo = std::min(lo, s.front().t);
        hi = std::max(hi, s.back().t);
    }
    if (t_split <= lo || t_split > hi) {
        throw std::out_of_range("split boundary t=" + std::to_string(t_split) + " outside data range [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    std::pair<std::vector<Series>, std::vector<Series>> out;
    for (const auto& s : all) {
        Series a, b;
        for (const auto& r : s) (r.t < t_split ? a : b).push_back(r);
        out.first.push_back(std::move(a));
        out.second.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------- CSV IO

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("bad number '" + s + "'");
    return v;
}

inline std::vector<std::string> dataset_columns() {
    std::vector<std::string> c{"airport", "t", "arrivals", "departures", "arr_delay", "dep_delay", "arr_otp", "dep_otp"};
    for (std::size_t i = 0; i < kWxFeatures; ++i) c.push_back("f" + std::to_string(i));
    for (const char* n : {"arr_demand", "dep_demand", "aar", "adr", "aar_eff"}) c.push_back(n);
    for (std::size_t i = 0; i < kTmiCount; ++i) c.push_back("tmi" + std::to_string(i));
    for (const char* n : {"hour", "qod", "month", "dep_delay_ma", "arr_delay_ma"}) c.push_back(n);
    return c;
}

inline std::string join(const std::vector<std::string>& parts, char sep = ',') {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) s += sep;
        s += parts[i];
    }
    return s;
}

// Rows ordered by airport, then t.
inline void write_dataset_csv(const std::filesystem::path& path, const std::vector<Series>& all) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << join(dataset_columns()) << '\n';
    for (const auto& s : all) {
        for (const auto& r : s) {
            std::vector<std::string> c{kAirportNames.at(r.airport), std::to_string(r.t)};
            for (double v : {r.arrivals, r.departures, r.arr_delay, r.dep_delay, r.arr_otp, r.dep_otp})
                c.push_back(format_double(v));
            for (double v : r.wx) c.push_back(format_double(v));
            for (double v : {r.arr_demand, r.dep_demand, r.aar, r.adr, r.aar_eff}) c.push_back(format_double(v));
            for (int f : r.tmi) c.push_back(std::to_string(f));
            c.push_back(std::to_string(r.hour));
            c.push_back(std::to_string(r.qod));
            c.push_back(std::to_string(r.month));
            c.push_back(format_double(r.dep_delay_ma));
            c.push_back(format_double(r.arr_delay_ma));
            out << join(c) << '\n';
        }
    }
    if (!out) throw DataError("failed writing " + path.string());
}

// One series per airport, in airport order; airports absent from the file
// yield empty series.
inline std::vector<Series> read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
    const auto expected = dataset_columns();
    if (line != join(expected)) throw DataError(path.string() + ": header does not match the dataset schema");
    std::vector<Series> out(kAirports);
    std::size_t lineno = 1;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        cells.clear();
        std::string cell;
        std::istringstream s(line);
        while (std::getline(s, cell, ',')) cells.push_back(cell);
        if (cells.size() != expected.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(expected.size()) + " fields, got " + std::to_string(cells.size()));
        }
        try {
            AirportRecord r;
            std::size_t c = 0;
            r.airport = airport_index(cells[c++]);
            r.t = std::stol(cells[c++]);
            for (double* p : {&r.arrivals, &r.departures, &r.arr_delay, &r.dep_delay, &r.arr_otp, &r.dep_otp})
                *p = parse_double(cells[c++]);
            for (auto& v : r.wx) v = parse_double(cells[c++]);
            for (double* p : {&r.arr_demand, &r.dep_demand, &r.aar, &r.adr, &r.aar_eff}) *p = parse_double(cells[c++]);
            for (auto& f : r.tmi) f = std::stoi(cells[c++]);
            r.hour = std::stoi(cells[c++]);
            r.qod = std::stoi(cells[c++]);
            r.month = std::stoi(cells[c++]);
            r.dep_delay_ma = parse_double(cells[c++]);
            r.arr_delay_ma = parse_double(cells[c++]);
            r.validate();
            out[r.airport].push_back(r);
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::logic_error& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace tftdelay::data
