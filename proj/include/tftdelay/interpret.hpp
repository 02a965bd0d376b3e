#pragma once

// Variable importance and temporal attention read off forecast outputs,
// with CSV and SVG writers.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tftdelay/tft.hpp"

namespace tftdelay::interp {

struct GroupImportance {
    std::string group;  // static, past or future
    std::vector<std::string> names;
    std::vector<double> weights;  // mean selection weight, sums to 1

    // Indices sorted by decreasing weight (stable on ties).
    std::vector<std::size_t> ranking() const {
        std::vector<std::size_t> idx(weights.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return weights[a] > weights[b]; });
        return idx;
    }

    std::vector<std::string> top(std::size_t n) const {
        std::vector<std::string> out;
        for (auto i : ranking()) {
            if (out.size() == n) break;
            out.push_back(names[i]);
        }
        return out;
    }
};

struct ImportanceSummary {
    std::size_t samples = 0;
    GroupImportance statics, past, future;
};

namespace detail {

inline GroupImportance mean_rows(const std::string& group, const std::vector<data::VariableSpec>& vars,
                                 const std::vector<const std::vector<double>*>& rows) {
    GroupImportance g;
    g.group = group;
    for (const auto& v : vars) g.names.push_back(v.name);
    const std::size_t V = vars.size();
    g.weights.assign(V, 0.0);
    std::size_t n = 0;
    for (const auto* r : rows) {
        if (r->size() % V) throw ShapeError(group + " weights do not divide into " + std::to_string(V) + " variables");
        for (std::size_t i = 0; i < r->size(); ++i) g.weights[i % V] += (*r)[i];
        n += r->size() / V;
    }
    if (n)
        for (auto& w : g.weights) w /= double(n);
    return g;
}

}  // namespace detail

// Selection weights averaged over samples and time steps.
inline ImportanceSummary aggregate(const std::vector<tft::ForecastSet>& fs, const data::InputSchema& schema) {
    if (fs.empty()) throw std::invalid_argument("no forecasts to aggregate");
    std::vector<const std::vector<double>*> s, p, f;
    for (const auto& x : fs) {
        s.push_back(&x.static_weights);
        p.push_back(&x.past_weights);
        f.push_back(&x.future_weights);
    }
    ImportanceSummary out;
    out.samples = fs.size();
    out.statics = detail::mean_rows("static", schema.static_vars, s);
    out.past = detail::mean_rows("past", schema.past_vars, p);
    out.future = detail::mean_rows("future", schema.future_vars, f);
    return out;
}

// Attention mass by lag relative to the forecast anchor t: past keys are
// lags -k..-1 (t itself is -1), future keys are +1..+tau. Each lag is the mean
// weight that the forecast-horizon queries able to see that key put on it.
// Past-step queries are left out: the first of them can only attend to the
// oldest key, which would bias every profile toward lag -k.
struct AttentionProfile {
    std::size_t k = 0, tau = 0;
    std::vector<long> lags;
    std::vector<double> weights;

    double at(long lag) const {
        for (std::size_t i = 0; i < lags.size(); ++i)
            if (lags[i] == lag) return weights[i];
        throw std::out_of_range("no lag " + std::to_string(lag) + " in attention profile");
    }
};

inline long key_lag(std::size_t j, std::size_t k) { return j < k ? long(j) - long(k) : long(j) - long(k) + 1; }

inline AttentionProfile attention_by_lag(const std::vector<tft::ForecastSet>& fs) {
    if (fs.empty()) throw std::invalid_argument("no forecasts for attention");
    AttentionProfile p;
    p.k = fs[0].k;
    p.tau = fs[0].tau;
    const std::size_t T = p.k + p.tau;
    p.weights.assign(T, 0.0);
    for (std::size_t j = 0; j < T; ++j) p.lags.push_back(key_lag(j, p.k));
    for (const auto& f : fs) {
        if (f.k != p.k || f.tau != p.tau || f.attention.size() != T * T) {
            throw ShapeError("forecasts mix window sizes");
        }
        for (std::size_t i = p.k; i < T; ++i)
            for (std::size_t j = 0; j < T; ++j) p.weights[j] += f.attention[i * T + j];
    }
    for (std::size_t j = 0; j < T; ++j) p.weights[j] /= double(fs.size() * (j < p.k ? p.tau : T - j));
    return p;
}

// Mass on the most recent past step minus mass on the oldest.
inline double attention_recency_score(const AttentionProfile& p) {
    if (p.k < 2) throw std::invalid_argument("recency needs at least two past steps (k >= 2)");
    return p.at(-1) - p.at(-long(p.k));
}

// ------------------------------------------------------------------- CSV

inline void write_importance_csv(const std::filesystem::path& path, const ImportanceSummary& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "group,variable,weight,rank\n";
    for (const auto* g : {&s.statics, &s.past, &s.future}) {
        const auto order = g->ranking();
        std::vector<std::size_t> rank(order.size());
        for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
        for (std::size_t i = 0; i < g->names.size(); ++i)
            out << g->group << ',' << g->names[i] << ',' << data::format_double(g->weights[i]) << ',' << rank[i] << '\n';
    }
}

inline ImportanceSummary read_importance_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "group,variable,weight,rank") throw std::runtime_error("bad importance header in " + path.string());
    ImportanceSummary s;
    s.statics.group = "static";
    s.past.group = "past";
    s.future.group = "future";
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string group, name, w;
        std::getline(ss, group, ',');
        std::getline(ss, name, ',');
        std::getline(ss, w, ',');
        GroupImportance* g = group == "static" ? &s.statics : group == "past" ? &s.past : group == "future" ? &s.future : nullptr;
        if (!g) throw std::runtime_error("unknown group '" + group + "' in " + path.string());
        g->names.push_back(name);
        g->weights.push_back(data::parse_double(w));
    }
    return s;
}

inline void write_attention_csv(const std::filesystem::path& path, const AttentionProfile& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "lag,weight\n";
    for (std::size_t i = 0; i < p.lags.size(); ++i) out << p.lags[i] << ',' << data::format_double(p.weights[i]) << '\n';
}

inline AttentionProfile read_attention_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "lag,weight") throw std::runtime_error("bad attention header in " + path.string());
    AttentionProfile p;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = line.find(',');
        if (c == std::string::npos) throw std::runtime_error("bad attention row '" + line + "'");
        const long lag = std::stol(line.substr(0, c));
        p.lags.push_back(lag);
        p.weights.push_back(data::parse_double(line.substr(c + 1)));
        if (lag < 0) ++p.k; else ++p.tau;
    }
    return p;
}

// ------------------------------------------------------------------- SVG

namespace detail {

inline std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

}  // namespace detail

// Horizontal bars for the n most important variables of one group.
inline std::string importance_svg(const GroupImportance& g, std::size_t n = 15) {
    const auto order = g.ranking();
    n = std::min(n, order.size());
    const double row = 18, left = 170, width = 300;
    const double top = g.weights.empty() ? 0.0 : g.weights[order[0]];
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 70 << "\" height=\""
      << row * double(n) + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<text x=\"4\" y=\"14\" font-weight=\"bold\">" << detail::esc(g.group) << " variable importance</text>\n";
    for (std::size_t r = 0; r < n; ++r) {
        const auto i = order[r];
        const double y = 24 + row * double(r);
        const double w = top > 0 ? width * g.weights[i] / top : 0.0;
        o << "<text x=\"" << left - 4 << "\" y=\"" << y + 12 << "\" text-anchor=\"end\">" << detail::esc(g.names[i])
          << "</text>";
        o << "<rect x=\"" << left << "\" y=\"" << y + 2 << "\" width=\"" << w << "\" height=\"" << row - 4
          << "\" fill=\"#4a7bb7\"/>";
        o << "<text x=\"" << left + w + 4 << "\" y=\"" << y + 12 << "\">" << std::setprecision(3) << g.weights[i]
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// Attention mass per lag as bars, past in grey and future in blue.
inline std::string attention_svg(const AttentionProfile& p) {
    const double bw = 22, h = 160, left = 40, base = 190;
    double top = 0;
    for (double w : p.weights) top = std::max(top, w);
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + bw * double(p.lags.size()) + 20
      << "\" height=\"220\" font-family=\"sans-serif\" font-size=\"10\">\n";
    o << "<text x=\"4\" y=\"14\" font-weight=\"bold\">attention by lag</text>\n";
    for (std::size_t i = 0; i < p.lags.size(); ++i) {
        const double bh = top > 0 ? h * p.weights[i] / top : 0.0;
        const double x = left + bw * double(i);
        o << "<rect x=\"" << x + 2 << "\" y=\"" << base - bh << "\" width=\"" << bw - 4 << "\" height=\"" << bh
          << "\" fill=\"" << (p.lags[i] < 0 ? "#888888" : "#4a7bb7") << "\"/>";
        o << "<text x=\"" << x + bw / 2 << "\" y=\"" << base + 12 << "\" text-anchor=\"middle\">" << p.lags[i]
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& s) {
    std::ofstream out(path);
    out << s;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace tftdelay::interp
