#pragma once

// Temporal Fusion Transformer for multi-airport, multi-horizon delay
// quantiles.
//
//   static vars ─ embed ─ VSN ─┬─ GRN → c_s (selection context)
//                              ├─ GRN → c_e (enrichment context)
//                              ├─ GRN → c_h, c_c (encoder initial state)
//   past  [k steps] ─ embed ─ VSN(c_s) ─ LSTM encoder ─┐
//   future[tau]     ─ embed ─ VSN(c_s) ─ LSTM decoder ─┴─ gate/add/norm
//     ─ enrichment GRN(c_e) ─ causal interpretable attention ─ gate/add/norm
//     ─ position-wise GRN ─ gate/add/norm (skip from the LSTM stage)
//     ─ future positions ─ one linear head per target → quantiles
//
// Every stage after the decoder LSTM is per position or causally masked, so
// the output at horizon h never depends on inputs at horizons after h.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tftdelay/formulation.hpp"
#include "tftdelay/nn/attention.hpp"
#include "tftdelay/nn/lstm.hpp"
#include "tftdelay/nn/variable_selection.hpp"

namespace tftdelay::tft {

using data::InputSchema;
using data::VariableSpec;
using data::VarKind;

inline constexpr int kBundleFormatVersion = 1;

struct TftConfig {
    std::size_t d = 16;
    std::size_t heads = 2;
    double dropout = 0.1;
    std::size_t k = 4;
    std::size_t tau = 16;
    std::vector<double> quantiles{0.25, 0.5, 0.75};
    std::size_t n_targets = data::kTargets;
    InputSchema schema = data::airport_schema();

    void validate() const {
        if (d < 2 || heads == 0 || k == 0 || tau == 0 || n_targets == 0) {
            throw std::invalid_argument("TFT config needs d >= 2 and positive heads, k, tau_max, targets");
        }
        if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("dropout must lie in [0,1)");
        if (quantiles.empty()) throw std::invalid_argument("TFT needs at least one quantile");
        for (std::size_t i = 0; i < quantiles.size(); ++i) {
            if (!(quantiles[i] > 0 && quantiles[i] < 1)) throw std::invalid_argument("quantiles must lie in (0,1)");
            if (i && quantiles[i] <= quantiles[i - 1]) throw std::invalid_argument("quantiles must be sorted ascending");
        }
        median_index();
        if (schema.static_vars.empty() || schema.past_vars.empty() || schema.future_vars.empty()) {
            throw std::invalid_argument("every variable group needs at least one variable");
        }
    }

    std::size_t median_index() const {
        for (std::size_t i = 0; i < quantiles.size(); ++i)
            if (quantiles[i] == 0.5) return i;
        throw std::invalid_argument("quantiles must include the median 0.5");
    }

    std::size_t steps() const { return k + tau; }
};

// ------------------------------------------------------------ embeddings

// Turns one group's flat per-row columns into [N, V, d] variable embeddings.
// Runs of consecutive scalar variables share one grouped projection.
class InputEmbedding {
public:
    InputEmbedding() = default;

    InputEmbedding(nn::ParameterSet& ps, const std::string& name, const std::vector<VariableSpec>& vars,
                   std::size_t d, Rng& rng)
        : d_(d), columns_(InputSchema::columns(vars)), n_vars_(vars.size()) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < vars.size();) {
            const auto& v = vars[i];
            Piece p;
            p.column = col;
            if (v.kind == VarKind::Scalar) {
                std::size_t n = 0;
                while (i + n < vars.size() && vars[i + n].kind == VarKind::Scalar) ++n;
                p.kind = VarKind::Scalar;
                p.count = n;
                p.weight = ps.add(name + "." + v.name + ".weight", {n, 1, d}, nn::Init::Uniform, rng, 1);
                p.bias = ps.add(name + "." + v.name + ".bias", {n, d}, nn::Init::Zeros, rng);
                col += n;
                i += n;
            } else if (v.kind == VarKind::Categorical) {
                if (v.size == 0) throw std::invalid_argument("categorical variable '" + v.name + "' has no levels");
                p.kind = VarKind::Categorical;
                p.name = v.name;
                p.cardinality = v.size;
                p.weight = ps.add(name + "." + v.name + ".table", {v.size, d}, nn::Init::Uniform, rng, d);
                col += 1;
                ++i;
            } else {
                p.kind = VarKind::Vector;
                p.count = v.size;
                p.weight = ps.add(name + "." + v.name + ".weight", {v.size, d}, nn::Init::Uniform, rng, v.size);
                p.bias = ps.add(name + "." + v.name + ".bias", {d}, nn::Init::Zeros, rng);
                col += v.size;
                ++i;
            }
            pieces_.push_back(std::move(p));
        }
    }

    // x: [N, columns] → [N, V, d]
    Tensor operator()(const Tensor& x) const {
        if (x.rank() != 2 || x.dim(1) != columns_) {
            throw ShapeError("embedding input " + to_string(x.shape()) + " expected [N, " + std::to_string(columns_) +
                             "]");
        }
        const std::size_t N = x.dim(0);
        std::vector<Tensor> parts;
        for (const auto& p : pieces_) {
            if (p.kind == VarKind::Scalar) {
                Tensor cols = reshape(slice(x, 1, p.column, p.count), {N, p.count, 1});
                parts.push_back(add(grouped_matmul(cols, p.weight), p.bias));
            } else if (p.kind == VarKind::Categorical) {
                std::vector<std::size_t> ids(N);
                for (std::size_t r = 0; r < N; ++r) {
                    const double v = x.at(r * columns_ + p.column);
                    if (!(v >= 0 && v < double(p.cardinality)) || v != std::floor(v)) {
                        throw std::out_of_range("category " + std::to_string(v) + " of '" + p.name +
                                                "' outside 0.." + std::to_string(p.cardinality - 1));
                    }
                    ids[r] = std::size_t(v);
                }
                parts.push_back(reshape(gather_rows(p.weight, ids), {N, 1, d_}));
            } else {
                Tensor cols = slice(x, 1, p.column, p.count);
                parts.push_back(reshape(add(matmul(cols, p.weight), p.bias), {N, 1, d_}));
            }
        }
        return parts.size() == 1 ? parts[0] : concat(parts, 1);
    }

    std::size_t columns() const { return columns_; }
    std::size_t variables() const { return n_vars_; }

private:
    struct Piece {
        VarKind kind = VarKind::Scalar;
        std::string name;
        std::size_t column = 0, count = 0, cardinality = 0;
        Tensor weight, bias;
    };
    std::size_t d_ = 0, columns_ = 0, n_vars_ = 0;
    std::vector<Piece> pieces_;
};

// ------------------------------------------------------------------ model

struct Batch {
    Tensor statics;  // [B, static columns]
    Tensor past;     // [B, k, past columns]
    Tensor future;   // [B, tau, future columns]

    std::size_t size() const { return statics.dim(0); }
};

struct TftOutput {
    Tensor quantiles;        // [B, tau, targets, Q] (normalized target units)
    Tensor attention;        // [B, heads, k+tau, k+tau]
    Tensor past_weights;     // [B, k, past vars]
    Tensor future_weights;   // [B, tau, future vars]
    Tensor static_weights;   // [B, static vars]
};

class Tft {
public:
    Tft(const TftConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = cfg.d;
        const double p = cfg.dropout;
        const auto& s = cfg.schema;
        static_embed_ = InputEmbedding(ps_, "tft.static_embed", s.static_vars, d, rng);
        past_embed_ = InputEmbedding(ps_, "tft.past_embed", s.past_vars, d, rng);
        future_embed_ = InputEmbedding(ps_, "tft.future_embed", s.future_vars, d, rng);
        static_vsn_ = nn::VariableSelection(ps_, "tft.static_vsn", s.static_vars.size(), d, 0, p, rng);
        for (const char* c : {"selection", "enrichment", "state_h", "state_c"}) {
            contexts_.emplace_back(ps_, std::string("tft.context.") + c, nn::GrnOptions{d, d, d, 0, 0, p}, rng);
        }
        past_vsn_ = nn::VariableSelection(ps_, "tft.past_vsn", s.past_vars.size(), d, d, p, rng);
        future_vsn_ = nn::VariableSelection(ps_, "tft.future_vsn", s.future_vars.size(), d, d, p, rng);
        encoder_ = nn::LstmCell(ps_, "tft.encoder", d, d, rng);
        decoder_ = nn::LstmCell(ps_, "tft.decoder", d, d, rng);
        lstm_gate_ = nn::GateAddNorm(ps_, "tft.lstm_gate", d, p, rng);
        enrichment_ = nn::GatedResidualNetwork(ps_, "tft.enrichment", {d, d, d, d, 0, p}, rng);
        attention_ = nn::InterpretableAttention(ps_, "tft.attention", d, cfg.heads, std::max<std::size_t>(1, d / cfg.heads),
                                                p, rng);
        attention_gate_ = nn::GateAddNorm(ps_, "tft.attention_gate", d, p, rng);
        positionwise_ = nn::GatedResidualNetwork(ps_, "tft.positionwise", {d, d, d, 0, 0, p}, rng);
        output_gate_ = nn::GateAddNorm(ps_, "tft.output_gate", d, 0.0, rng);
        for (std::size_t t = 0; t < cfg.n_targets; ++t) {
            heads_.emplace_back(ps_, "tft.head" + std::to_string(t), d, cfg.quantiles.size(), rng);
        }
    }

    TftOutput forward(const Batch& b, nn::Mode mode = {}) const {
        const std::size_t B = b.size(), k = cfg_.k, tau = cfg_.tau, T = k + tau, d = cfg_.d;
        check(b);
        // Static covariates and their four contexts.
        auto stat = static_vsn_(static_embed_(b.statics), {}, mode);
        const Tensor c_sel = contexts_[0](stat.combined, {}, mode);
        const Tensor c_enr = contexts_[1](stat.combined, {}, mode);
        const Tensor c_h = contexts_[2](stat.combined, {}, mode);
        const Tensor c_c = contexts_[3](stat.combined, {}, mode);

        // Per-step variable selection, conditioned on the selection context.
        auto past = past_vsn_(past_embed_(reshape(b.past, {B * k, b.past.dim(2)})), repeat_rows(c_sel, k), mode);
        auto fut = future_vsn_(future_embed_(reshape(b.future, {B * tau, b.future.dim(2)})), repeat_rows(c_sel, tau),
                               mode);
        const Tensor past_sel = reshape(past.combined, {B, k, d});
        const Tensor fut_sel = reshape(fut.combined, {B, tau, d});

        // Sequence to sequence LSTM seeded from the static state contexts.
        auto [enc, enc_state] = encoder_.run(past_sel, {c_h, c_c});
        auto [dec, dec_state] = decoder_.run(fut_sel, enc_state);
        const Tensor temporal = lstm_gate_(concat({enc, dec}, 1), concat({past_sel, fut_sel}, 1), mode);

        const Tensor enriched =
            reshape(enrichment_(reshape(temporal, {B * T, d}), repeat_rows(c_enr, T), mode), {B, T, d});
        auto att = attention_(enriched, nn::AttentionMask::causal(T), mode);
        const Tensor attended = attention_gate_(att.values, enriched, mode);
        const Tensor ff = reshape(positionwise_(reshape(attended, {B * T, d}), {}, mode), {B, T, d});
        const Tensor out = output_gate_(ff, temporal, mode);

        const Tensor future_out = slice(out, 1, k, tau);
        const std::size_t Q = cfg_.quantiles.size();
        std::vector<Tensor> per_target;
        for (const auto& h : heads_) per_target.push_back(reshape(h(future_out), {B, tau, 1, Q}));
        TftOutput o;
        o.quantiles = per_target.size() == 1 ? per_target[0] : concat(per_target, 2);
        o.attention = att.weights;
        o.past_weights = reshape(past.weights, {B, k, cfg_.schema.past_vars.size()});
        o.future_weights = reshape(fut.weights, {B, tau, cfg_.schema.future_vars.size()});
        o.static_weights = stat.weights;
        return o;
    }

    const TftConfig& config() const { return cfg_; }
    nn::ParameterSet& parameters() { return ps_; }
    const nn::ParameterSet& parameters() const { return ps_; }

private:
    void check(const Batch& b) const {
        const std::size_t B = b.statics.rank() == 2 ? b.statics.dim(0) : 0;
        const Shape ps{B, cfg_.k, InputSchema::columns(cfg_.schema.past_vars)};
        const Shape fs{B, cfg_.tau, InputSchema::columns(cfg_.schema.future_vars)};
        if (B == 0 || b.statics.dim(1) != InputSchema::columns(cfg_.schema.static_vars) || b.past.shape() != ps ||
            b.future.shape() != fs) {
            throw ShapeError("batch shapes static " + to_string(b.statics.shape()) + ", past " +
                             to_string(b.past.shape()) + ", future " + to_string(b.future.shape()) +
                             " do not match the model (expected past " + to_string(ps) + ", future " + to_string(fs) +
                             ")");
        }
    }

    TftConfig cfg_;
    nn::ParameterSet ps_;
    InputEmbedding static_embed_, past_embed_, future_embed_;
    nn::VariableSelection static_vsn_, past_vsn_, future_vsn_;
    std::vector<nn::GatedResidualNetwork> contexts_;
    nn::LstmCell encoder_, decoder_;
    nn::GateAddNorm lstm_gate_, attention_gate_, output_gate_;
    nn::GatedResidualNetwork enrichment_, positionwise_;
    nn::InterpretableAttention attention_;
    std::vector<nn::Linear> heads_;
};

// ------------------------------------------------------------- batching

// Stacks windows of a dataset into model inputs plus labels [B, tau, 2].
inline std::pair<Batch, Tensor> make_batch(const data::WindowedDataset& ds, const std::vector<data::SampleRef>& refs) {
    const std::size_t B = refs.size(), k = ds.k(), tau = ds.tau();
    const std::size_t P = ds.past_columns(), F = ds.future_columns();
    std::vector<double> st(B), past(B * k * P), fut(B * tau * F), lab(B * tau * data::kTargets);
    for (std::size_t i = 0; i < B; ++i) {
        const auto& r = refs[i];
        st[i] = double(ds.series_airport(r.airport));
        std::copy_n(ds.past_rows(r), k * P, past.begin() + i * k * P);
        std::copy_n(ds.future_rows(r), tau * F, fut.begin() + i * tau * F);
        std::copy_n(ds.label_rows(r), tau * data::kTargets, lab.begin() + i * tau * data::kTargets);
    }
    Batch b{Tensor({B, 1}, std::move(st)), Tensor({B, k, P}, std::move(past)), Tensor({B, tau, F}, std::move(fut))};
    return {std::move(b), Tensor({B, tau, data::kTargets}, std::move(lab))};
}

// --------------------------------------------------------------- forecasts

// One sample's forecast with its interpretability tensors.
struct ForecastSet {
    std::size_t airport = 0;
    long anchor = 0;
    std::vector<double> predictions;  // [target][tau][q], minutes
    std::vector<double> attention;    // [k+tau][k+tau], averaged over heads
    std::vector<double> past_weights;    // [k][past vars]
    std::vector<double> future_weights;  // [tau][future vars]
    std::vector<double> static_weights;  // [static vars]
    std::size_t k = 0, tau = 0, n_quantiles = 0;

    double at(std::size_t target, std::size_t h, std::size_t q) const {
        return predictions.at((target * tau + h) * n_quantiles + q);
    }
};

// Splits a batched output into per-sample forecasts, de-normalizing the
// quantiles with each sample's airport statistics.
inline std::vector<ForecastSet> to_forecasts(const TftConfig& cfg, const TftOutput& out,
                                             const std::vector<std::size_t>& airports,
                                             const std::vector<long>& anchors, const data::NormStats* stats) {
    const std::size_t B = airports.size(), k = cfg.k, tau = cfg.tau, T = k + tau, Q = cfg.quantiles.size();
    const std::size_t H = out.attention.dim(1), Vp = out.past_weights.dim(2), Vf = out.future_weights.dim(2),
                      Vs = out.static_weights.dim(1), nt = cfg.n_targets;
    std::vector<ForecastSet> res(B);
    const auto qv = out.quantiles.values();
    const auto av = out.attention.values();
    for (std::size_t b = 0; b < B; ++b) {
        auto& f = res[b];
        f.airport = airports[b];
        f.anchor = anchors[b];
        f.k = k;
        f.tau = tau;
        f.n_quantiles = Q;
        f.predictions.resize(nt * tau * Q);
        for (std::size_t t = 0; t < nt; ++t)
            for (std::size_t h = 0; h < tau; ++h)
                for (std::size_t q = 0; q < Q; ++q) {
                    const double z = qv[((b * tau + h) * nt + t) * Q + q];
                    f.predictions[(t * tau + h) * Q + q] = stats ? stats->denormalize_target(z, f.airport, t) : z;
                }
        f.attention.assign(T * T, 0.0);
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t i = 0; i < T * T; ++i) f.attention[i] += av[(b * H + h) * T * T + i] / double(H);
        const auto pw = out.past_weights.values().subspan(b * k * Vp, k * Vp);
        const auto fw = out.future_weights.values().subspan(b * tau * Vf, tau * Vf);
        const auto sw = out.static_weights.values().subspan(b * Vs, Vs);
        f.past_weights.assign(pw.begin(), pw.end());
        f.future_weights.assign(fw.begin(), fw.end());
        f.static_weights.assign(sw.begin(), sw.end());
    }
    return res;
}

// Forecasts for a list of windows, evaluated in batches without a graph.
inline std::vector<ForecastSet> forecast(const Tft& model, const data::WindowedDataset& ds,
                                         const std::vector<data::SampleRef>& refs, const data::NormStats* stats,
                                         std::size_t batch = 256) {
    NoGradGuard ng;
    std::vector<ForecastSet> all;
    all.reserve(refs.size());
    for (std::size_t s = 0; s < refs.size(); s += batch) {
        const std::vector<data::SampleRef> part(refs.begin() + s, refs.begin() + std::min(refs.size(), s + batch));
        auto [b, labels] = make_batch(ds, part);
        std::vector<std::size_t> airports;
        std::vector<long> anchors;
        for (const auto& r : part) {
            airports.push_back(ds.series_airport(r.airport));
            anchors.push_back(r.anchor);
        }
        auto fs = to_forecasts(model.config(), model.forward(b), airports, anchors, stats);
        for (auto& f : fs) all.push_back(std::move(f));
    }
    return all;
}

// Forecast at anchor t from raw (un-normalized) records of one airport.
inline ForecastSet predict(const Tft& model, const data::NormStats& stats, const data::Series& records, long t) {
    const auto& cfg = model.config();
    if (records.empty()) throw data::DataError("no records to forecast from");
    const long first = records.front().t;
    if (t - long(cfg.k) + 1 < first) {
        throw data::DataError("insufficient history: anchor t=" + std::to_string(t) + " needs " +
                              std::to_string(cfg.k) + " steps from t=" + std::to_string(t - long(cfg.k) + 1));
    }
    if (t + long(cfg.tau) > records.back().t) {
        throw data::DataError("missing future known inputs: anchor t=" + std::to_string(t) + " needs records up to t=" +
                              std::to_string(t + long(cfg.tau)));
    }
    const std::size_t lo = std::size_t(t - long(cfg.k) + 1 - first);
    data::Series window(records.begin() + long(lo), records.begin() + long(lo + cfg.k + cfg.tau));
    const data::Series norm = data::normalize_apply(window, stats);
    const data::WindowedDataset ds({norm}, cfg.k, cfg.tau);
    if (ds.size() != 1 || ds.refs()[0].anchor != t) throw data::DataError("records around t are not contiguous");
    return forecast(model, ds, ds.refs(), &stats).at(0);
}

// ------------------------------------------------------------------ bundle

inline nlohmann::ordered_json schema_json(const std::vector<VariableSpec>& vars) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : vars) {
        const char* kind = v.kind == VarKind::Scalar ? "scalar" : v.kind == VarKind::Categorical ? "categorical" : "vector";
        arr.push_back({{"name", v.name}, {"kind", kind}, {"size", v.size}});
    }
    return arr;
}

inline std::vector<VariableSpec> schema_from_json(const nlohmann::ordered_json& arr) {
    std::vector<VariableSpec> out;
    for (const auto& j : arr) {
        const auto kind = j.at("kind").get<std::string>();
        VarKind k = kind == "scalar" ? VarKind::Scalar
                    : kind == "categorical" ? VarKind::Categorical
                    : kind == "vector" ? VarKind::Vector
                                        : throw std::invalid_argument("unknown variable kind '" + kind + "'");
        out.push_back({j.at("name").get<std::string>(), k, j.at("size").get<std::size_t>()});
    }
    return out;
}

inline nlohmann::ordered_json config_json(const TftConfig& c) {
    nlohmann::ordered_json j;
    j["d"] = c.d;
    j["heads"] = c.heads;
    j["dropout"] = c.dropout;
    j["k"] = c.k;
    j["tau_max"] = c.tau;
    j["quantiles"] = c.quantiles;
    j["n_targets"] = c.n_targets;
    j["schema"] = {{"static", schema_json(c.schema.static_vars)},
                   {"past", schema_json(c.schema.past_vars)},
                   {"future", schema_json(c.schema.future_vars)}};
    return j;
}

inline TftConfig config_from_json(const nlohmann::ordered_json& j) {
    TftConfig c;
    c.d = j.at("d").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.k = j.at("k").get<std::size_t>();
    c.tau = j.at("tau_max").get<std::size_t>();
    c.quantiles = j.at("quantiles").get<std::vector<double>>();
    c.n_targets = j.at("n_targets").get<std::size_t>();
    const auto& s = j.at("schema");
    c.schema.static_vars = schema_from_json(s.at("static"));
    c.schema.past_vars = schema_from_json(s.at("past"));
    c.schema.future_vars = schema_from_json(s.at("future"));
    c.validate();
    return c;
}

// Doubles are stored as their bit patterns so stats round-trip exactly.
inline nlohmann::ordered_json stats_json(const data::NormStats& s) {
    auto bits = [](const std::vector<std::vector<double>>& m) {
        std::vector<std::vector<std::uint64_t>> out;
        for (const auto& row : m) {
            out.emplace_back();
            for (double v : row) out.back().push_back(std::bit_cast<std::uint64_t>(v));
        }
        return out;
    };
    return {{"fields", s.fields}, {"mean_bits", bits(s.mean)}, {"scale_bits", bits(s.scale)}, {"warnings", s.warnings}};
}

inline data::NormStats stats_from_json(const nlohmann::ordered_json& j) {
    auto unbits = [](const nlohmann::ordered_json& m) {
        std::vector<std::vector<double>> out;
        for (const auto& row : m) {
            out.emplace_back();
            for (const auto& v : row) out.back().push_back(std::bit_cast<double>(v.get<std::uint64_t>()));
        }
        return out;
    };
    data::NormStats s;
    s.fields = j.at("fields").get<std::vector<std::string>>();
    s.mean = unbits(j.at("mean_bits"));
    s.scale = unbits(j.at("scale_bits"));
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
}

struct Bundle {
    std::unique_ptr<Tft> model;
    data::NormStats stats;
};

// Directory with config.json and weights/ (tensor archive).
inline void save_bundle(const std::filesystem::path& dir, const Tft& model, const data::NormStats& stats) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["format"] = "tftdelay-bundle";
    j["format_version"] = kBundleFormatVersion;
    j["config"] = config_json(model.config());
    j["normalization"] = stats_json(stats);
    std::ofstream out(dir / "config.json");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + (dir / "config.json").string());
    model.parameters().save(dir / "weights");
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream in(dir / "config.json");
    if (!in) throw std::runtime_error("no model bundle at " + dir.string());
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.value("format", "") != "tftdelay-bundle") throw std::runtime_error(dir.string() + " is not a model bundle");
    const int version = j.at("format_version").get<int>();
    if (version > kBundleFormatVersion) {
        throw std::runtime_error("bundle format_version " + std::to_string(version) + " is newer than supported " +
                                 std::to_string(kBundleFormatVersion));
    }
    Bundle b;
    Rng rng(0);
    b.model = std::make_unique<Tft>(config_from_json(j.at("config")), rng);
    b.model->parameters().load(dir / "weights");
    b.stats = stats_from_json(j.at("normalization"));
    return b;
}

}  // namespace tftdelay::tft
