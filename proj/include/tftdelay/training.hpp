#pragma once

// Losses, metrics, the Adam optimizer, and the autoencoder and forecaster
// training loops.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <vector>

#include "tftdelay/nn/parameters.hpp"
#include "tftdelay/ops.hpp"
#include "tftdelay/tft.hpp"
#include "tftdelay/wxcodec.hpp"

namespace tftdelay::train {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::size_t patience = 5;
    double val_fraction = 0.2;
    std::size_t anchor_stride = 1;  // forecaster: train on every n-th anchor
    double max_seconds = 0;         // wall-clock budget, 0 = none; a hit budget makes runs machine-dependent
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs == 0 || batch_size == 0 || !(lr > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) ||
            !(eps > 0) || patience == 0 || anchor_stride == 0 || !(max_seconds >= 0)) {
            throw std::invalid_argument("training config values must be positive (betas in (0,1))");
        }
        if (!(val_fraction > 0 && val_fraction < 1)) throw std::invalid_argument("validation fraction must be in (0,1)");
    }
};

// ------------------------------------------------------------ scalar metrics

inline double pinball(double y, double yhat, double q) {
    if (!(q > 0 && q < 1)) throw std::invalid_argument("quantile must lie in (0,1)");
    return y >= yhat ? q * (y - yhat) : (1.0 - q) * (yhat - y);
}

inline void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    if (a == 0) throw std::invalid_argument("metrics need at least one value");
}

inline double mse(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_lengths(y.size(), yhat.size());
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return s / double(y.size());
}

inline double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_lengths(y.size(), yhat.size());
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / double(y.size());
}

inline double mean_pinball(const std::vector<double>& y, const std::vector<double>& yhat, double q) {
    check_lengths(y.size(), yhat.size());
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += pinball(y[i], yhat[i], q);
    return s / double(y.size());
}

// ------------------------------------------------------------ tensor losses

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    const Tensor d = sub(pred, target);
    return mean_all(mul(d, d));
}

// pred [..., Q], target [...]; mean over every element and quantile.
//   pinball = q·relu(y − ŷ) + (1 − q)·relu(ŷ − y)
inline Tensor pinball_loss(const Tensor& pred, const Tensor& target, const std::vector<double>& quantiles) {
    const std::size_t Q = quantiles.size();
    if (pred.dim(-1) != Q || pred.numel() != target.numel() * Q) {
        throw ShapeError("pinball loss: predictions " + to_string(pred.shape()) + " vs targets " +
                         to_string(target.shape()) + " with " + std::to_string(Q) + " quantiles");
    }
    Shape ts = target.shape();
    ts.push_back(1);
    const Tensor y = reshape(target, ts);
    const Tensor diff = sub(y, pred);  // y − ŷ, broadcast over quantiles
    Tensor q = Tensor::from_vector(quantiles);
    std::vector<double> one_minus(Q);
    for (std::size_t i = 0; i < Q; ++i) one_minus[i] = 1.0 - quantiles[i];
    const Tensor loss = add(mul(relu(diff), q), mul(relu(scale(diff, -1.0)), Tensor::from_vector(one_minus)));
    return mean_all(loss);
}

// ------------------------------------------------------------------- Adam

struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;
};

inline double grad_norm(const nn::ParameterSet& ps) {
    double s = 0.0;
    for (const auto& [n, t] : ps.entries())
        for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
}

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
inline double clip_grad_norm(nn::ParameterSet& ps, double max_norm) {
    const double norm = grad_norm(ps);
    if (max_norm > 0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (const auto& [n, t] : ps.entries()) {
            Tensor h = t;
            for (double& g : h.mutable_grad()) g *= f;
        }
    }
    return norm;
}

// One bias-corrected Adam update from the gradients currently stored on the
// parameters. Parameters without a gradient count as zero gradient.
inline void adam_step(nn::ParameterSet& ps, AdamState& st, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    const auto& e = ps.entries();
    if (st.m.empty()) {
        for (const auto& [n, t] : e) {
            st.m.emplace_back(t.numel(), 0.0);
            st.v.emplace_back(t.numel(), 0.0);
        }
    }
    if (st.m.size() != e.size()) throw ShapeError("optimizer state does not match parameter set");
    ++st.step;
    const double c1 = 1.0 - std::pow(beta1, double(st.step));
    const double c2 = 1.0 - std::pow(beta2, double(st.step));
    for (std::size_t p = 0; p < e.size(); ++p) {
        Tensor t = e[p].second;
        if (st.m[p].size() != t.numel()) throw ShapeError("optimizer state shape mismatch for '" + e[p].first + "'");
        if (!t.has_grad()) continue;
        const auto g = t.grad();
        auto w = t.mutable_values();
        auto& m = st.m[p];
        auto& v = st.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

// ---------------------------------------------------------------- history

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    bool stopped_early = false;
};

inline void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
    for (const auto& r : h) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Generic epoch loop with early stopping. batch_loss(indices, mode) builds the
// loss for a batch of training items; val_loss() evaluates the held-out set.
// The parameters of the best validation epoch are restored on return.
inline TrainResult fit(nn::ParameterSet& ps, std::size_t n_train, const TrainConfig& cfg,
                       const std::function<Tensor(const std::vector<std::size_t>&, nn::Mode)>& batch_loss,
                       const std::function<double()>& val_loss,
                       const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (n_train == 0) throw std::invalid_argument("no training items");
    Rng rng = make_rng(cfg.seed, "train-shuffle");
    Rng dropout_rng = make_rng(cfg.seed, "train-dropout");
    AdamState adam;
    TrainResult res;
    std::optional<NamedTensors> best;
    std::size_t since_best = 0;
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t seen = 0;
        for (std::size_t s = 0; s < n_train; s += cfg.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + s, order.begin() + std::min(n_train, s + cfg.batch_size));
            ps.zero_grad();
            Tensor loss = batch_loss(idx, nn::Mode::train(dropout_rng));
            const double lv = loss.item();
            if (!std::isfinite(lv)) throw NonFiniteLoss("non-finite training loss at epoch " + std::to_string(epoch));
            backward(loss);
            clip_grad_norm(ps, cfg.clip_norm);
            adam_step(ps, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            total += lv * double(idx.size());
            seen += idx.size();
        }
        ps.zero_grad();
        EpochRecord rec{epoch, total / double(seen), val_loss()};
        if (!std::isfinite(rec.val_loss)) throw NonFiniteLoss("non-finite validation loss at epoch " + std::to_string(epoch));
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (!best || rec.val_loss < res.best_val) {
            best = ps.snapshot();
            res.best_val = rec.val_loss;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            res.stopped_early = true;
            break;
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (cfg.max_seconds > 0 && elapsed * double(epoch + 1) / double(epoch) > cfg.max_seconds) {
            res.stopped_early = true;  // the next epoch would overrun the budget
            break;
        }
    }
    ps.load(*best);
    return res;
}

// ------------------------------------------------------------- autoencoder

// Splits grids in time order: the last val_fraction become validation.
inline TrainResult train_autoencoder(wx::Codec& codec, const std::vector<wx::WeatherGrid>& grids,
                                     const TrainConfig& cfg,
                                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (grids.size() < 2) throw std::invalid_argument("autoencoder training needs at least 2 grids");
    const std::size_t n_val = std::clamp<std::size_t>(std::size_t(std::lround(cfg.val_fraction * double(grids.size()))),
                                                      1, grids.size() - 1);
    const std::size_t n_train = grids.size() - n_val;
    // Normalized training tensors are built once per grid.
    std::vector<Tensor> inputs;
    inputs.reserve(grids.size());
    for (const auto& g : grids) inputs.push_back(wx::normalize_grid(g));
    const std::size_t plane = inputs[0].numel();
    const Shape gs = inputs[0].shape();

    auto stack = [&](const std::vector<std::size_t>& idx, std::size_t offset) {
        std::vector<double> v(idx.size() * plane);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto src = inputs[offset + idx[b]].values();
            std::copy(src.begin(), src.end(), v.begin() + b * plane);
        }
        return Tensor({idx.size(), gs[0], gs[1], gs[2]}, std::move(v));
    };
    auto batch_loss = [&](const std::vector<std::size_t>& idx, nn::Mode) {
        const Tensor x = stack(idx, 0);
        return mse_loss(codec.reconstruct(x), x);
    };
    auto val_loss = [&]() {
        NoGradGuard ng;
        double total = 0.0;
        for (std::size_t s = 0; s < n_val; s += cfg.batch_size) {
            std::vector<std::size_t> idx;
            for (std::size_t i = s; i < std::min(n_val, s + cfg.batch_size); ++i) idx.push_back(i);
            const Tensor x = stack(idx, n_train);
            total += mse_loss(codec.reconstruct(x), x).item() * double(idx.size());
        }
        return total / double(n_val);
    };
    return fit(codec.parameters(), n_train, cfg, batch_loss, val_loss, on_epoch);
}

// Reconstructs grids in chunks without building a graph.
inline Tensor reconstruct_all(const wx::Codec& codec, const std::vector<wx::WeatherGrid>& grids,
                              std::size_t chunk = 32) {
    NoGradGuard ng;
    std::vector<double> out;
    for (std::size_t s = 0; s < grids.size(); s += chunk) {
        const std::size_t n = std::min(chunk, grids.size() - s);
        const Tensor r = codec.reconstruct(wx::normalize_batch(grids, s, n));
        out.insert(out.end(), r.values().begin(), r.values().end());
    }
    const auto& g = grids.at(0);
    return Tensor({grids.size(), g.height, g.width, 2}, std::move(out));
}


// -------------------------------------------------------------- forecaster

struct WindowSplit {
    std::vector<data::SampleRef> train, val;
};

// Time-ordered hold-out: windows anchored in the last val_fraction of the
// anchor range validate; training windows must finish their labels before
// that range starts.
inline WindowSplit validation_split(const std::vector<data::SampleRef>& refs, std::size_t tau, double val_fraction,
                                    std::size_t stride = 1) {
    if (refs.empty()) throw std::invalid_argument("no windows to split");
    long lo = refs.front().anchor, hi = lo;
    for (const auto& r : refs) lo = std::min(lo, r.anchor), hi = std::max(hi, r.anchor);
    const long cut = lo + long(std::ceil((1.0 - val_fraction) * double(hi - lo)));
    WindowSplit out;
    for (const auto& r : refs) {
        if (r.anchor >= cut) {
            out.val.push_back(r);
        } else if (r.anchor + long(tau) < cut && r.anchor % long(stride) == 0) {
            out.train.push_back(r);
        }
    }
    if (out.train.empty() || out.val.empty()) throw std::invalid_argument("too few windows for a validation split");
    return out;
}

inline double mean_window_pinball(const tft::Tft& model, const data::WindowedDataset& ds,
                                  const std::vector<data::SampleRef>& refs, std::size_t batch = 256) {
    NoGradGuard ng;
    double total = 0.0;
    for (std::size_t s = 0; s < refs.size(); s += batch) {
        const std::vector<data::SampleRef> part(refs.begin() + s, refs.begin() + std::min(refs.size(), s + batch));
        auto [b, labels] = tft::make_batch(ds, part);
        total += pinball_loss(model.forward(b).quantiles, labels, model.config().quantiles).item() * double(part.size());
    }
    return total / double(refs.size());
}

// Quantile regression in normalized target units. ds must hold normalized
// series; refs are the training windows (validation is carved from them).
inline TrainResult train_tft(tft::Tft& model, const data::WindowedDataset& ds, const std::vector<data::SampleRef>& refs,
                             const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (ds.k() != model.config().k || ds.tau() != model.config().tau) {
        throw std::invalid_argument("dataset windows (k=" + std::to_string(ds.k()) + ", tau_max=" +
                                    std::to_string(ds.tau()) + ") do not match the model");
    }
    const auto split = validation_split(refs, ds.tau(), cfg.val_fraction, cfg.anchor_stride);
    const auto& q = model.config().quantiles;
    auto batch_loss = [&](const std::vector<std::size_t>& idx, nn::Mode mode) {
        std::vector<data::SampleRef> part;
        part.reserve(idx.size());
        for (auto i : idx) part.push_back(split.train[i]);
        auto [b, labels] = tft::make_batch(ds, part);
        return pinball_loss(model.forward(b, mode).quantiles, labels, q);
    };
    auto val_loss = [&]() { return mean_window_pinball(model, ds, split.val); };
    return fit(model.parameters(), split.train.size(), cfg, batch_loss, val_loss, on_epoch);
}

// ----------------------------------------------------------------- metrics

struct TargetMetrics {
    std::size_t n = 0;
    double mse = 0, mae = 0;                          // median forecast, minutes
    double persistence_mse = 0, persistence_mae = 0;  // anchor value held flat
    std::vector<double> pinball;                      // per quantile
    double coverage = 0;       // share of truths inside the outer quantiles
    double crossing_rate = 0;  // share of forecasts with out-of-order quantiles

    double skill() const { return persistence_mse > 0 ? 1.0 - mse / persistence_mse : 0.0; }
};

struct MetricsReport {
    std::vector<double> quantiles;
    std::size_t k = 0, tau = 0;
    std::array<std::array<TargetMetrics, data::kTargets>, data::kAirports> per{};
    std::array<bool, data::kAirports> present{};
    std::array<TargetMetrics, data::kTargets> by_target{};  // pooled over airports
    TargetMetrics overall;
};

namespace detail {

struct MetricAcc {
    std::size_t n = 0, covered = 0, crossed = 0;
    double se = 0, ae = 0, pse = 0, pae = 0;
    std::vector<double> pin;

    void add(double y, const double* qs, const std::vector<double>& levels, std::size_t mid, double persist) {
        if (pin.empty()) pin.assign(levels.size(), 0.0);
        ++n;
        se += (y - qs[mid]) * (y - qs[mid]);
        ae += std::abs(y - qs[mid]);
        pse += (y - persist) * (y - persist);
        pae += std::abs(y - persist);
        for (std::size_t i = 0; i < levels.size(); ++i) pin[i] += pinball(y, qs[i], levels[i]);
        covered += y >= qs[0] && y <= qs[levels.size() - 1];
        bool bad = false;
        for (std::size_t i = 1; i < levels.size(); ++i) bad |= qs[i] < qs[i - 1];
        crossed += bad;
    }

    TargetMetrics finish() const {
        TargetMetrics m;
        m.n = n;
        if (!n) return m;
        const double d = double(n);
        m.mse = se / d;
        m.mae = ae / d;
        m.persistence_mse = pse / d;
        m.persistence_mae = pae / d;
        for (double p : pin) m.pinball.push_back(p / d);
        m.coverage = double(covered) / d;
        m.crossing_rate = double(crossed) / d;
        return m;
    }
};

}  // namespace detail

// Scores forecasts (minutes) against the dataset's labels. ds holds
// normalized series, so labels and anchors are mapped back with stats.
inline MetricsReport evaluate(const std::vector<tft::ForecastSet>& fs, const data::WindowedDataset& ds,
                              const std::vector<data::SampleRef>& refs, const data::NormStats& stats,
                              const std::vector<double>& quantiles) {
    if (fs.size() != refs.size()) throw std::invalid_argument("forecasts and windows differ in count");
    if (fs.empty()) throw std::invalid_argument("nothing to evaluate");
    const std::size_t Q = quantiles.size(), tau = ds.tau();
    std::size_t mid = Q;
    for (std::size_t i = 0; i < Q; ++i)
        if (quantiles[i] == 0.5) mid = i;
    if (mid == Q) throw std::invalid_argument("evaluation needs the 0.5 quantile");
    detail::MetricAcc all;
    std::array<detail::MetricAcc, data::kTargets> target_acc;
    std::array<std::array<detail::MetricAcc, data::kTargets>, data::kAirports> acc;
    MetricsReport rep;
    std::vector<double> qs(Q);
    for (std::size_t s = 0; s < fs.size(); ++s) {
        const auto& f = fs[s];
        const auto& r = refs[s];
        const std::size_t a = ds.series_airport(r.airport);
        rep.present[a] = true;
        const double* lab = ds.label_rows(r);
        const double* anc = ds.anchor_targets(r);
        for (std::size_t t = 0; t < data::kTargets; ++t) {
            const double persist = stats.denormalize_target(anc[t], a, t);
            for (std::size_t h = 0; h < tau; ++h) {
                const double y = stats.denormalize_target(lab[h * data::kTargets + t], a, t);
                for (std::size_t q = 0; q < Q; ++q) qs[q] = f.at(t, h, q);
                acc[a][t].add(y, qs.data(), quantiles, mid, persist);
                target_acc[t].add(y, qs.data(), quantiles, mid, persist);
                all.add(y, qs.data(), quantiles, mid, persist);
            }
        }
    }
    rep.quantiles = quantiles;
    rep.k = ds.k();
    rep.tau = tau;
    for (std::size_t a = 0; a < data::kAirports; ++a)
        for (std::size_t t = 0; t < data::kTargets; ++t) rep.per[a][t] = acc[a][t].finish();
    for (std::size_t t = 0; t < data::kTargets; ++t) rep.by_target[t] = target_acc[t].finish();
    rep.overall = all.finish();
    return rep;
}

inline nlohmann::ordered_json metrics_json(const TargetMetrics& m) {
    nlohmann::ordered_json j;
    j["n"] = m.n;
    j["mse"] = m.mse;
    j["mae"] = m.mae;
    j["persistence_mse"] = m.persistence_mse;
    j["persistence_mae"] = m.persistence_mae;
    j["skill_vs_persistence"] = m.skill();
    j["pinball"] = m.pinball;
    j["coverage"] = m.coverage;
    j["crossing_rate"] = m.crossing_rate;
    return j;
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["quantiles"] = r.quantiles;
    j["k"] = r.k;
    j["tau_max"] = r.tau;
    j["overall"] = metrics_json(r.overall);
    for (std::size_t t = 0; t < data::kTargets; ++t) j["targets"][data::kTargetNames[t]] = metrics_json(r.by_target[t]);
    auto& per = j["airports"];
    per = nlohmann::ordered_json::object();
    for (std::size_t a = 0; a < data::kAirports; ++a) {
        if (!r.present[a]) continue;
        for (std::size_t t = 0; t < data::kTargets; ++t)
            per[data::kAirportNames[a]][data::kTargetNames[t]] = metrics_json(r.per[a][t]);
    }
    return j;
}

// ---------------------------------------------------------- history search

struct KSearch {
    std::size_t best_k = 0;
    std::vector<std::pair<std::size_t, double>> val_loss;  // (k, best validation pinball)
};

// Trains one model per history length and keeps the k with the lowest
// validation loss (ties go to the shorter history). Every k sees the same
// anchors, those with enough history for the longest k.
inline KSearch select_k(const std::vector<data::Series>& normalized_train, const tft::TftConfig& base,
                        const std::vector<std::size_t>& ks, const TrainConfig& cfg) {
    if (ks.empty()) throw std::invalid_argument("no history lengths to search");
    KSearch out;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
    for (std::size_t k : ks) {
        auto mc = base;
        mc.k = k;
        Rng rng = make_rng(cfg.seed, "tft-init");
        tft::Tft model(mc, rng);
        const data::WindowedDataset ds(normalized_train, k, mc.tau);
        std::vector<data::SampleRef> refs;
        for (const auto& r : ds.refs())
            if (r.offset + 1 >= kmax) refs.push_back(r);
        const auto res = train_tft(model, ds, refs, cfg);
        out.val_loss.emplace_back(k, res.best_val);
        if (res.best_val < best) best = res.best_val, out.best_k = k;
    }
    return out;
}

}  // namespace tftdelay::train
