#pragma once

// Command-line pipeline: gen → train-wx → encode-wx → train-tft → predict /
// interpret / eval. Every command writes manifest.json into its --out
// directory. Exit codes: 0 ok, 2 usage or config, 3 data, 4 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tftdelay/interpret.hpp"
#include "tftdelay/scenario.hpp"
#include "tftdelay/training.hpp"

namespace tftdelay::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCodecFormatVersion = 1;

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------- helpers

inline std::string fnv_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h;
    return o.str();
}

inline ordered_json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open config " + p.string());
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + p.string() + " is not valid JSON: " + e.what());
    }
}

inline void write_json(const fs::path& p, const ordered_json& j) {
    std::ofstream out(p);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + p.string());
}

inline void require_dir(const fs::path& p, const std::string& what) {
    if (!fs::is_directory(p)) throw data::DataError(what + " directory " + p.string() + " does not exist");
}

struct Manifest {
    std::string command;
    ordered_json config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs, outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir) const {
        ordered_json j;
        j["command"] = command;
        j["config_hash"] = fnv_hex(config.dump());
        j["config"] = config;
        j["seed"] = seed;
        std::vector<std::string> in;
        for (const auto& i : inputs)
            if (!i.empty()) in.push_back(i);
        j["inputs"] = in;
        j["outputs"] = outputs;
        j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        j["versions"] = {{"tftdelay", kVersion},
                         {"bundle_format", tft::kBundleFormatVersion},
                         {"codec_format", kCodecFormatVersion},
                         {"grid_format", "WXG v1"}};
        write_json(dir / "manifest.json", j);
    }
};

// Grid files under dir sorted by timestamp.
inline std::vector<fs::path> list_grids(const fs::path& dir) {
    require_dir(dir, "grid");
    std::vector<std::pair<long, fs::path>> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        const auto stem = e.path().stem().string();
        if ((ext != ".wxb" && ext != ".wxg") || stem.size() < 2 || stem[0] != 't') continue;
        found.emplace_back(std::stol(stem.substr(1)), e.path());
    }
    if (found.empty()) throw data::DataError("no weather grids in " + dir.string());
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& [t, p] : found) out.push_back(p);
    return out;
}

inline std::vector<wx::WeatherGrid> read_grids(const std::vector<fs::path>& paths) {
    std::vector<wx::WeatherGrid> g;
    g.reserve(paths.size());
    for (const auto& p : paths) g.push_back(wx::read_grid(p));
    return g;
}

// --------------------------------------------------------------- configs

inline train::TrainConfig train_config_from_json(const ordered_json& j, train::TrainConfig c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.patience = j.value("patience", c.patience);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.anchor_stride = j.value("anchor_stride", c.anchor_stride);
    c.max_seconds = j.value("max_seconds", c.max_seconds);
    return c;
}

inline ordered_json train_config_json(const train::TrainConfig& c) {
    return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.lr},
            {"beta1", c.beta1},           {"beta2", c.beta2},           {"eps", c.eps},
            {"clip_norm", c.clip_norm},   {"patience", c.patience},     {"val_fraction", c.val_fraction},
            {"anchor_stride", c.anchor_stride}, {"max_seconds", c.max_seconds}, {"seed", c.seed}};
}

// ------------------------------------------------------------------ codec

inline void save_codec(const fs::path& dir, const wx::Codec& c) {
    fs::create_directories(dir);
    ordered_json j;
    j["format"] = "tftdelay-codec";
    j["format_version"] = kCodecFormatVersion;
    j["height"] = c.geometry().heights[0];
    j["width"] = c.geometry().widths[0];
    j["channels"] = c.config().channels;
    write_json(dir / "codec.json", j);
    c.parameters().save(dir / "weights");
}

inline std::unique_ptr<wx::Codec> load_codec(const fs::path& dir) {
    std::ifstream in(dir / "codec.json");
    if (!in) throw data::DataError("no codec at " + dir.string());
    const auto j = ordered_json::parse(in);
    if (j.value("format", "") != "tftdelay-codec") throw data::DataError(dir.string() + " is not a codec directory");
    if (j.at("format_version").get<int>() > kCodecFormatVersion) {
        throw data::DataError("codec format_version " + std::to_string(j.at("format_version").get<int>()) +
                              " is newer than supported " + std::to_string(kCodecFormatVersion));
    }
    wx::CodecConfig cc;
    const auto ch = j.at("channels").get<std::vector<std::size_t>>();
    if (ch.size() != cc.channels.size()) throw data::DataError("codec channel list has the wrong length");
    std::copy(ch.begin(), ch.end(), cc.channels.begin());
    Rng rng(0);
    auto c = std::make_unique<wx::Codec>(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(), rng, cc);
    c->parameters().load(dir / "weights");
    return c;
}

inline ordered_json geometry_json(const wx::CodecGeometry& g) {
    return {{"heights", g.heights},
            {"widths", g.widths},
            {"pad_h", g.pad_h},
            {"pad_w", g.pad_w},
            {"latent", {g.latent_h(), g.latent_w(), wx::kFeatureDim}},
            {"compression_ratio", g.compression_ratio()}};
}

// ------------------------------------------------------------ forecasting

struct Prepared {
    std::vector<data::Series> raw, norm;
    data::NormStats stats;
    long t_split = 0;
};

// Normalization statistics come from records before the split only.
inline Prepared prepare(std::vector<data::Series> raw, double train_fraction) {
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("--split must lie in (0,1)");
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (const auto& s : raw) {
        if (s.empty()) throw data::DataError("dataset has an airport without records");
        lo = std::min(lo, s.front().t);
        hi = std::max(hi, s.back().t);
    }
    Prepared p;
    p.t_split = lo + long(std::lround(train_fraction * double(hi - lo + 1)));
    auto [train, test] = data::temporal_split(raw, p.t_split);
    p.stats = data::normalize_fit(train);
    p.norm = data::normalize_apply(raw, p.stats);
    p.raw = std::move(raw);
    return p;
}

inline void check_schema(const tft::TftConfig& c) {
    const auto expected = data::airport_schema();
    auto names = [](const std::vector<data::VariableSpec>& v) {
        std::vector<std::string> n;
        for (const auto& x : v) n.push_back(x.name + ":" + std::to_string(x.size));
        return n;
    };
    if (names(c.schema.past_vars) != names(expected.past_vars) ||
        names(c.schema.future_vars) != names(expected.future_vars) ||
        names(c.schema.static_vars) != names(expected.static_vars)) {
        throw data::DataError("bundle schema (" + std::to_string(c.schema.past_vars.size()) + " past, " +
                              std::to_string(c.schema.future_vars.size()) +
                              " future variables) does not match the dataset schema of this build (format_version " +
                              std::to_string(tft::kBundleFormatVersion) + ")");
    }
}

inline std::string quantile_column(double q) { return "q" + std::to_string(int(std::lround(q * 100))); }

inline void write_forecast_csv(const fs::path& path, const std::vector<tft::ForecastSet>& fs,
                               const std::vector<double>& quantiles) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "airport,t,target,tau";
    for (double q : quantiles) out << ',' << quantile_column(q);
    out << '\n';
    for (const auto& f : fs)
        for (std::size_t t = 0; t < data::kTargets; ++t)
            for (std::size_t h = 0; h < f.tau; ++h) {
                out << data::kAirportNames[f.airport] << ',' << f.anchor << ',' << data::kTargetNames[t] << ','
                    << h + 1;
                for (std::size_t q = 0; q < f.n_quantiles; ++q) out << ',' << data::format_double(f.at(t, h, q));
                out << '\n';
            }
}

// Actual against predicted quantiles at one horizon, one line chart.
inline std::string forecast_svg(const std::string& title, const std::vector<double>& actual,
                                const std::vector<std::array<double, 3>>& band) {
    const double W = 720, H = 240, L = 40, B = 210;
    double top = 1;
    for (double v : actual) top = std::max(top, v);
    for (const auto& b : band) top = std::max(top, b[2]);
    const std::size_t n = actual.size();
    auto X = [&](std::size_t i) { return L + (W - L - 10) * double(i) / double(std::max<std::size_t>(1, n - 1)); };
    auto Y = [&](double v) { return B - (B - 20) * v / top; };
    std::ostringstream o;
    o << std::setprecision(5);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n<text x=\"4\" y=\"14\" font-weight=\"bold\">"
      << interp::detail::esc(title) << "</text>\n";
    o << "<polygon fill=\"#c6d7ee\" points=\"";
    for (std::size_t i = 0; i < n; ++i) o << X(i) << ',' << Y(band[i][2]) << ' ';
    for (std::size_t i = n; i-- > 0;) o << X(i) << ',' << Y(band[i][0]) << ' ';
    o << "\"/>\n";
    auto line = [&](const std::string& colour, auto value) {
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < n; ++i) o << X(i) << ',' << Y(value(i)) << ' ';
        o << "\"/>\n";
    };
    line("#222222", [&](std::size_t i) { return actual[i]; });
    line("#2a62b0", [&](std::size_t i) { return band[i][1]; });
    o << "<text x=\"" << L << "\" y=\"" << B + 20 << "\">actual (black), median and 25-75 band (blue), max "
      << top << " min</text>\n</svg>\n";
    return o.str();
}

// ------------------------------------------------------------- commands

struct Globals {
    std::uint64_t seed = 20190101;
    bool seed_set = false;
    std::string config, out;
    bool full_scale = false;
};

inline fs::path out_dir(const Globals& g) {
    if (g.out.empty()) throw ConfigError("--out is required");
    fs::create_directories(g.out);
    return g.out;
}

struct GenOptions {
    long T = 0;
    bool weather_dominated = false, ascii_grids = false, no_grids = false;
    std::string codec;  // empty: fixed pooling features
};

// Weather features for a scenario from a trained codec.
inline std::vector<wx::FeatureRow> codec_features(const scenario::ScenarioConfig& cfg, const wx::Codec& codec) {
    if (codec.geometry().heights[0] != cfg.height || codec.geometry().widths[0] != cfg.width) {
        throw data::DataError("codec expects " + std::to_string(codec.geometry().heights[0]) + "x" +
                              std::to_string(codec.geometry().widths[0]) + " grids, scenario has " +
                              std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
    return codec.features(scenario::gen_weather(cfg).grids);
}

inline int cmd_gen(const Globals& g, const GenOptions& o) {
    scenario::ScenarioConfig cfg = o.weather_dominated ? scenario::ScenarioConfig::weather_dominated()
                                                       : scenario::ScenarioConfig{};
    if (!g.config.empty()) {
        try {
            cfg = read_json(g.config).get<scenario::ScenarioConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("scenario config " + g.config + " does not match the schema: " + e.what());
        }
    }
    if (g.seed_set) cfg.seed = g.seed;
    if (o.T > 0) cfg.T = o.T;
    if (g.full_scale) cfg.height = 960, cfg.width = 1072;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
    if (!o.no_grids && double(cfg.T) * double(cfg.height * cfg.width) * 2 > 4e9) {
        throw ConfigError("grid output would exceed 4 GB; lower T or pass --no-grids");
    }
    const auto dir = out_dir(g);
    Manifest m{"gen", nlohmann::json(cfg), cfg.seed, {g.config, o.codec}, {"dataset.csv", "truth.json", "scenario.json"}};
    m.config["features"] = o.codec.empty() ? "pooling" : "codec";
    if (!o.no_grids) m.outputs.push_back("wx/");
    std::vector<wx::FeatureRow> feats;
    if (!o.codec.empty()) feats = codec_features(cfg, *load_codec(o.codec));
    scenario::emit_dataset(cfg, dir, {!o.no_grids, !o.ascii_grids}, o.codec.empty() ? nullptr : &feats);
    m.write(dir);
    std::cout << "wrote " << 4 * cfg.T << " records for T=" << cfg.T << " to " << dir.string() << '\n';
    return kOk;
}

struct WxOptions {
    std::string data, codec;
    std::size_t max_grids = 600;
    train::TrainConfig train = [] {
        train::TrainConfig c;
        c.epochs = 40;
        c.batch_size = 8;
        c.lr = 3e-3;
        c.patience = 8;
        return c;
    }();
};

// Full-scale geometry report: builds the 960×1072 codec and encodes an
// empty grid without training.
inline int full_scale_check(const fs::path& dir, Manifest m) {
    Rng rng(0);
    wx::Codec codec(960, 1072, rng);
    const auto lat = codec.encode(wx::WeatherGrid::zeros(0, 960, 1072));
    ordered_json j;
    j["geometry"] = geometry_json(codec.geometry());
    std::vector<double> f(lat.feature.values().begin(), lat.feature.values().end());
    j["zero_grid_feature"] = f;
    write_json(dir / "geometry.json", j);
    m.outputs = {"geometry.json"};
    m.write(dir);
    std::cout << "full-scale latent " << codec.geometry().latent_h() << "x" << codec.geometry().latent_w() << "x16, ratio "
              << codec.geometry().compression_ratio() << '\n';
    return kOk;
}

inline int cmd_train_wx(const Globals& g, WxOptions o) {
    const auto dir = out_dir(g);
    if (!g.config.empty()) o.train = train_config_from_json(read_json(g.config), o.train);
    o.train.seed = g.seed;
    Manifest m{"train-wx", train_config_json(o.train), g.seed, {o.data}, {}};
    m.config["max_grids"] = o.max_grids;
    if (g.full_scale) return full_scale_check(dir, m);
    auto paths = list_grids(fs::path(o.data) / "wx");
    // Evenly spaced subset keeps the time order.
    if (o.max_grids && paths.size() > o.max_grids) {
        std::vector<fs::path> keep;
        for (std::size_t i = 0; i < o.max_grids; ++i) keep.push_back(paths[i * paths.size() / o.max_grids]);
        paths = std::move(keep);
    }
    const auto grids = read_grids(paths);
    Rng rng = make_rng(g.seed, "wx-init");
    wx::Codec codec(grids[0].height, grids[0].width, rng);
    const auto res = train::train_autoencoder(codec, grids, o.train, [](const train::EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << std::endl;
    });
    save_codec(dir / "codec", codec);
    train::write_history_csv(dir / "history.csv", res.history);
    const std::size_t n_val =
        std::clamp<std::size_t>(std::size_t(std::lround(o.train.val_fraction * double(grids.size()))), 1, grids.size() - 1);
    const std::vector<wx::WeatherGrid> held(grids.end() - long(n_val), grids.end());
    const auto err = wx::reconstruction_error(held, train::reconstruct_all(codec, held));
    ordered_json rep{{"held_out_grids", n_val},      {"mae_vil", err.mae_vil},
                     {"mae_et", err.mae_et},         {"max_abs_levels", err.max_abs_levels},
                     {"best_epoch", res.best_epoch}, {"best_val_mse", res.best_val},
                     {"geometry", geometry_json(codec.geometry())}};
    write_json(dir / "reconstruction.json", rep);
    m.outputs = {"codec/", "history.csv", "reconstruction.json"};
    m.write(dir);
    std::cout << "held-out max error " << err.max_abs_levels << " levels over " << n_val << " grids\n";
    return kOk;
}

inline int cmd_encode_wx(const Globals& g, const WxOptions& o) {
    const auto dir = out_dir(g);
    Manifest m{"encode-wx", {{"codec", o.codec}}, g.seed, {o.data, o.codec}, {}};
    if (g.full_scale) return full_scale_check(dir, m);
    const auto codec = load_codec(o.codec);
    const auto paths = list_grids(fs::path(o.data) / "wx");
    std::vector<long> ts;
    std::vector<wx::FeatureRow> rows;
    for (std::size_t s = 0; s < paths.size(); s += 256) {
        const std::vector<fs::path> part(paths.begin() + long(s), paths.begin() + long(std::min(paths.size(), s + 256)));
        const auto grids = read_grids(part);
        for (const auto& gr : grids) ts.push_back(gr.timestamp);
        for (const auto& f : codec->features(grids)) rows.push_back(f);
    }
    wx::write_features_csv(dir / "features.csv", ts, rows);
    m.outputs = {"features.csv"};
    const auto ds_path = fs::path(o.data) / "dataset.csv";
    if (fs::exists(ds_path)) {
        auto series = data::read_dataset_csv(ds_path);
        std::map<long, std::size_t> at;
        for (std::size_t i = 0; i < ts.size(); ++i) at[ts[i]] = i;
        for (auto& s : series)
            for (auto& r : s) {
                const auto it = at.find(r.t);
                if (it == at.end()) throw data::DataError("no weather grid for t=" + std::to_string(r.t));
                r.wx = rows[it->second];
            }
        data::write_dataset_csv(dir / "dataset.csv", series);
        m.outputs.push_back("dataset.csv");
    }
    m.write(dir);
    std::cout << "encoded " << rows.size() << " grids\n";
    return kOk;
}

struct TftOptions {
    std::string data, bundle;
    std::string k = "4";
    std::size_t tau = 16, d = 16, heads = 2;
    double dropout = 0.1, split = 0.8;
    std::vector<std::size_t> k_grid{2, 4, 8, 16};
    long anchor = -1;
    std::string airport;
    train::TrainConfig train = [] {
        train::TrainConfig c;
        c.anchor_stride = 4;
        return c;
    }();
};

inline Prepared load_prepared(const TftOptions& o) {
    return prepare(data::read_dataset_csv(fs::path(o.data) / "dataset.csv"), o.split);
}

inline std::vector<data::SampleRef> test_refs(const data::WindowedDataset& ds, long t_split) {
    return ds.temporal_split(t_split).second;
}

inline int cmd_train_tft(const Globals& g, TftOptions o) {
    const auto dir = out_dir(g);
    if (!g.config.empty()) {
        const auto j = read_json(g.config);
        o.train = train_config_from_json(j, o.train);
        o.d = j.value("d", o.d);
        o.heads = j.value("heads", o.heads);
        o.dropout = j.value("dropout", o.dropout);
        o.tau = j.value("tau_max", o.tau);
        if (j.contains("k")) o.k = j["k"].is_string() ? j["k"].get<std::string>() : std::to_string(j["k"].get<int>());
    }
    o.train.seed = g.seed;
    const auto p = load_prepared(o);
    tft::TftConfig mc;
    mc.d = o.d;
    mc.heads = o.heads;
    mc.dropout = o.dropout;
    mc.tau = o.tau;
    ordered_json cfgj = train_config_json(o.train);
    cfgj["split"] = o.split;
    cfgj["k"] = o.k;
    if (o.k == "auto") {
        const auto [train_part, test_part] = data::temporal_split(p.norm, p.t_split);
        const auto search = train::select_k(train_part, mc, o.k_grid, o.train);
        mc.k = search.best_k;
        ordered_json sj = ordered_json::array();
        for (auto [k, v] : search.val_loss) sj.push_back({{"k", k}, {"val_pinball", v}});
        write_json(dir / "k_search.json", {{"best_k", search.best_k}, {"candidates", sj}});
        std::cout << "selected k=" << mc.k << '\n';
    } else {
        try {
            mc.k = std::stoul(o.k);
        } catch (const std::exception&) {
            throw ConfigError("--k must be a positive integer or 'auto'");
        }
    }
    mc.validate();
    const data::WindowedDataset ds(p.norm, mc.k, mc.tau);
    auto [train_refs, test] = ds.temporal_split(p.t_split);
    Rng rng = make_rng(g.seed, "tft-init");
    tft::Tft model(mc, rng);
    const auto res = train::train_tft(model, ds, train_refs, o.train, [](const train::EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << std::endl;
    });
    tft::save_bundle(dir / "bundle", model, p.stats);
    train::write_history_csv(dir / "history.csv", res.history);
    const auto fc = tft::forecast(model, ds, test, &p.stats);
    const auto rep = train::evaluate(fc, ds, test, p.stats, mc.quantiles);
    auto rj = train::report_json(rep);
    rj["t_split"] = p.t_split;
    rj["best_epoch"] = res.best_epoch;
    write_json(dir / "report.json", rj);
    Manifest m{"train-tft", cfgj, g.seed, {o.data}, {"bundle/", "history.csv", "report.json"}};
    m.config["model"] = tft::config_json(mc);
    m.write(dir);
    std::cout << "test mse " << rep.overall.mse << " vs persistence " << rep.overall.persistence_mse << '\n';
    return kOk;
}

struct Loaded {
    tft::Bundle bundle;
    Prepared p;
    data::WindowedDataset ds;
    std::vector<data::SampleRef> test;
};

inline Loaded load_for_inference(const TftOptions& o) {
    if (o.bundle.empty()) throw ConfigError("--bundle is required");
    if (!fs::exists(fs::path(o.bundle) / "config.json")) throw data::DataError("no model bundle at " + o.bundle);
    tft::Bundle b;
    try {
        std::ifstream in(fs::path(o.bundle) / "config.json");
        const auto j = ordered_json::parse(in);
        if (j.value("format_version", 0) <= tft::kBundleFormatVersion) check_schema(tft::config_from_json(j.at("config")));
        b = tft::load_bundle(o.bundle);
    } catch (const nlohmann::json::exception& e) {
        throw data::DataError("bundle " + o.bundle + " has a malformed config: " + e.what());
    } catch (const data::DataError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw data::DataError(e.what());
    }
    Loaded l{std::move(b), load_prepared(o), {}, {}};
    const auto& mc = l.bundle.model->config();
    check_schema(mc);
    // Inputs are normalized with the bundle's own statistics.
    l.p.stats = l.bundle.stats;
    l.p.norm = data::normalize_apply(l.p.raw, l.p.stats);
    l.ds = data::WindowedDataset(l.p.norm, mc.k, mc.tau);
    l.test = test_refs(l.ds, l.p.t_split);
    return l;
}

inline int cmd_predict(const Globals& g, const TftOptions& o) {
    const auto dir = out_dir(g);
    auto l = load_for_inference(o);
    const auto& mc = l.bundle.model->config();
    std::vector<data::SampleRef> refs;
    for (const auto& r : l.ds.refs()) {
        const bool airport_ok = o.airport.empty() || data::kAirportNames[l.ds.series_airport(r.airport)] == o.airport;
        const bool anchor_ok = o.anchor < 0 ? r.anchor + 1 >= l.p.t_split : r.anchor == o.anchor;
        if (airport_ok && anchor_ok) refs.push_back(r);
    }
    if (refs.empty()) throw data::DataError("no complete forecast windows match the requested anchor/airport");
    const auto fc = tft::forecast(*l.bundle.model, l.ds, refs, &l.p.stats);
    write_forecast_csv(dir / "forecast.csv", fc, mc.quantiles);
    Manifest m{"predict", {{"split", o.split}, {"anchor", o.anchor}, {"airport", o.airport}}, g.seed,
               {o.data, o.bundle}, {"forecast.csv"}};
    m.write(dir);
    std::cout << "wrote " << fc.size() << " forecasts\n";
    return kOk;
}

inline int cmd_eval(const Globals& g, const TftOptions& o) {
    const auto dir = out_dir(g);
    auto l = load_for_inference(o);
    const auto fc = tft::forecast(*l.bundle.model, l.ds, l.test, &l.p.stats);
    const auto rep = train::evaluate(fc, l.ds, l.test, l.p.stats, l.bundle.model->config().quantiles);
    auto rj = train::report_json(rep);
    rj["t_split"] = l.p.t_split;
    write_json(dir / "report.json", rj);
    Manifest m{"eval", {{"split", o.split}}, g.seed, {o.data, o.bundle}, {"report.json"}};
    m.write(dir);
    std::cout << "test mse " << rep.overall.mse << " vs persistence " << rep.overall.persistence_mse << '\n';
    return kOk;
}

inline int cmd_interpret(const Globals& g, const TftOptions& o) {
    const auto dir = out_dir(g);
    auto l = load_for_inference(o);
    const auto& mc = l.bundle.model->config();
    const auto fc = tft::forecast(*l.bundle.model, l.ds, l.test, &l.p.stats);
    const auto imp = interp::aggregate(fc, mc.schema);
    const auto att = interp::attention_by_lag(fc);
    interp::write_importance_csv(dir / "importance.csv", imp);
    interp::write_attention_csv(dir / "attention.csv", att);
    interp::write_text(dir / "importance_past.svg", interp::importance_svg(imp.past));
    interp::write_text(dir / "importance_future.svg", interp::importance_svg(imp.future));
    interp::write_text(dir / "importance_static.svg", interp::importance_svg(imp.statics));
    interp::write_text(dir / "attention.svg", interp::attention_svg(att));
    Manifest m{"interpret", {{"split", o.split}}, g.seed, {o.data, o.bundle},
               {"importance.csv", "attention.csv", "importance_past.svg", "importance_future.svg",
                "importance_static.svg", "attention.svg"}};
    // Horizon-1 trajectories over the first 400 test anchors per airport.
    const std::size_t mid = mc.median_index(), Q = mc.quantiles.size();
    for (std::size_t a = 0; a < data::kAirports; ++a)
        for (std::size_t t = 0; t < data::kTargets; ++t) {
            std::vector<double> actual;
            std::vector<std::array<double, 3>> band;
            for (std::size_t i = 0; i < fc.size() && actual.size() < 400; ++i) {
                if (fc[i].airport != a) continue;
                const double z = l.ds.label_rows(l.test[i])[t];
                actual.push_back(l.p.stats.denormalize_target(z, a, t));
                band.push_back({fc[i].at(t, 0, 0), fc[i].at(t, 0, mid), fc[i].at(t, 0, Q - 1)});
            }
            if (actual.empty()) continue;
            const std::string name = std::string("forecast_") + data::kAirportNames[a] + "_" + data::kTargetNames[t] + ".svg";
            interp::write_text(dir / name, forecast_svg(std::string(data::kAirportNames[a]) + " " +
                                                            data::kTargetNames[t] + ", 15 min ahead",
                                                        actual, band));
            m.outputs.push_back(name);
        }
    m.write(dir);
    std::cout << "attention recency " << (mc.k >= 2 ? interp::attention_recency_score(att) : 0.0) << ", top past: ";
    for (const auto& n : imp.past.top(3)) std::cout << n << ' ';
    std::cout << '\n';
    return kOk;
}

// ------------------------------------------------------------------- main

inline int run(int argc, const char* const* argv) {
    CLI::App app{"Airport delay forecasting with weather encodings and a temporal fusion transformer"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Base seed; every random stream derives from it")
        ->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--config", g.config, "JSON config for the command");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--paper-scale", g.full_scale, "Use the 960x1072 grid geometry");

    GenOptions gen;
    auto* c_gen = app.add_subcommand("gen", "Generate a synthetic scenario dataset");
    c_gen->add_option("--T", gen.T, "Number of quarter-hour steps");
    c_gen->add_flag("--weather-dominated", gen.weather_dominated, "Delays driven by weather only");
    c_gen->add_flag("--ascii-grids", gen.ascii_grids, "Write text grids instead of binary");
    c_gen->add_flag("--no-grids", gen.no_grids, "Skip writing weather grids");
    c_gen->add_option("--codec", gen.codec, "Fill f0..f15 from this trained codec instead of fixed pooling statistics");

    WxOptions wxo;
    auto* c_twx = app.add_subcommand("train-wx", "Train the weather autoencoder");
    c_twx->add_option("--data", wxo.data, "Dataset directory (with wx/)");
    c_twx->add_option("--epochs", wxo.train.epochs);
    c_twx->add_option("--lr", wxo.train.lr);
    c_twx->add_option("--batch", wxo.train.batch_size);
    c_twx->add_option("--max-grids", wxo.max_grids, "Evenly spaced subset of grids to train on (0 = all)");
    auto* c_ewx = app.add_subcommand("encode-wx", "Encode grids into 16 weather features per timestamp");
    c_ewx->add_option("--data", wxo.data, "Dataset directory (with wx/)");
    c_ewx->add_option("--codec", wxo.codec, "Codec directory written by train-wx");

    TftOptions to;
    auto* c_ttft = app.add_subcommand("train-tft", "Train the forecaster and report test metrics");
    c_ttft->add_option("--data", to.data, "Directory with dataset.csv");
    c_ttft->add_option("--k", to.k, "History length, or 'auto' for a validation search over 2,4,8,16");
    c_ttft->add_option("--tau", to.tau, "Forecast horizon in steps");
    c_ttft->add_option("--d", to.d, "Model width");
    c_ttft->add_option("--epochs", to.train.epochs);
    c_ttft->add_option("--lr", to.train.lr);
    c_ttft->add_option("--batch", to.train.batch_size);
    c_ttft->add_option("--anchor-stride", to.train.anchor_stride, "Train on every n-th anchor");
    std::vector<CLI::App*> infer;
    for (const char* name : {"predict", "interpret", "eval"}) {
        auto* c = app.add_subcommand(name, std::string(name) == "predict" ? "Write quantile forecasts"
                                           : std::string(name) == "eval" ? "Score a bundle on the test split"
                                                                         : "Export importance and attention");
        c->add_option("--data", to.data, "Directory with dataset.csv");
        c->add_option("--bundle", to.bundle, "Model bundle directory");
        infer.push_back(c);
    }
    infer[0]->add_option("--anchor", to.anchor, "Single anchor t (default: every test anchor)");
    infer[0]->add_option("--airport", to.airport, "Restrict to one airport");
    for (auto* c : {c_ttft, infer[0], infer[1], infer[2]}) c->add_option("--split", to.split, "Train fraction of the time range");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    try {
        if (*c_gen) return cmd_gen(g, gen);
        if (*c_twx) return cmd_train_wx(g, wxo);
        if (*c_ewx) {
            if (wxo.codec.empty() && !g.full_scale) throw ConfigError("--codec is required");
            return cmd_encode_wx(g, wxo);
        }
        if (*c_ttft) return cmd_train_tft(g, to);
        if (*infer[0]) return cmd_predict(g, to);
        if (*infer[1]) return cmd_interpret(g, to);
        if (*infer[2]) return cmd_eval(g, to);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const train::NonFiniteLoss& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const data::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ArchiveError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

}  // namespace tftdelay::cli
