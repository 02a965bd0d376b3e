#include <gtest/gtest.h>

#include <filesystem>

#include "support/tft_fixtures.hpp"
#include "tftdelay/scenario.hpp"
#include "tftdelay/tft.hpp"

using namespace tftdelay;
using namespace tftdelay::tft;
using tftdelay::testing::random_batch;
using tftdelay::testing::tiny_tft_config;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TftConfig desk_config(std::size_t k = 4) {
    TftConfig c;
    c.k = k;
    return c;
}

std::vector<data::Series> small_scenario(long T = 120) {
    scenario::ScenarioConfig cfg;
    cfg.T = T;
    return scenario::generate(cfg).ops.series;
}

}  // namespace

TEST(Tft, OutputShapesOnAirportSchema) {
    Rng rng(1);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    Rng brng(2);
    auto b = random_batch(cfg, 5, brng);
    auto out = model.forward(b);
    EXPECT_EQ(out.quantiles.shape(), (Shape{5, 16, 2, 3}));
    EXPECT_EQ(out.attention.shape(), (Shape{5, 2, 20, 20}));
    EXPECT_EQ(out.past_weights.shape(), (Shape{5, 4, 47}));
    EXPECT_EQ(out.future_weights.shape(), (Shape{5, 16, 23}));
    EXPECT_EQ(out.static_weights.shape(), (Shape{5, 1}));
    for (double v : vec(out.quantiles)) EXPECT_TRUE(std::isfinite(v));
}

TEST(Tft, ShapeLawOverRandomConfigs) {
    Rng rng(3);
    for (int trial = 0; trial < 8; ++trial) {
        auto cfg = tiny_tft_config();
        cfg.k = 1 + rng() % 5;
        cfg.tau = 1 + rng() % 5;
        cfg.heads = 1 + rng() % 3;
        cfg.d = cfg.heads * (1 + rng() % 3);
        cfg.n_targets = 1 + rng() % 2;
        const std::size_t B = 1 + rng() % 4;
        Tft model(cfg, rng);
        auto out = model.forward(random_batch(cfg, B, rng));
        EXPECT_EQ(out.quantiles.shape(), (Shape{B, cfg.tau, cfg.n_targets, 3}));
        EXPECT_EQ(out.attention.shape(), (Shape{B, cfg.heads, cfg.k + cfg.tau, cfg.k + cfg.tau}));
    }
}

TEST(Tft, RejectsBadConfigAndBatch) {
    auto cfg = tiny_tft_config();
    Rng rng(4);
    cfg.quantiles = {0.1, 0.9};
    EXPECT_THROW(Tft(cfg, rng), std::invalid_argument);
    cfg.quantiles = {0.75, 0.5};
    EXPECT_THROW(Tft(cfg, rng), std::invalid_argument);
    cfg = tiny_tft_config();
    Tft model(cfg, rng);
    auto wrong = cfg;
    wrong.k = 3;
    EXPECT_THROW(model.forward(random_batch(wrong, 2, rng)), ShapeError);
    auto b = random_batch(cfg, 2, rng);
    b.statics.mutable_values()[0] = 7;  // category outside 0..2
    EXPECT_THROW(model.forward(b), std::out_of_range);
}

TEST(Tft, SelectionWeightsAreSimplices) {
    Rng rng(5);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    auto out = model.forward(random_batch(cfg, 3, rng));
    for (const Tensor* w : {&out.past_weights, &out.future_weights, &out.static_weights}) {
        const std::size_t V = w->dim(w->rank() - 1);
        const auto v = vec(*w);
        for (std::size_t r = 0; r < v.size() / V; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < V; ++j) {
                EXPECT_GE(v[r * V + j], 0.0);
                s += v[r * V + j];
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Tft, HorizonOutputIgnoresLaterKnownInputs) {
    Rng rng(6);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    const auto base = random_batch(cfg, 2, rng);
    const auto ref = vec(model.forward(base).quantiles);
    const std::size_t F = base.future.dim(2), per_h = 2 * 3;
    for (std::size_t h = 0; h + 1 < cfg.tau; h += 5) {
        auto b = base;
        b.future = Tensor(base.future.shape(), vec(base.future));
        auto fv = b.future.mutable_values();
        std::normal_distribution<double> n;
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t t = h + 1; t < cfg.tau; ++t)
                for (std::size_t c = 0; c < F; ++c) {
                    auto& x = fv[(s * cfg.tau + t) * F + c];
                    x = std::floor(x) == x && x >= 0 ? x : x + n(rng);  // keep categorical codes valid
                }
        const auto got = vec(model.forward(b).quantiles);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t t = 0; t <= h; ++t)
                for (std::size_t i = 0; i < per_h; ++i) {
                    const std::size_t idx = (s * cfg.tau + t) * per_h + i;
                    EXPECT_EQ(got[idx], ref[idx]) << "h=" << h << " t=" << t;
                }
    }
}

TEST(Tft, AttentionIsCausal) {
    Rng rng(7);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    auto a = vec(model.forward(random_batch(cfg, 2, rng)).attention);
    const std::size_t T = cfg.steps();
    for (std::size_t m = 0; m < a.size() / (T * T); ++m)
        for (std::size_t i = 0; i < T; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < T; ++j) {
                const double w = a[m * T * T + i * T + j];
                if (j > i) EXPECT_EQ(w, 0.0);
                s += w;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
}

TEST(Tft, SameSeedSameModelAndOutput) {
    const auto cfg = desk_config();
    Rng r1(8), r2(8), b1(9), b2(9);
    Tft m1(cfg, r1), m2(cfg, r2);
    EXPECT_EQ(vec(m1.forward(random_batch(cfg, 3, b1)).quantiles), vec(m2.forward(random_batch(cfg, 3, b2)).quantiles));
}

TEST(Tft, DropoutOnlyInTraining) {
    auto cfg = tiny_tft_config();
    cfg.dropout = 0.5;
    Rng rng(10);
    Tft model(cfg, rng);
    const auto b = random_batch(cfg, 4, rng);
    EXPECT_EQ(vec(model.forward(b).quantiles), vec(model.forward(b).quantiles));
    Rng d(11);
    EXPECT_NE(vec(model.forward(b, nn::Mode::train(d)).quantiles), vec(model.forward(b).quantiles));
}

TEST(Tft, ZeroHeadsGiveZeroQuantiles) {
    Rng rng(12);
    const auto cfg = tiny_tft_config();
    Tft model(cfg, rng);
    for (const auto& [name, t] : model.parameters().entries())
        if (name.rfind("tft.head", 0) == 0) {
            Tensor w = t;
            for (auto& v : w.mutable_values()) v = 0.0;
        }
    for (double v : vec(model.forward(random_batch(cfg, 3, rng)).quantiles)) EXPECT_EQ(v, 0.0);
}

TEST(Tft, BundleRoundTripIsBitExact) {
    auto series = small_scenario();
    const auto stats = data::normalize_fit(series);
    Rng rng(13);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    const auto dir = std::filesystem::temp_directory_path() / "tftdelay_bundle_test";
    std::filesystem::remove_all(dir);
    save_bundle(dir, model, stats);
    auto loaded = load_bundle(dir);
    EXPECT_EQ(loaded.stats.mean, stats.mean);
    EXPECT_EQ(loaded.stats.scale, stats.scale);
    EXPECT_EQ(loaded.model->config().k, cfg.k);
    EXPECT_EQ(loaded.model->config().schema.past_vars.size(), cfg.schema.past_vars.size());
    Rng b1(14), b2(14);
    EXPECT_EQ(vec(model.forward(random_batch(cfg, 4, b1)).quantiles),
              vec(loaded.model->forward(random_batch(cfg, 4, b2)).quantiles));

    auto j = nlohmann::ordered_json::parse(std::ifstream(dir / "config.json"));
    j["format_version"] = kBundleFormatVersion + 1;
    std::ofstream(dir / "config.json") << j.dump();
    EXPECT_THROW(load_bundle(dir), std::runtime_error);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_bundle(dir), std::runtime_error);
}

TEST(Tft, PredictMatchesBatchedForecast) {
    auto series = small_scenario();
    const auto stats = data::normalize_fit(series);
    const auto norm = data::normalize_apply(series, stats);
    Rng rng(15);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    const data::WindowedDataset ds(norm, cfg.k, cfg.tau);
    const auto& ref = ds.refs()[37];
    const auto batched = forecast(model, ds, {ref}, &stats).at(0);
    const auto single = predict(model, stats, series[ref.airport], ref.anchor);
    EXPECT_EQ(single.anchor, ref.anchor);
    EXPECT_EQ(single.airport, batched.airport);
    ASSERT_EQ(single.predictions.size(), 2u * 16 * 3);
    for (std::size_t i = 0; i < single.predictions.size(); ++i)
        EXPECT_NEAR(single.predictions[i], batched.predictions[i], 1e-9);

    EXPECT_THROW(predict(model, stats, series[0], 1), data::DataError);
    EXPECT_THROW(predict(model, stats, series[0], series[0].back().t - 3), data::DataError);
}

TEST(Tft, ForecastsAreInMinutes) {
    auto series = small_scenario();
    const auto stats = data::normalize_fit(series);
    Rng rng(16);
    const auto cfg = desk_config();
    Tft model(cfg, rng);
    const data::WindowedDataset ds(data::normalize_apply(series, stats), cfg.k, cfg.tau);
    NoGradGuard ng;
    auto [b, labels] = make_batch(ds, {ds.refs()[0]});
    const auto z = vec(model.forward(b).quantiles);
    const auto f = forecast(model, ds, {ds.refs()[0]}, &stats).at(0);
    const std::size_t a = f.airport;
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t h = 0; h < cfg.tau; ++h)
            for (std::size_t q = 0; q < 3; ++q)
                EXPECT_NEAR(f.at(t, h, q), stats.denormalize_target(z[(h * 2 + t) * 3 + q], a, t), 1e-12);
}
