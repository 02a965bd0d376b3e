#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "tftdelay/scenario.hpp"
#include "tftdelay/training.hpp"

using namespace tftdelay;
using namespace tftdelay::train;

namespace {

std::vector<double> normals(std::size_t n, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

struct Prepared {
    std::vector<data::Series> raw, norm;
    data::NormStats stats;
};

Prepared prepared(long T) {
    scenario::ScenarioConfig cfg;
    cfg.T = T;
    Prepared p;
    p.raw = scenario::generate(cfg).ops.series;
    p.stats = data::normalize_fit(p.raw);
    p.norm = data::normalize_apply(p.raw, p.stats);
    return p;
}

}  // namespace

TEST(Metrics, PinballExamples) {
    EXPECT_DOUBLE_EQ(pinball(10, 8, 0.25), 0.5);
    EXPECT_DOUBLE_EQ(pinball(8, 10, 0.25), 1.5);
    EXPECT_DOUBLE_EQ(pinball(8, 10, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(pinball(3, 3, 0.75), 0.0);
    EXPECT_THROW(pinball(1, 2, 1.0), std::invalid_argument);
    EXPECT_THROW(pinball(1, 2, 0.0), std::invalid_argument);
}

TEST(Metrics, MedianPinballIsHalfMae) {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto y = normals(40, rng), p = normals(40, rng);
        EXPECT_NEAR(mean_pinball(y, p, 0.5), 0.5 * mae(y, p), 1e-14);
    }
}

TEST(Metrics, MseMaeExamplesAndOracle) {
    EXPECT_DOUBLE_EQ(mse({1, 2, 3}, {1, 2, 5}), 4.0 / 3.0);
    EXPECT_DOUBLE_EQ(mae({1, 2, 3}, {0, 2, 5}), 1.0);
    EXPECT_THROW(mse({1}, {1, 2}), std::invalid_argument);
    EXPECT_THROW(mae({}, {}), std::invalid_argument);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto y = normals(50, rng), p = normals(50, rng);
        double se = 0, ae = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - p[i];
            se += std::pow(d, 2);
            ae += std::sqrt(d * d);
        }
        EXPECT_NEAR(mse(y, p), se / 50, 1e-12);
        EXPECT_NEAR(mae(y, p), ae / 50, 1e-12);
        EXPECT_GE(mse(y, p), std::pow(mae(y, p), 2) - 1e-12);
    }
}

TEST(Metrics, TensorPinballMatchesScalarLoop) {
    Rng rng(2);
    const std::vector<double> q{0.1, 0.5, 0.9};
    const auto pv = normals(4 * 3 * 3, rng), yv = normals(4 * 3, rng);
    const Tensor pred({4, 3, 3}, pv), y({4, 3}, yv);
    double s = 0;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += pinball(yv[i], pv[i * 3 + j], q[j]);
    EXPECT_NEAR(pinball_loss(pred, y, q).item(), s / 36, 1e-14);
    EXPECT_THROW(pinball_loss(pred, y, {0.5}), ShapeError);
}

TEST(Metrics, BestConstantUnderPinballIsTheSampleQuantile) {
    Rng rng(3);
    auto y = normals(401, rng, 3.0);
    auto sorted = y;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.25, 0.5, 0.75}) {
        double best = 0, best_loss = 1e300;
        for (double c = -10; c <= 10; c += 0.001) {
            const double l = mean_pinball(y, std::vector<double>(y.size(), c), q);
            if (l < best_loss) best_loss = l, best = c;
        }
        const double lo = sorted[std::size_t(std::floor(q * 400))], hi = sorted[std::size_t(std::ceil(q * 400))];
        EXPECT_GE(best, lo - 0.002) << q;
        EXPECT_LE(best, hi + 0.002) << q;
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Rng rng(4);
    nn::ParameterSet ps;
    Tensor w = ps.add("w", {50}, nn::Init::Uniform, rng, 1);
    Tensor z = ps.add("z", {3}, nn::Init::Uniform, rng, 1);
    const auto before = std::vector<double>(w.values().begin(), w.values().end());
    const auto zb = std::vector<double>(z.values().begin(), z.values().end());
    const Tensor g({50}, normals(50, rng));
    backward(add(sum_all(mul(w, g)), scale(sum_all(z), 0.0)));
    AdamState st;
    adam_step(ps, st, 0.01);
    for (std::size_t i = 0; i < 50; ++i) {
        const double d = std::abs(w.values()[i] - before[i]);
        EXPECT_GE(d, 0.9 * 0.01);
        EXPECT_LE(d, 0.01 + 1e-12);
        EXPECT_EQ(w.values()[i] < before[i], g.at(i) > 0);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(z.values()[i], zb[i]);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ClipScalesToMaxNorm) {
    Rng rng(5);
    nn::ParameterSet ps;
    Tensor w = ps.add("w", {2}, nn::Init::Zeros, rng);
    backward(sum_all(mul(w, Tensor::from_vector({3.0, 4.0}))));
    EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
    EXPECT_NEAR(grad_norm(ps), 1.0, 1e-15);
    EXPECT_NEAR(w.grad()[0], 0.6, 1e-15);
    EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 2.0), 1.0);
    EXPECT_NEAR(grad_norm(ps), 1.0, 1e-15);
}

TEST(Fit, RestoresBestEpochAndStopsEarly) {
    Rng rng(6);
    nn::ParameterSet ps;
    Tensor w = ps.add("w", {1}, nn::Init::Zeros, rng);
    const std::vector<double> scripted{3, 1, 2, 2, 2, 2, 2};
    std::size_t calls = 0;
    std::vector<double> after;
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.patience = 2;
    cfg.batch_size = 1;
    auto res = fit(
        ps, 1, cfg,
        [&](const std::vector<std::size_t>&, nn::Mode) {
            const Tensor d = sub(w, Tensor::from_vector({5.0}));
            return sum_all(mul(d, d));
        },
        [&] { return scripted[calls++]; }, [&](const EpochRecord&) { after.push_back(w.values()[0]); });
    EXPECT_TRUE(res.stopped_early);
    EXPECT_EQ(res.history.size(), 4u);
    EXPECT_EQ(res.best_epoch, 2u);
    EXPECT_EQ(res.best_val, 1.0);
    EXPECT_EQ(w.values()[0], after[1]);
    EXPECT_NE(after[3], after[1]);
}

TEST(Fit, NonFiniteLossAborts) {
    Rng rng(7);
    nn::ParameterSet ps;
    Tensor w = ps.add("w", {1}, nn::Init::Zeros, rng);
    TrainConfig cfg;
    EXPECT_THROW(fit(
                     ps, 1, cfg,
                     [&](const std::vector<std::size_t>&, nn::Mode) { return sum_all(mul(w, Tensor::from_vector({std::numeric_limits<double>::quiet_NaN()}))); },
                     [] { return 0.0; }),
                 NonFiniteLoss);
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Fit, HistoryCsvFormat) {
    const auto path = std::filesystem::temp_directory_path() / "tftdelay_history.csv";
    write_history_csv(path, {{1, 0.5, 0.25}, {2, 0.125, 0.0625}});
    std::ifstream in(path);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    EXPECT_EQ(l1, "epoch,train_loss,val_loss");
    EXPECT_EQ(l2, "1,0.5,0.25");
    EXPECT_EQ(l3, "2,0.125,0.0625");
    std::filesystem::remove(path);
}

TEST(ValidationSplit, LabelsNeverOverlap) {
    const auto p = prepared(300);
    const data::WindowedDataset ds(p.norm, 4, 16);
    for (std::size_t stride : {1u, 3u}) {
        const auto s = validation_split(ds.refs(), 16, 0.2, stride);
        long first_val = std::numeric_limits<long>::max(), last_train_label = 0;
        for (const auto& r : s.val) first_val = std::min(first_val, r.anchor + 1);
        for (const auto& r : s.train) {
            last_train_label = std::max(last_train_label, r.anchor + 16);
            EXPECT_EQ(r.anchor % long(stride), 0);
        }
        EXPECT_LT(last_train_label, first_val);
        EXPECT_GT(s.val.size(), 4u * 40);
    }
    EXPECT_THROW(validation_split({}, 16, 0.2), std::invalid_argument);
}

TEST(Evaluate, PersistenceForecastHasZeroSkill) {
    const auto p = prepared(200);
    const data::WindowedDataset ds(p.norm, 4, 16);
    const std::vector<double> q{0.25, 0.5, 0.75};
    std::vector<tft::ForecastSet> fs;
    for (const auto& r : ds.refs()) {
        tft::ForecastSet f;
        f.airport = ds.series_airport(r.airport);
        f.anchor = r.anchor;
        f.tau = 16;
        f.n_quantiles = 3;
        for (std::size_t t = 0; t < 2; ++t) {
            const double v = p.stats.denormalize_target(ds.anchor_targets(r)[t], f.airport, t);
            for (std::size_t h = 0; h < 16; ++h)
                for (double off : {-1e9, 0.0, 1e9}) f.predictions.push_back(v + off);
        }
        fs.push_back(f);
    }
    const auto rep = evaluate(fs, ds, ds.refs(), p.stats, q);
    EXPECT_EQ(rep.overall.n, ds.size() * 32);
    EXPECT_NEAR(rep.overall.mse, rep.overall.persistence_mse, 1e-9);
    EXPECT_NEAR(rep.overall.skill(), 0.0, 1e-9);
    EXPECT_EQ(rep.overall.coverage, 1.0);
    EXPECT_EQ(rep.overall.crossing_rate, 0.0);
    for (std::size_t t = 0; t < 2; ++t) {
        EXPECT_NEAR(rep.by_target[t].skill(), 0.0, 1e-9);
        double pooled = 0;
        for (std::size_t a = 0; a < 4; ++a) {
            pooled += rep.per[a][t].persistence_mse * double(rep.per[a][t].n);
            EXPECT_LE(std::pow(rep.per[a][t].mae, 2), rep.per[a][t].mse + 1e-9);
            // Point baseline: identical for every quantile column.
            EXPECT_EQ(rep.per[a][t].persistence_mse, rep.per[a][t].mse);
        }
        EXPECT_NEAR(rep.by_target[t].persistence_mse, pooled / double(rep.by_target[t].n), 1e-9);
    }
    // Oracle for one cell: recompute from raw records.
    const auto& raw = p.raw[2];
    double se = 0;
    std::size_t n = 0;
    for (std::size_t off = 3; off + 16 < raw.size(); ++off)
        for (std::size_t h = 1; h <= 16; ++h) {
            se += std::pow(raw[off + h].arr_delay_ma - raw[off].arr_delay_ma, 2);
            ++n;
        }
    EXPECT_EQ(rep.per[2][1].n, n);
    EXPECT_NEAR(rep.per[2][1].persistence_mse, se / double(n), 1e-9);

    for (auto& f : fs) std::reverse(f.predictions.begin(), f.predictions.end());
    const auto bad = evaluate(fs, ds, ds.refs(), p.stats, q);
    EXPECT_EQ(bad.overall.crossing_rate, 1.0);
    const auto j = report_json(rep);
    EXPECT_TRUE(j.contains("overall"));
    EXPECT_TRUE(j["airports"]["PHL"]["dep_delay_ma"].contains("coverage"));
}

TEST(TrainTft, SameSeedSameRun) {
    const auto p = prepared(260);
    auto mc = tftdelay::tft::TftConfig{};
    mc.k = 2;
    mc.tau = 4;
    const data::WindowedDataset ds(p.norm, 2, 4);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.anchor_stride = 4;
    std::vector<std::vector<double>> outs;
    for (int rep = 0; rep < 2; ++rep) {
        Rng rng(8);
        tft::Tft model(mc, rng);
        const auto res = train_tft(model, ds, ds.refs(), cfg);
        std::vector<double> h;
        for (const auto& e : res.history) h.push_back(e.train_loss), h.push_back(e.val_loss);
        outs.push_back(h);
    }
    EXPECT_EQ(outs[0], outs[1]);
}

TEST(TrainTft, MemorizesSmallSet) {
    const auto p = prepared(160);
    auto mc = tftdelay::tft::TftConfig{};
    mc.dropout = 0.0;
    const data::WindowedDataset ds(p.norm, 4, 16);
    std::vector<data::SampleRef> few;
    for (std::size_t i = 0; i < 32; ++i) few.push_back(ds.refs()[i * 3]);
    Rng rng(9);
    tft::Tft model(mc, rng);
    const double before = mean_window_pinball(model, ds, few);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.lr = 5e-3;
    cfg.patience = 1000;
    cfg.epochs = 300;
    cfg.clip_norm = 0;
    nn::ParameterSet& ps = model.parameters();
    auto res = fit(
        ps, few.size(), cfg,
        [&](const std::vector<std::size_t>& idx, nn::Mode mode) {
            std::vector<data::SampleRef> part;
            for (auto i : idx) part.push_back(few[i]);
            auto [b, labels] = tft::make_batch(ds, part);
            return pinball_loss(model.forward(b, mode).quantiles, labels, mc.quantiles);
        },
        [&] { return mean_window_pinball(model, ds, few); });
    const double after = mean_window_pinball(model, ds, few);
    EXPECT_LT(res.history.back().train_loss, 0.5 * res.history.front().train_loss);
    EXPECT_LT(after, 0.5 * before);
}

TEST(Fit, StopsAtWallClockBudget) {
    Rng rng(3);
    nn::ParameterSet ps;
    Tensor w = ps.add("w", {1}, nn::Init::Zeros, rng);
    train::TrainConfig cfg;
    cfg.epochs = 1000;
    cfg.patience = 1000;
    cfg.max_seconds = 0.05;
    const auto res = train::fit(
        ps, 4, cfg,
        [&](const std::vector<std::size_t>&, nn::Mode) {
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            const Tensor d = sub(w, Tensor({1}, {1.0}));
            return sum_all(mul(d, d));
        },
        [&] { return std::abs(w.at(0) - 1.0); });
    EXPECT_TRUE(res.stopped_early);
    EXPECT_LT(res.history.size(), 1000u);
    cfg.max_seconds = -1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
