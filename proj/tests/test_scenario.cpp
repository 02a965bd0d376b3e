#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tftdelay/scenario.hpp"

using namespace tftdelay;
using namespace tftdelay::scenario;

namespace {

double corr(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

WeatherRun blank_weather(const ScenarioConfig& cfg) {
    WeatherRun w;
    for (long t = 0; t < cfg.T; ++t) w.grids.push_back(wx::WeatherGrid::zeros(t, cfg.height, cfg.width));
    w.cells.assign(std::size_t(cfg.T), {});
    w.regime.assign(std::size_t(cfg.T), 0);
    return w;
}

}  // namespace

TEST(Calendar, HourQuarterMonth) {
    EXPECT_EQ(hour_of(0), 0);
    EXPECT_EQ(hour_of(4 * 15 + 3), 15);
    EXPECT_EQ(hour_of(96), 0);
    EXPECT_EQ(qod_of(95), 95);
    EXPECT_EQ(qod_of(96), 0);
    EXPECT_EQ(month_of(0), 1);
    EXPECT_EQ(month_of(96 * 31), 2);
    EXPECT_EQ(month_of(96 * 364), 12);
    EXPECT_EQ(month_of(96 * 365), 1);
}

TEST(Weather, NoBirthsGivesEmptySky) {
    ScenarioConfig cfg;
    cfg.T = 300;
    cfg.storms.birth_rate = 0;
    const auto w = gen_weather(cfg);
    ASSERT_EQ(w.grids.size(), 300u);
    for (const auto& g : w.grids) {
        EXPECT_EQ(g.height, 96u);
        EXPECT_EQ(std::count(g.vil.begin(), g.vil.end(), 0), long(g.vil.size()));
        EXPECT_EQ(std::count(g.et.begin(), g.et.end(), 0), long(g.et.size()));
    }
}

TEST(Weather, LevelsStayInRangeAndStormsOccur) {
    ScenarioConfig cfg;
    cfg.T = 1500;
    const auto w = gen_weather(cfg);
    std::size_t wet = 0;
    for (std::size_t t = 0; t < w.grids.size(); ++t) {
        const auto& g = w.grids[t];
        EXPECT_EQ(g.timestamp, long(t));
        EXPECT_NO_THROW(g.validate());
        wet += *std::max_element(g.vil.begin(), g.vil.end()) > 0;
    }
    EXPECT_GT(wet, 100u);
}

TEST(Weather, CellOverAirportPeaksThere) {
    ScenarioConfig cfg;
    const auto& lga = cfg.airports[0];
    const double r = lga.row * 96, c = lga.col * 112;
    const auto field = intensity_field(96, 112, {{0, r, c, 8.0, 0.9}});
    const auto g = quantize(0, 96, 112, field);
    const double here = disk_severity(g, r, c, cfg.severity_radius * 96);
    EXPECT_GT(here, 0.5);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const double pr = double(rng() % 96), pc = double(rng() % 112);
        EXPECT_LE(disk_severity(g, pr, pc, cfg.severity_radius * 96), here + 1e-12);
        EXPECT_LE(g.vil[std::size_t(pr) * 112 + std::size_t(pc)], g.vil[std::size_t(std::lround(r)) * 112 + std::size_t(std::lround(c))]);
    }
}

TEST(Quantize, MapsIntensityToLevels) {
    const auto g = quantize(3, 1, 4, {0.0, 0.5, 1.0, 3.0});
    EXPECT_EQ(g.vil, (std::vector<std::uint8_t>{0, 3, 6, 6}));
    EXPECT_EQ(g.et[0], 0);
    EXPECT_EQ(g.et[2], 14);
    EXPECT_EQ(g.et[3], 14);
    EXPECT_GT(g.et[1], 7);  // concave echo-top response
}

TEST(Operations, ClearSkyShortMemoryKeepsDelaysSmall) {
    ScenarioConfig cfg;
    cfg.T = 2000;
    cfg.delay.rho = 0.2;
    const auto ops = gen_operations(cfg, blank_weather(cfg));
    for (const auto& s : ops.series) {
        double m = 0;
        for (const auto& r : s) m += r.dep_delay / double(s.size());
        EXPECT_LT(m, 2.0);
    }
}

TEST(Operations, StormOverAirportTriggersGroundDelayProgram) {
    ScenarioConfig cfg;
    cfg.T = 20;
    auto w = blank_weather(cfg);
    const auto& ewr = cfg.airports[2];
    w.grids[10] = quantize(10, 96, 112, intensity_field(96, 112, {{0, ewr.row * 96, ewr.col * 112, 6.0, 1.0}}));
    const auto ops = gen_operations(cfg, w);
    const auto& rec = ops.series[2][10];
    EXPECT_EQ(rec.tmi[data::kTmiGdp], 1);
    EXPECT_EQ(rec.tmi[data::kTmiGs], 1);
    EXPECT_LT(rec.aar, ewr.clear_aar);
    EXPECT_LT(rec.aar_eff, rec.aar);
    EXPECT_GT(ops.truth.airports[2].severity[10], 0.5);
    EXPECT_EQ(ops.truth.airports[2].severity[9], 0.0);
    bool found = false;
    for (const auto& a : ops.truth.activations) found |= a.t == 10 && a.airport == 2 && a.flag == "GDP";
    EXPECT_TRUE(found);

    cfg.tmi.enabled = false;
    const auto off = gen_operations(cfg, w);
    for (const auto& s : off.series)
        for (const auto& r : s)
            for (int f : r.tmi) EXPECT_EQ(f, 0);
    EXPECT_TRUE(off.truth.activations.empty());
}

TEST(Operations, RecordsAreValidAcrossSeeds) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.T = 1500;
        const auto s = generate(cfg);
        ASSERT_EQ(s.ops.series.size(), 4u);
        for (std::size_t a = 0; a < 4; ++a) {
            ASSERT_EQ(s.ops.series[a].size(), 1500u);
            for (const auto& r : s.ops.series[a]) {
                EXPECT_NO_THROW(r.validate());
                EXPECT_TRUE(std::isfinite(r.dep_delay) && r.dep_delay >= 0);
                EXPECT_TRUE(std::isfinite(r.arr_delay) && r.arr_delay >= 0);
                EXPECT_GE(r.arrivals, 0);
                EXPECT_LE(r.aar_eff, r.aar);
                EXPECT_EQ(r.airport, a);
            }
        }
    }
}

TEST(Operations, DelayRisesWithSeverityAndOverage) {
    ScenarioConfig cfg;
    cfg.T = 3000;
    const auto s = generate(cfg);
    std::vector<double> sev, dep;
    for (std::size_t a = 0; a < 4; ++a)
        for (long t = 0; t < cfg.T; ++t) {
            sev.push_back(s.ops.truth.airports[a].severity[std::size_t(t)]);
            dep.push_back(s.ops.series[a][std::size_t(t)].dep_delay);
        }
    EXPECT_GT(corr(sev, dep), 0.2);

    cfg.storms.birth_rate = 0;
    cfg.delay.rho = 0.0;
    cfg.tmi.enabled = false;
    for (auto& a : cfg.airports) a.load = 1.2;
    const auto calm = generate(cfg);
    std::vector<double> over, arr;
    for (const auto& series : calm.ops.series)
        for (const auto& r : series) {
            over.push_back(std::max(0.0, r.arr_demand - r.aar_eff));
            arr.push_back(r.arr_delay);
        }
    EXPECT_GT(corr(over, arr), 0.2);
}

TEST(Operations, TmiFlagsMatchRecordedActivations) {
    ScenarioConfig cfg;
    cfg.T = 2000;
    const auto s = generate(cfg);
    std::set<std::tuple<long, std::size_t, std::string>> acts;
    for (const auto& a : s.ops.truth.activations) acts.insert({a.t, a.airport, a.flag});
    std::size_t fired = 0;
    for (std::size_t a = 0; a < 4; ++a)
        for (const auto& r : s.ops.series[a])
            for (std::size_t f = 0; f < data::kTmiCount; ++f) {
                const std::size_t who = f < data::kSharedTmis ? kAirports : a;
                EXPECT_EQ(r.tmi[f] == 1, acts.count({r.t, who, data::kTmiNames[f]}) == 1)
                    << data::kTmiNames[f] << " t=" << r.t;
                fired += r.tmi[f];
            }
    EXPECT_GT(fired, 0u);
}

TEST(Operations, TargetsAreTrailingMeans) {
    ScenarioConfig cfg;
    cfg.T = 50;
    const auto s = generate(cfg);
    const auto& r = s.ops.series[1];
    for (std::size_t t = 3; t < r.size(); ++t) {
        const double m = (r[t].dep_delay + r[t - 1].dep_delay + r[t - 2].dep_delay + r[t - 3].dep_delay) / 4;
        EXPECT_NEAR(r[t].dep_delay_ma, m, 1e-12);
    }
}

TEST(Seeding, SubstreamsAreIndependent) {
    ScenarioConfig base;
    base.T = 400;
    const auto a = generate(base);
    auto noisy = base;
    noisy.delay.noise = 5.0;
    noisy.otp_noise = 0.0;
    const auto b = generate(noisy);
    auto stormy = base;
    stormy.storms.birth_rate = 0.3;
    const auto c = generate(stormy);
    for (long t = 0; t < base.T; ++t) {
        EXPECT_EQ(a.weather.grids[std::size_t(t)], b.weather.grids[std::size_t(t)]);
        for (std::size_t k = 0; k < 4; ++k) {
            const auto& ra = a.ops.series[k][std::size_t(t)];
            EXPECT_EQ(ra.dep_demand, b.ops.series[k][std::size_t(t)].dep_demand);
            EXPECT_EQ(ra.arr_demand, c.ops.series[k][std::size_t(t)].arr_demand);
        }
    }
    auto other = base;
    other.seed += 1;
    const auto d = generate(other);
    std::size_t differ = 0;
    for (long t = 0; t < base.T; ++t) differ += d.ops.series[0][std::size_t(t)].dep_demand != a.ops.series[0][std::size_t(t)].dep_demand;
    EXPECT_GT(differ, 50u);
}

TEST(Emit, SameSeedGivesIdenticalFiles) {
    ScenarioConfig cfg;
    cfg.T = 200;
    const auto root = std::filesystem::temp_directory_path() / "tftdelay_emit";
    std::filesystem::remove_all(root);
    emit_dataset(cfg, root / "a");
    emit_dataset(cfg, root / "b", {true, false});
    for (const char* f : {"dataset.csv", "truth.json", "scenario.json"})
        EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f;

    const auto series = data::read_dataset_csv(root / "a" / "dataset.csv");
    std::size_t rows = 0;
    for (const auto& s : series) rows += s.size();
    EXPECT_EQ(rows, 4u * 200);
    std::ifstream in(root / "a" / "dataset.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, data::join(data::dataset_columns()));

    for (long t : {0L, 57L, 199L}) {
        const auto bin = wx::read_grid(root / "a" / "wx" / wx::grid_filename(t, true));
        EXPECT_EQ(bin, wx::read_grid(root / "b" / "wx" / wx::grid_filename(t, false)));
    }
    const auto j = nlohmann::json::parse(slurp(root / "a" / "scenario.json"));
    const auto back = j.get<ScenarioConfig>();
    EXPECT_EQ(back.seed, cfg.seed);
    EXPECT_EQ(back.T, cfg.T);
    EXPECT_EQ(back.airports[3].id, "PHL");
    EXPECT_EQ(back.delay.gamma_dep, cfg.delay.gamma_dep);
    std::filesystem::remove_all(root);
}

TEST(Config, ValidationMessages) {
    ScenarioConfig cfg;
    cfg.T = 10;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = ScenarioConfig{};
    cfg.airports.pop_back();
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = ScenarioConfig{};
    cfg.width = 60;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = ScenarioConfig{};
    std::swap(cfg.airports[0], cfg.airports[1]);
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_NO_THROW(ScenarioConfig::full_scale().validate());
    EXPECT_NO_THROW(ScenarioConfig::weather_dominated().validate());
}
