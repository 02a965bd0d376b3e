#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "tftdelay/formulation.hpp"

using namespace tftdelay::data;

namespace {

Series random_series(std::size_t airport, long t0, std::size_t T, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Series s;
    for (std::size_t i = 0; i < T; ++i) {
        AirportRecord r;
        r.airport = airport;
        r.t = t0 + long(i);
        r.arrivals = std::floor(10 * u(rng));
        r.departures = std::floor(10 * u(rng));
        r.arr_delay = 30 * u(rng);
        r.dep_delay = 30 * u(rng);
        r.arr_otp = 100 * u(rng);
        r.dep_otp = 100 * u(rng);
        for (auto& f : r.wx) f = u(rng);
        r.arr_demand = std::floor(12 * u(rng));
        r.dep_demand = std::floor(12 * u(rng));
        r.aar = 5 + 5 * u(rng);
        r.adr = 5 + 5 * u(rng);
        r.aar_eff = r.aar * 0.9;
        for (auto& f : r.tmi) f = u(rng) < 0.2;
        r.qod = int(r.t % 96);
        r.hour = r.qod / 4;
        r.month = 1 + int((r.t / 2976) % 12);
        s.push_back(r);
    }
    fill_targets(s);
    return s;
}

std::vector<Series> random_dataset(std::size_t T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Series> all;
    for (std::size_t a = 0; a < kAirports; ++a) all.push_back(random_series(a, 0, T, rng));
    return all;
}

}  // namespace

TEST(MovingAverage, Examples) {
    const std::vector<double> x{3, -1, 4, 1, 5};
    EXPECT_EQ(moving_average(x, 1), x);
    EXPECT_EQ(moving_average({0, 4, 8, 12}, 4), (std::vector<double>{0, 2, 4, 6}));
    EXPECT_THROW(moving_average({}, 4), std::invalid_argument);
    EXPECT_THROW(moving_average(x, 0), std::invalid_argument);
}

TEST(MovingAverage, MatchesLoopOracleAndIsShiftEquivariant) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 5 + rng() % 60, w = 1 + rng() % 8;
        std::vector<double> x(len);
        for (auto& v : x) v = n(rng);
        const auto ma = moving_average(x, w);
        ASSERT_EQ(ma.size(), len);
        for (std::size_t i = 0; i < len; ++i) {
            double s = 0;
            std::size_t c = 0;
            for (long j = long(i); j >= 0 && c < w; --j, ++c) s += x[std::size_t(j)];
            EXPECT_NEAR(ma[i], s / double(c), 1e-12);
        }
        // Shifting the input by m steps shifts the output by m once both are past warm-up.
        const std::size_t m = 3;
        std::vector<double> shifted(m, 0.0);
        shifted.insert(shifted.end(), x.begin(), x.end());
        const auto ms = moving_average(shifted, w);
        for (std::size_t i = w; i < len; ++i) EXPECT_NEAR(ms[i + m], ma[i], 1e-9);
    }
}

TEST(Schema, GroupSizesAndUniqueness) {
    const auto s = airport_schema();
    EXPECT_EQ(known_variables().size(), 23u);
    EXPECT_EQ(observed_variables().size(), 22u);
    EXPECT_EQ(s.past_vars.size(), 22u + 23u + 2u);
    EXPECT_EQ(s.future_vars.size(), 23u);
    ASSERT_EQ(s.static_vars.size(), 1u);
    // Each source variable appears in exactly one of static / observed / known / target.
    std::set<std::string> names;
    for (const auto& v : s.static_vars) EXPECT_TRUE(names.insert(v.name).second) << v.name;
    for (const auto& v : s.past_vars) EXPECT_TRUE(names.insert(v.name).second) << v.name;
    EXPECT_EQ(names.size(), 48u);
    AirportRecord r;
    EXPECT_EQ(past_row(r).size(), InputSchema::columns(s.past_vars));
    EXPECT_EQ(future_row(r).size(), InputSchema::columns(s.future_vars));
}

TEST(TmiCatalog, FifteenFlagsElevenShared) {
    EXPECT_EQ(kTmiNames.size(), 15u);
    EXPECT_EQ(std::string(kTmiNames[kTmiGdp]), "GDP");
    EXPECT_EQ(std::string(kTmiNames[kTmiGs]), "GS");
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(std::string(kTmiNames[i]).substr(0, 3), "FCA");
}

TEST(Record, ValidationRejectsOutOfRangeFields) {
    AirportRecord r;
    EXPECT_NO_THROW(r.validate());
    auto bad = r;
    bad.arr_otp = 101;
    EXPECT_THROW(bad.validate(), DataError);
    bad = r;
    bad.tmi[3] = 2;
    EXPECT_THROW(bad.validate(), DataError);
    bad = r;
    bad.aar = -1;
    EXPECT_THROW(bad.validate(), DataError);
}

TEST(Windowing, SampleCounts) {
    auto all = random_dataset(25, 1);
    WindowedDataset ds(all, 4, 16);
    EXPECT_EQ(ds.size(), 6u * kAirports);
    auto exact = random_dataset(20, 2);
    EXPECT_EQ(WindowedDataset(exact, 4, 16).size(), kAirports);
    auto short_ = random_dataset(19, 2);
    EXPECT_EQ(WindowedDataset(short_, 4, 16).size(), 0u);
}

TEST(Windowing, LeakageFreedomOverRandomDatasets) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = 1 + rng() % 6, tau = 1 + rng() % 8, T = k + tau + rng() % 30;
        auto all = random_dataset(T, rng());
        WindowedDataset ds(all, k, tau);
        ASSERT_EQ(ds.size(), kAirports * (T - k - tau + 1));
        for (const auto& ref : ds.refs()) {
            const auto s = ds.materialize(ref);
            EXPECT_EQ(s.past_t.back(), s.anchor);
            EXPECT_EQ(s.future_t.front(), s.anchor + 1);
            for (long t : s.past_t) EXPECT_LE(t, s.anchor);
            for (long t : s.future_t) EXPECT_GT(t, s.anchor);
            // Past rows are exactly the records at past_t; labels are the targets at future_t.
            const auto& series = all[s.airport];
            for (std::size_t i = 0; i < k; ++i) {
                const auto row = past_row(series[std::size_t(s.past_t[i])]);
                for (std::size_t c = 0; c < row.size(); ++c) EXPECT_EQ(s.past[i * row.size() + c], row[c]);
            }
            for (std::size_t i = 0; i < tau; ++i) {
                const auto& r = series[std::size_t(s.future_t[i])];
                EXPECT_EQ(s.labels[i * 2], r.dep_delay_ma);
                EXPECT_EQ(s.labels[i * 2 + 1], r.arr_delay_ma);
            }
        }
    }
}

TEST(Windowing, GapIsReportedWithItsBounds) {
    auto all = random_dataset(30, 3);
    all[2].erase(all[2].begin() + 10);
    try {
        WindowedDataset ds(all, 4, 4);
        FAIL() << "expected a gap error";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("EWR"), std::string::npos) << msg;
        EXPECT_NE(msg.find("t=9"), std::string::npos) << msg;
        EXPECT_NE(msg.find("t=11"), std::string::npos) << msg;
    }
}

TEST(Normalization, FitApplyZeroMeanUnitStd) {
    auto all = random_dataset(200, 5);
    for (auto& r : all[1]) r.aar = 7.5;  // constant field
    const auto stats = normalize_fit(all);
    const auto norm = normalize_apply(all, stats);
    const auto fields = continuous_field_names();
    for (std::size_t a = 0; a < kAirports; ++a) {
        for (std::size_t f = 0; f < fields.size(); ++f) {
            double m = 0, sq = 0;
            for (auto r : norm[a]) m += *continuous_fields(r)[f].second;
            m /= double(norm[a].size());
            for (auto r : norm[a]) sq += std::pow(*continuous_fields(r)[f].second - m, 2);
            EXPECT_LT(std::abs(m), 1e-10) << fields[f];
            if (a == 1 && fields[f] == "aar") {
                EXPECT_EQ(sq, 0.0);
            } else {
                EXPECT_NEAR(std::sqrt(sq / double(norm[a].size())), 1.0, 1e-9) << fields[f];
            }
        }
        // Binary and calendar fields pass through untouched.
        for (std::size_t i = 0; i < all[a].size(); ++i) {
            EXPECT_EQ(norm[a][i].tmi, all[a][i].tmi);
            EXPECT_EQ(norm[a][i].qod, all[a][i].qod);
        }
    }
    for (const auto& r : norm[1]) EXPECT_EQ(r.aar, 0.0);
    ASSERT_EQ(stats.warnings.size(), 1u);
    EXPECT_NE(stats.warnings[0].find("JFK.aar"), std::string::npos);
}

TEST(Normalization, ApplyingToTestDataUsesOnlyTrainStats) {
    auto all = random_dataset(300, 6);
    auto [train, test] = temporal_split(all, 200);
    const auto stats = normalize_fit(train);
    const auto before = stats;
    const auto normed = normalize_apply(test, stats);
    EXPECT_EQ(stats, before);
    const std::size_t f = stats.field_index("dep_delay");
    EXPECT_EQ(normed[0][0].dep_delay, (test[0][0].dep_delay - stats.mean[0][f]) / stats.scale[0][f]);
    // de-normalize(normalize(y)) == y
    for (const auto& r : test[3]) {
        const double z = stats.normalize(r.arr_delay_ma, 3, stats.field_index("arr_delay_ma"));
        EXPECT_NEAR(stats.denormalize_target(z, 3, 1), r.arr_delay_ma, 1e-10);
    }
}

TEST(TemporalSplit, RecordAndSampleBoundaries) {
    const std::size_t T = 120, k = 4, tau = 16;
    auto all = random_dataset(T, 7);
    const long split = long(T / 2);
    auto [tr, te] = temporal_split(all, split);
    for (const auto& s : tr)
        for (const auto& r : s) EXPECT_LT(r.t, split);
    for (const auto& s : te)
        for (const auto& r : s) EXPECT_GE(r.t, split);

    WindowedDataset ds(all, k, tau);
    auto [train, test] = ds.temporal_split(split);
    std::set<long> train_labels, test_labels;
    long earliest = std::numeric_limits<long>::max();
    for (const auto& r : train) {
        for (long t : ds.materialize(r).future_t) {
            EXPECT_LT(t, split);
            train_labels.insert(t);
        }
    }
    for (const auto& r : test) {
        const auto s = ds.materialize(r);
        earliest = std::min(earliest, s.anchor);
        for (long t : s.future_t) test_labels.insert(t);
    }
    // Disjoint, and together they cover every label time.
    for (long t : train_labels) EXPECT_FALSE(test_labels.count(t));
    std::set<long> all_labels;
    for (const auto& r : ds.refs())
        for (long t : ds.materialize(r).future_t) all_labels.insert(t);
    std::set<long> both = train_labels;
    both.insert(test_labels.begin(), test_labels.end());
    EXPECT_EQ(both, all_labels);
    EXPECT_EQ(earliest, split - 1);
    EXPECT_THROW(ds.temporal_split(0), std::out_of_range);
    EXPECT_THROW(ds.temporal_split(long(T) + 5), std::out_of_range);
    EXPECT_THROW(temporal_split(all, -3), std::out_of_range);
}

TEST(DatasetCsv, RoundTripsExactlyWithEveryColumnOnce) {
    auto all = random_dataset(40, 8);
    const auto path = std::filesystem::temp_directory_path() / "tftdelay_dataset_roundtrip.csv";
    write_dataset_csv(path, all);
    EXPECT_EQ(read_dataset_csv(path), all);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    std::set<std::string> cols;
    std::istringstream hs(header);
    for (std::string c; std::getline(hs, c, ',');) EXPECT_TRUE(cols.insert(c).second) << c;
    EXPECT_EQ(cols.size(), 2u + 6 + 16 + 5 + 15 + 3 + 2);
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, kAirports * 40);
    std::filesystem::remove(path);
}

TEST(DatasetCsv, RejectsBadInput) {
    const auto path = std::filesystem::temp_directory_path() / "tftdelay_dataset_bad.csv";
    {
        std::ofstream out(path);
        out << "airport,t\nLGA,0\n";
    }
    EXPECT_THROW(read_dataset_csv(path), DataError);
    auto all = random_dataset(3, 9);
    write_dataset_csv(path, all);
    {
        std::ofstream out(path, std::ios::app);
        out << "XXX,3";
        for (std::size_t i = 2; i < dataset_columns().size(); ++i) out << ",0";
        out << '\n';
    }
    EXPECT_THROW(read_dataset_csv(path), DataError);
    std::filesystem::remove(path);
}
