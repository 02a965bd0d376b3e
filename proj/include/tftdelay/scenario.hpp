#pragma once

// Synthetic stand-in for the weather, traffic and TMI feeds.
//
// Weather: storm cells are drifting Gaussian bumps. Cell births follow a
// Poisson process whose rate depends on a two-state (calm/active) regime and
// on hour of day. Intensity I is the sum of live bumps; VIL = round(6·I) and
// ET = round(14·min(I,1)^0.75), both clamped.
//
// Operations, per airport and quarter hour:
//   sev      = mean VIL/6 over a disk around the airport
//   aar, adr = clear rate · (1 − alpha·sev)
//   GDP      = sev > gdp_severity or arr_demand / aar > gdp_ratio
//   GS       = sev > gs_severity
//   aar_eff  = aar · (1 − gdp_rate_cut·GDP)
//   d_t      = rho·d_{t−1} + beta·max(0, demand − capacity) + gamma·sev + delta·GDP + eps,  clamped ≥ 0
// with arrival capacity aar_eff and departure capacity adr. delta < 0 is
// relief. FCA and ZNY reroute flags fire when the mean severity over their
// region exceeds a threshold; airport reroutes use a disk displaced upwind
// (inbound) or downwind (outbound) of the airport.
//
// Weather, demand and delay noise use separate random streams.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tftdelay/formulation.hpp"
#include "tftdelay/rng.hpp"
#include "tftdelay/wxcodec.hpp"

namespace tftdelay::scenario {

using data::kAirports;
using wx::WeatherGrid;

struct AirportSite {
    std::string id;
    double row = 0.5, col = 0.5;  // fractions of the grid
    double clear_aar = 10, clear_adr = 10;  // flights per quarter hour
    double load = 0.85;  // peak scheduled demand as a fraction of clear capacity
};

struct StormParams {
    double birth_rate = 0.12;       // cells per quarter hour in the active regime
    double calm_factor = 0.1;       // birth rate multiplier in the calm regime
    double p_activate = 0.015;      // calm → active per step
    double p_calm = 0.012;           // active → calm per step
    double diurnal_amplitude = 0.6; // afternoon peak at 15h
    double sigma_min = 0.07, sigma_max = 0.13;  // fractions of grid height
    double amp_min = 0.5, amp_max = 1.1;
    double speed_min = 0.004, speed_max = 0.012;  // grid widths per step
    double heading_sd = 0.45;                      // radians around due east
    double life_min = 16, life_max = 64;           // steps
};

struct CapacityParams {
    double alpha = 0.5;
    double gdp_rate_cut = 0.15;
};

struct TmiParams {
    bool enabled = true;
    double gdp_severity = 0.25;
    double gdp_ratio = 1.1;
    double gs_severity = 0.5;
    double fca_severity = 0.2;
    double zny_severity = 0.2;
    double reroute_severity = 0.25;
};

struct DelayParams {
    double rho = 0.8;
    double beta = 1.0;
    double gamma_dep = 12.0, gamma_arr = 10.0;
    double delta_dep = -1.0, delta_arr = -3.0;
    double noise = 1.5;
};

struct ScenarioConfig {
    std::uint64_t seed = 20190101;
    long T = 6000;
    std::size_t height = 96, width = 112;
    std::vector<AirportSite> airports = default_airports();
    StormParams storms;
    CapacityParams capacity;
    TmiParams tmi;
    DelayParams delay;
    double severity_radius = 0.06;  // fraction of grid height
    double demand_noise = 0.8;
    double count_noise = 0.7;
    double otp_noise = 2.0;

    // Approximate positions on a grid spanning 78W-70W, 43N-38N.
    static std::vector<AirportSite> default_airports() {
        return {{"LGA", 0.444, 0.514, 9.0, 9.0, 0.9},
                {"JFK", 0.472, 0.528, 11.0, 11.0, 0.85},
                {"EWR", 0.462, 0.479, 10.0, 10.0, 0.9},
                {"PHL", 0.626, 0.345, 12.0, 12.0, 0.8}};
    }

    static ScenarioConfig full_scale() {
        ScenarioConfig c;
        c.height = 960;
        c.width = 1072;
        return c;
    }

    // Delays driven by weather alone: capacity ignores weather, TMIs are
    // off, overage does not add delay and weather forcing is strong.
    static ScenarioConfig weather_dominated() {
        ScenarioConfig c;
        c.capacity.alpha = 0.0;
        c.tmi.enabled = false;
        c.delay.beta = 0.0;
        c.delay.rho = 0.5;
        c.delay.gamma_dep = 40.0;
        c.delay.gamma_arr = 35.0;
        c.delay.delta_dep = c.delay.delta_arr = 0.0;
        return c;
    }

    void validate(std::size_t k = 4, std::size_t tau = 16) const {
        if (airports.size() != kAirports) throw std::invalid_argument("scenario needs exactly 4 airports");
        for (std::size_t i = 0; i < kAirports; ++i) {
            const auto& a = airports[i];
            if (a.id != data::kAirportNames[i]) {
                throw std::invalid_argument("airport " + std::to_string(i) + " must be " + data::kAirportNames[i]);
            }
            if (!(a.row >= 0 && a.row < 1 && a.col >= 0 && a.col < 1)) {
                throw std::invalid_argument("airport " + a.id + " lies outside the grid");
            }
            if (!(a.clear_aar > 0 && a.clear_adr > 0 && a.load > 0)) {
                throw std::invalid_argument("airport " + a.id + " needs positive rates and load");
            }
        }
        if (T < long(k + tau + 1)) throw std::invalid_argument("T must be at least k + tau_max + 1");
        if (height < wx::kMinGridSide || width < wx::kMinGridSide) throw std::invalid_argument("grid too small");
        if (storms.birth_rate < 0 || storms.sigma_min <= 0 || storms.sigma_max < storms.sigma_min ||
            storms.life_min < 1 || storms.life_max < storms.life_min) {
            throw std::invalid_argument("invalid storm parameters");
        }
    }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AirportSite, id, row, col, clear_aar, clear_adr, load)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StormParams, birth_rate, calm_factor, p_activate, p_calm,
                                                diurnal_amplitude, sigma_min, sigma_max, amp_min, amp_max, speed_min,
                                                speed_max, heading_sd, life_min, life_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CapacityParams, alpha, gdp_rate_cut)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TmiParams, enabled, gdp_severity, gdp_ratio, gs_severity,
                                                fca_severity, zny_severity, reroute_severity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DelayParams, rho, beta, gamma_dep, gamma_arr, delta_dep, delta_arr,
                                                noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ScenarioConfig, seed, T, height, width, airports, storms, capacity,
                                                tmi, delay, severity_radius, demand_noise, count_noise, otp_noise)

// ------------------------------------------------------------- calendar

// t = 0 is 1 January 00:00; 365-day years.
inline int hour_of(long t) { return int((t / 4) % 24); }
inline int qod_of(long t) { return int(t % 96); }
inline int month_of(long t) {
    static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    long day = (t / 96) % 365;
    for (int m = 0; m < 12; ++m) {
        if (day < kDays[m]) return m + 1;
        day -= kDays[m];
    }
    return 12;
}

// --------------------------------------------------------------- weather

struct StormCell {
    long id = 0;
    double row = 0, col = 0;    // grid cells
    double vrow = 0, vcol = 0;  // grid cells per step
    double sigma = 1;           // grid cells
    double amplitude = 1;
    long born = 0;
    long life = 1;

    double envelope(long t) const {
        const double age = double(t - born) + 0.5;
        return age <= 0 || age >= double(life) ? 0.0 : std::sin(3.141592653589793 * age / double(life));
    }
};

struct CellState {
    long id;
    double row, col, sigma, intensity;
};

struct WeatherRun {
    std::vector<WeatherGrid> grids;
    std::vector<std::vector<CellState>> cells;  // live cells per step
    std::vector<int> regime;                    // 1 = active
};

// Intensity field of a set of cells at one instant, summed over bumps.
inline std::vector<double> intensity_field(std::size_t H, std::size_t W, const std::vector<CellState>& cells) {
    std::vector<double> I(H * W, 0.0);
    for (const auto& c : cells) {
        if (c.intensity <= 0.0) continue;
        const double reach = 4.0 * c.sigma;
        const long r0 = std::max(0L, long(std::floor(c.row - reach)));
        const long r1 = std::min(long(H) - 1, long(std::ceil(c.row + reach)));
        const long c0 = std::max(0L, long(std::floor(c.col - reach)));
        const long c1 = std::min(long(W) - 1, long(std::ceil(c.col + reach)));
        const double inv = 1.0 / (2.0 * c.sigma * c.sigma);
        for (long r = r0; r <= r1; ++r) {
            const double dr = double(r) - c.row;
            for (long q = c0; q <= c1; ++q) {
                const double dc = double(q) - c.col;
                I[std::size_t(r) * W + std::size_t(q)] += c.intensity * std::exp(-(dr * dr + dc * dc) * inv);
            }
        }
    }
    return I;
}

inline WeatherGrid quantize(long t, std::size_t H, std::size_t W, const std::vector<double>& I) {
    WeatherGrid g = WeatherGrid::zeros(t, H, W);
    for (std::size_t i = 0; i < I.size(); ++i) {
        const double x = std::max(0.0, I[i]);
        g.vil[i] = std::uint8_t(std::min(double(wx::kMaxVil), std::nearbyint(wx::kMaxVil * x)));
        g.et[i] = std::uint8_t(std::min(double(wx::kMaxEt), std::nearbyint(wx::kMaxEt * std::pow(std::min(x, 1.0), 0.75))));
    }
    return g;
}

inline WeatherRun gen_weather(const ScenarioConfig& cfg) {
    const auto& sp = cfg.storms;
    const double H = double(cfg.height), W = double(cfg.width);
    Rng rng = make_rng(cfg.seed, "weather");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    WeatherRun run;
    std::vector<StormCell> live;
    long next_id = 0;
    int regime = 0;
    for (long t = 0; t < cfg.T; ++t) {
        if (regime == 0 && u01(rng) < sp.p_activate) {
            regime = 1;
        } else if (regime == 1 && u01(rng) < sp.p_calm) {
            regime = 0;
        }
        const double diurnal =
            1.0 + sp.diurnal_amplitude * std::sin(2.0 * 3.141592653589793 * (double(hour_of(t)) - 9.0) / 24.0);
        const double rate = sp.birth_rate * (regime ? 1.0 : sp.calm_factor) * std::max(0.0, diurnal);
        std::poisson_distribution<int> births(rate > 0 ? rate : 1e-300);
        const int nb = rate > 0 ? births(rng) : 0;
        for (int b = 0; b < nb; ++b) {
            StormCell c;
            c.id = next_id++;
            c.sigma = H * (sp.sigma_min + (sp.sigma_max - sp.sigma_min) * u01(rng));
            c.amplitude = sp.amp_min + (sp.amp_max - sp.amp_min) * u01(rng);
            const double speed = W * (sp.speed_min + (sp.speed_max - sp.speed_min) * u01(rng));
            const double heading = sp.heading_sd * n01(rng);
            c.vcol = speed * std::cos(heading);
            c.vrow = speed * std::sin(heading);
            c.life = long(sp.life_min + (sp.life_max - sp.life_min) * u01(rng));
            // Born anywhere from a little upstream of the grid to its east edge.
            c.row = H * (-0.1 + 1.2 * u01(rng));
            c.col = W * (-0.2 + 1.1 * u01(rng));
            c.born = t;
            live.push_back(c);
        }
        std::vector<CellState> state;
        for (const auto& c : live) {
            const double age = double(t - c.born);
            state.push_back({c.id, c.row + c.vrow * age, c.col + c.vcol * age, c.sigma, c.amplitude * c.envelope(t)});
        }
        run.grids.push_back(quantize(t, cfg.height, cfg.width, intensity_field(cfg.height, cfg.width, state)));
        run.cells.push_back(std::move(state));
        run.regime.push_back(regime);
        std::erase_if(live, [t](const StormCell& c) { return t + 1 >= c.born + c.life; });
    }
    return run;
}

// Mean normalized VIL over a disk (centre and radius in grid cells).
inline double disk_severity(const WeatherGrid& g, double row, double col, double radius) {
    double s = 0.0;
    std::size_t n = 0;
    const long r0 = std::max(0L, long(std::floor(row - radius))), r1 = std::min(long(g.height) - 1, long(std::ceil(row + radius)));
    const long c0 = std::max(0L, long(std::floor(col - radius))), c1 = std::min(long(g.width) - 1, long(std::ceil(col + radius)));
    for (long r = r0; r <= r1; ++r)
        for (long c = c0; c <= c1; ++c) {
            const double dr = double(r) - row, dc = double(c) - col;
            if (dr * dr + dc * dc > radius * radius) continue;
            s += g.vil[std::size_t(r) * g.width + std::size_t(c)];
            ++n;
        }
    return n ? s / (double(n) * wx::kMaxVil) : 0.0;
}

// Axis-aligned region as grid fractions [r0, r1) x [c0, c1).
struct Region {
    const char* name;
    double r0, r1, c0, c1;
};

// The nine FCAs followed by the ZNY inbound and outbound sectors.
inline constexpr std::array<Region, data::kSharedTmis> kSharedRegions{{
    {"FCAA08", 0.15, 0.55, 0.00, 0.20},
    {"FCABW1", 0.60, 0.90, 0.15, 0.35},
    {"FCADC1", 0.70, 1.00, 0.00, 0.25},
    {"FCADC7", 0.55, 0.85, 0.00, 0.15},
    {"FCAID1", 0.30, 0.70, 0.00, 0.10},
    {"FCAN92", 0.00, 0.30, 0.30, 0.65},
    {"FCAOB1", 0.30, 0.60, 0.70, 1.00},
    {"FCAOB3", 0.55, 0.85, 0.60, 0.90},
    {"FCAOB6", 0.05, 0.35, 0.70, 1.00},
    {"ZNY_IN", 0.30, 0.60, 0.25, 0.50},
    {"ZNY_OUT", 0.35, 0.60, 0.50, 0.75},
}};

inline double region_severity(const WeatherGrid& g, const Region& r) {
    const auto rr0 = std::size_t(r.r0 * double(g.height)), rr1 = std::size_t(r.r1 * double(g.height));
    const auto cc0 = std::size_t(r.c0 * double(g.width)), cc1 = std::size_t(r.c1 * double(g.width));
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = rr0; i < rr1; ++i)
        for (std::size_t j = cc0; j < cc1; ++j, ++n) s += g.vil[i * g.width + j];
    return n ? s / (double(n) * wx::kMaxVil) : 0.0;
}

// Sixteen fixed pooling statistics: the grid is cut into 2 x 4 tiles and
// each tile contributes its mean VIL/6 and mean ET/14.
inline wx::FeatureRow fallback_features(const WeatherGrid& g) {
    wx::FeatureRow f{};
    for (std::size_t tr = 0; tr < 2; ++tr)
        for (std::size_t tc = 0; tc < 4; ++tc) {
            const std::size_t r0 = tr * g.height / 2, r1 = (tr + 1) * g.height / 2;
            const std::size_t c0 = tc * g.width / 4, c1 = (tc + 1) * g.width / 4;
            double v = 0, e = 0;
            for (std::size_t i = r0; i < r1; ++i)
                for (std::size_t j = c0; j < c1; ++j) {
                    v += g.vil[i * g.width + j];
                    e += g.et[i * g.width + j];
                }
            const double n = double((r1 - r0) * (c1 - c0));
            const std::size_t tile = tr * 4 + tc;
            f[2 * tile] = v / (n * wx::kMaxVil);
            f[2 * tile + 1] = e / (n * wx::kMaxEt);
        }
    return f;
}

// ------------------------------------------------------------ operations

struct AirportTruth {
    std::vector<double> severity, capacity_loss;  // per step; loss = 1 − aar/clear_aar
};

struct TmiActivation {
    long t;
    std::size_t airport;  // kAirports for shared flags
    std::string flag;
    std::string cause;
};

struct GroundTruth {
    std::vector<AirportTruth> airports;
    std::vector<TmiActivation> activations;
};

struct Operations {
    std::vector<data::Series> series;
    GroundTruth truth;
};

// Scheduled demand profile in [0, 1] by fractional hour: morning and
// evening banks over a daytime plateau, near zero overnight.
inline double demand_profile(double hour, bool departures) {
    auto bump = [](double h, double c, double w) {
        double d = std::fabs(h - c);
        d = std::min(d, 24.0 - d);
        return std::exp(-0.5 * d * d / (w * w));
    };
    const double morning = departures ? 7.0 : 8.5;
    const double evening = departures ? 17.5 : 18.5;
    const double plateau = 1.0 / (1.0 + std::exp(-(hour - 6.0) * 2.0)) / (1.0 + std::exp((hour - 22.5) * 2.0));
    return std::min(1.0, 0.55 * plateau + 0.45 * bump(hour, morning, 1.5) + 0.4 * bump(hour, evening, 2.0));
}

inline Operations gen_operations(const ScenarioConfig& cfg, const WeatherRun& weather,
                                 const std::vector<wx::FeatureRow>* features = nullptr) {
    if (long(weather.grids.size()) != cfg.T) throw std::invalid_argument("weather run length differs from T");
    if (features && long(features->size()) != cfg.T) throw std::invalid_argument("feature rows differ from T");
    Rng demand_rng = make_rng(cfg.seed, "demand");
    Rng noise_rng = make_rng(cfg.seed, "delay-noise");
    std::normal_distribution<double> n01(0.0, 1.0);
    const double H = double(cfg.height), W = double(cfg.width);
    const double radius = cfg.severity_radius * H;
    const auto& tp = cfg.tmi;
    const auto& dp = cfg.delay;

    Operations ops;
    ops.series.assign(kAirports, {});
    ops.truth.airports.assign(kAirports, {});
    std::array<double, kAirports> dep_d{}, arr_d{};

    for (long t = 0; t < cfg.T; ++t) {
        const auto& g = weather.grids[std::size_t(t)];
        const auto f = features ? (*features)[std::size_t(t)] : fallback_features(g);
        std::array<int, data::kSharedTmis> shared{};
        for (std::size_t i = 0; i < data::kSharedTmis; ++i) {
            const double thr = i < 9 ? tp.fca_severity : tp.zny_severity;
            const double s = region_severity(g, kSharedRegions[i]);
            if (tp.enabled && s > thr) {
                shared[i] = 1;
                ops.truth.activations.push_back({t, kAirports, kSharedRegions[i].name,
                                                 "region severity " + data::format_double(s) + " > " +
                                                     data::format_double(thr)});
            }
        }
        const double hour = double(qod_of(t)) / 4.0;
        for (std::size_t a = 0; a < kAirports; ++a) {
            const auto& site = cfg.airports[a];
            const double ar = site.row * H, ac = site.col * W;
            const double sev = disk_severity(g, ar, ac, radius);
            data::AirportRecord r;
            r.airport = a;
            r.t = t;
            r.hour = hour_of(t);
            r.qod = qod_of(t);
            r.month = month_of(t);
            r.wx = f;
            // Gaussian noise truncated at zero, rounded to whole flights.
            r.arr_demand = std::max(0.0, std::nearbyint(site.clear_aar * site.load * demand_profile(hour, false) +
                                                        cfg.demand_noise * n01(demand_rng)));
            r.dep_demand = std::max(0.0, std::nearbyint(site.clear_adr * site.load * demand_profile(hour, true) +
                                                        cfg.demand_noise * n01(demand_rng)));
            r.aar = site.clear_aar * (1.0 - cfg.capacity.alpha * sev);
            r.adr = site.clear_adr * (1.0 - cfg.capacity.alpha * sev);

            for (std::size_t i = 0; i < data::kSharedTmis; ++i) r.tmi[i] = shared[i];
            auto fire = [&](std::size_t flag, const std::string& cause) {
                r.tmi[flag] = 1;
                ops.truth.activations.push_back({t, a, data::kTmiNames[flag], cause});
            };
            if (tp.enabled) {
                const double ratio = r.aar > 0 ? r.arr_demand / r.aar : 0.0;
                if (sev > tp.gdp_severity) {
                    fire(data::kTmiGdp, "severity " + data::format_double(sev) + " > " + data::format_double(tp.gdp_severity));
                } else if (ratio > tp.gdp_ratio) {
                    fire(data::kTmiGdp, "demand/capacity " + data::format_double(ratio) + " > " +
                                            data::format_double(tp.gdp_ratio));
                }
                if (sev > tp.gs_severity) {
                    fire(data::kTmiGs, "severity " + data::format_double(sev) + " > " + data::format_double(tp.gs_severity));
                }
                const double upwind = disk_severity(g, ar, ac - 2.5 * radius, radius);
                if (upwind > tp.reroute_severity) {
                    fire(data::kTmiInReroute, "upwind severity " + data::format_double(upwind) + " > " +
                                                  data::format_double(tp.reroute_severity));
                }
                const double downwind = disk_severity(g, ar, ac + 2.5 * radius, radius);
                if (downwind > tp.reroute_severity) {
                    fire(data::kTmiOutReroute, "downwind severity " + data::format_double(downwind) + " > " +
                                                   data::format_double(tp.reroute_severity));
                }
            }
            const int gdp = r.tmi[data::kTmiGdp];
            r.aar_eff = r.aar * (1.0 - cfg.capacity.gdp_rate_cut * gdp);

            const double over_dep = std::max(0.0, r.dep_demand - r.adr);
            const double over_arr = std::max(0.0, r.arr_demand - r.aar_eff);
            dep_d[a] = std::max(0.0, dp.rho * dep_d[a] + dp.beta * over_dep + dp.gamma_dep * sev +
                                         dp.delta_dep * gdp + dp.noise * n01(noise_rng));
            arr_d[a] = std::max(0.0, dp.rho * arr_d[a] + dp.beta * over_arr + dp.gamma_arr * sev +
                                         dp.delta_arr * gdp + dp.noise * n01(noise_rng));
            r.dep_delay = dep_d[a];
            r.arr_delay = arr_d[a];
            r.departures = std::max(0.0, std::nearbyint(std::min(r.dep_demand, r.adr) + cfg.count_noise * n01(noise_rng)));
            r.arrivals = std::max(0.0, std::nearbyint(std::min(r.arr_demand, r.aar_eff) + cfg.count_noise * n01(noise_rng)));
            r.dep_otp = std::clamp(100.0 * std::exp(-r.dep_delay / 20.0) + cfg.otp_noise * n01(noise_rng), 0.0, 100.0);
            r.arr_otp = std::clamp(100.0 * std::exp(-r.arr_delay / 20.0) + cfg.otp_noise * n01(noise_rng), 0.0, 100.0);

            ops.truth.airports[a].severity.push_back(sev);
            ops.truth.airports[a].capacity_loss.push_back(1.0 - r.aar / site.clear_aar);
            ops.series[a].push_back(r);
        }
    }
    for (auto& s : ops.series) data::fill_targets(s);
    return ops;
}

// --------------------------------------------------------------- emission

inline nlohmann::ordered_json truth_json(const ScenarioConfig& cfg, const WeatherRun& w, const GroundTruth& g) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["T"] = cfg.T;
    auto& storms = j["storms"];
    storms = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < w.cells.size(); ++t) {
        nlohmann::ordered_json step;
        step["t"] = t;
        step["regime"] = w.regime[t] ? "active" : "calm";
        step["cells"] = nlohmann::ordered_json::array();
        for (const auto& c : w.cells[t]) step["cells"].push_back({c.id, c.row, c.col, c.sigma, c.intensity});
        storms.push_back(std::move(step));
    }
    for (std::size_t a = 0; a < g.airports.size(); ++a) {
        auto& aj = j["airports"][data::kAirportNames[a]];
        aj["severity"] = g.airports[a].severity;
        aj["capacity_loss"] = g.airports[a].capacity_loss;
    }
    j["tmi_activations"] = nlohmann::ordered_json::array();
    for (const auto& act : g.activations) {
        j["tmi_activations"].push_back({{"t", act.t},
                                        {"airport", act.airport < kAirports ? data::kAirportNames[act.airport] : "shared"},
                                        {"flag", act.flag},
                                        {"cause", act.cause}});
    }
    return j;
}

struct EmitOptions {
    bool write_grids = true;
    bool binary_grids = true;
};

struct Scenario {
    WeatherRun weather;
    Operations ops;
};

inline Scenario generate(const ScenarioConfig& cfg, const std::vector<wx::FeatureRow>* features = nullptr) {
    cfg.validate();
    Scenario s;
    s.weather = gen_weather(cfg);
    s.ops = gen_operations(cfg, s.weather, features);
    return s;
}

// Writes dataset.csv, wx/<grid files>, truth.json and scenario.json under dir.
inline Scenario emit_dataset(const ScenarioConfig& cfg, const std::filesystem::path& dir, EmitOptions opt = {},
                             const std::vector<wx::FeatureRow>* features = nullptr) {
    Scenario s = generate(cfg, features);
    std::filesystem::create_directories(dir);
    data::write_dataset_csv(dir / "dataset.csv", s.ops.series);
    if (opt.write_grids) {
        std::filesystem::create_directories(dir / "wx");
        for (const auto& g : s.weather.grids) wx::write_grid(dir / "wx" / wx::grid_filename(g.timestamp, opt.binary_grids), g);
    }
    {
        std::ofstream out(dir / "truth.json");
        out << truth_json(cfg, s.weather, s.ops.truth).dump() << '\n';
        if (!out) throw std::runtime_error("failed writing truth.json");
    }
    {
        std::ofstream out(dir / "scenario.json");
        out << nlohmann::json(cfg).dump(2) << '\n';
    }
    return s;
}

}  // namespace tftdelay::scenario
