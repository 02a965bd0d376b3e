#pragma once

// Convolutional autoencoder for VIL/ET weather grids.
//
// Encoder: five valid-padding 3x3 stride-2 convolutions with ELU. Decoder:
// five transposed convolutions that retrace the encoder shapes exactly, ELU
// between layers and a sigmoid on the output. The pooled feature is the
// spatial mean of the latent block.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tftdelay/nn/parameters.hpp"
#include "tftdelay/ops.hpp"

namespace tftdelay::wx {

inline constexpr int kMaxVil = 6;
inline constexpr int kMaxEt = 14;
inline constexpr std::size_t kLayers = 5;
inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kStride = 2;
inline constexpr std::size_t kMinGridSide = 95;
inline constexpr std::size_t kFeatureDim = 16;

struct WeatherGrid {
    long timestamp = 0;  // quarter-hour index
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> vil;  // row-major, levels 0..6
    std::vector<std::uint8_t> et;   // row-major, levels 0..14

    static WeatherGrid zeros(long ts, std::size_t h, std::size_t w) {
        return {ts, h, w, std::vector<std::uint8_t>(h * w, 0), std::vector<std::uint8_t>(h * w, 0)};
    }

    void validate() const {
        if (vil.size() != height * width || et.size() != height * width) {
            throw ShapeError("weather grid " + std::to_string(height) + "x" + std::to_string(width) +
                             " has mismatched level arrays");
        }
        for (std::size_t i = 0; i < vil.size(); ++i) {
            if (vil[i] > kMaxVil) throw std::out_of_range("VIL level " + std::to_string(vil[i]) + " out of range 0-6");
            if (et[i] > kMaxEt) throw std::out_of_range("ET level " + std::to_string(et[i]) + " out of range 0-14");
        }
    }

    bool operator==(const WeatherGrid&) const = default;
};

// [H, W, 2]: channel 0 = vil/6, channel 1 = et/14.
inline Tensor normalize_grid(const WeatherGrid& g) {
    g.validate();
    std::vector<double> v(g.height * g.width * 2);
    for (std::size_t i = 0; i < g.vil.size(); ++i) {
        v[2 * i] = g.vil[i] / double(kMaxVil);
        v[2 * i + 1] = g.et[i] / double(kMaxEt);
    }
    return Tensor({g.height, g.width, 2}, std::move(v));
}

// [B, H, W, 2] from grids[first, first + count).
inline Tensor normalize_batch(const std::vector<WeatherGrid>& grids, std::size_t first, std::size_t count) {
    if (count == 0 || first + count > grids.size()) throw std::out_of_range("grid batch out of range");
    const auto& g0 = grids[first];
    const std::size_t plane = g0.height * g0.width * 2;
    std::vector<double> v(count * plane);
    for (std::size_t b = 0; b < count; ++b) {
        const auto& g = grids[first + b];
        if (g.height != g0.height || g.width != g0.width) throw ShapeError("grid batch mixes sizes");
        const auto t = normalize_grid(g);
        std::copy(t.values().begin(), t.values().end(), v.begin() + b * plane);
    }
    return Tensor({count, g0.height, g0.width, 2}, std::move(v));
}

struct CodecGeometry {
    // heights[i], widths[i]: input extent of encoder layer i; index kLayers is the latent.
    std::array<std::size_t, kLayers + 1> heights{}, widths{};
    // Output padding of the decoder layer that restores heights[i] / widths[i].
    std::array<std::size_t, kLayers> pad_h{}, pad_w{};

    std::size_t latent_h() const { return heights[kLayers]; }
    std::size_t latent_w() const { return widths[kLayers]; }

    double compression_ratio(std::size_t latent_channels = kFeatureDim) const {
        return double(latent_h() * latent_w() * latent_channels) / double(heights[0] * widths[0] * 2);
    }
};

inline CodecGeometry solve_geometry(std::size_t H, std::size_t W) {
    if (H < kMinGridSide || W < kMinGridSide) {
        throw std::invalid_argument("grid " + std::to_string(H) + "x" + std::to_string(W) +
                                    " too small for the codec (need >= " + std::to_string(kMinGridSide) +
                                    " per side)");
    }
    CodecGeometry g;
    g.heights[0] = H;
    g.widths[0] = W;
    for (std::size_t i = 0; i < kLayers; ++i) {
        g.heights[i + 1] = conv_output_size(g.heights[i], kKernel, kStride);
        g.widths[i + 1] = conv_output_size(g.widths[i], kKernel, kStride);
        // (in - 1) * stride + kernel + pad == target
        g.pad_h[i] = g.heights[i] - ((g.heights[i + 1] - 1) * kStride + kKernel);
        g.pad_w[i] = g.widths[i] - ((g.widths[i + 1] - 1) * kStride + kKernel);
    }
    return g;
}

struct CodecConfig {
    std::array<std::size_t, kLayers> channels{32, 32, 24, 24, 16};
};

struct WxLatent {
    Tensor block;    // [h', w', 16]
    Tensor feature;  // [16]
};

struct ReconstructionError {
    double mae_vil = 0.0;
    double mae_et = 0.0;
    int max_abs_levels = 0;
};

// Mean/max absolute level differences after de-normalizing, rounding and
// clamping the reconstruction. recon is [H, W, 2] or [B, H, W, 2] matching grids.
inline ReconstructionError reconstruction_error(const std::vector<WeatherGrid>& grids, const Tensor& recon) {
    if (grids.empty()) return {};
    const std::size_t plane = grids[0].height * grids[0].width;
    if (recon.numel() != grids.size() * plane * 2) {
        throw ShapeError("reconstruction " + to_string(recon.shape()) + " does not match " +
                         std::to_string(grids.size()) + " grids of " + std::to_string(grids[0].height) + "x" +
                         std::to_string(grids[0].width));
    }
    const auto r = recon.values();
    ReconstructionError e;
    auto level = [](double x, int max) {
        return static_cast<int>(std::clamp(std::nearbyint(x * max), 0.0, double(max)));
    };
    for (std::size_t b = 0; b < grids.size(); ++b) {
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t o = (b * plane + i) * 2;
            const int dv = std::abs(level(r[o], kMaxVil) - grids[b].vil[i]);
            const int de = std::abs(level(r[o + 1], kMaxEt) - grids[b].et[i]);
            e.mae_vil += dv;
            e.mae_et += de;
            e.max_abs_levels = std::max({e.max_abs_levels, dv, de});
        }
    }
    const double n = double(grids.size() * plane);
    e.mae_vil /= n;
    e.mae_et /= n;
    return e;
}

inline ReconstructionError reconstruction_error(const WeatherGrid& g, const Tensor& recon) {
    return reconstruction_error(std::vector<WeatherGrid>{g}, recon);
}

class Codec {
public:
    Codec(std::size_t H, std::size_t W, Rng& rng, CodecConfig cfg = {})
        : geometry_(solve_geometry(H, W)), config_(cfg) {
        std::size_t cin = 2;
        for (std::size_t i = 0; i < kLayers; ++i) {
            const std::size_t cout = cfg.channels[i];
            const auto name = "wx.enc" + std::to_string(i);
            enc_kernel_[i] = ps_.add(name + ".kernel", {kKernel, kKernel, cin, cout}, nn::Init::Glorot, rng,
                                     kKernel * kKernel * cin, kKernel * kKernel * cout);
            enc_bias_[i] = ps_.add(name + ".bias", {cout}, nn::Init::Zeros, rng);
            cin = cout;
        }
        // Decoder layer j undoes encoder layer kLayers-1-j: it maps
        // channels[L-1-j] back to the encoder layer's input channel count.
        for (std::size_t j = 0; j < kLayers; ++j) {
            const std::size_t enc = kLayers - 1 - j;
            const std::size_t from = cfg.channels[enc];
            const std::size_t to = enc == 0 ? 2 : cfg.channels[enc - 1];
            const auto name = "wx.dec" + std::to_string(j);
            dec_kernel_[j] = ps_.add(name + ".kernel", {kKernel, kKernel, to, from}, nn::Init::Glorot, rng,
                                     kKernel * kKernel * from, kKernel * kKernel * to);
            dec_bias_[j] = ps_.add(name + ".bias", {to}, nn::Init::Zeros, rng);
        }
    }

    // x: [B, H, W, 2] → [B, h', w', 16].
    Tensor encode_block(const Tensor& x) const {
        check_input(x);
        Tensor h = x;
        for (std::size_t i = 0; i < kLayers; ++i) h = elu(add(conv2d(h, enc_kernel_[i], kStride), enc_bias_[i]));
        return h;
    }

    // block: [B, h', w', C] → [B, H, W, 2] in [0, 1].
    Tensor decode(const Tensor& block) const {
        const bool batched = block.rank() == 4;
        if ((block.rank() != 3 && !batched) || block.dim(-3) != geometry_.latent_h() ||
            block.dim(-2) != geometry_.latent_w() || block.dim(-1) != config_.channels[kLayers - 1]) {
            throw ShapeError("latent block " + to_string(block.shape()) + " does not match codec geometry " +
                             std::to_string(geometry_.latent_h()) + "x" + std::to_string(geometry_.latent_w()) +
                             "x" + std::to_string(config_.channels[kLayers - 1]));
        }
        Tensor h = block;
        for (std::size_t j = 0; j < kLayers; ++j) {
            const std::size_t enc = kLayers - 1 - j;
            h = add(conv2d_transpose(h, dec_kernel_[j], kStride, geometry_.pad_h[enc], geometry_.pad_w[enc]),
                    dec_bias_[j]);
            h = j + 1 < kLayers ? elu(h) : sigmoid(h);
        }
        return h;
    }

    Tensor reconstruct(const Tensor& x) const { return decode(encode_block(x)); }

    // Spatial mean of a block: [B, h', w', C] → [B, C] (or [h', w', C] → [C]).
    static Tensor pool(const Tensor& block) {
        return block.rank() == 4 ? mean(block, {1, 2}) : mean(block, {0, 1});
    }

    WxLatent encode(const WeatherGrid& g) const {
        check_grid(g);
        NoGradGuard ng;
        Tensor block = reshape(encode_block(normalize_grid(g)), {geometry_.latent_h(), geometry_.latent_w(),
                                                                 config_.channels[kLayers - 1]});
        return {block, pool(block)};
    }

    // Pooled features for many grids, encoded in chunks.
    std::vector<std::array<double, kFeatureDim>> features(const std::vector<WeatherGrid>& grids,
                                                          std::size_t chunk = 32) const {
        if (config_.channels[kLayers - 1] != kFeatureDim) throw std::logic_error("feature width must be 16");
        std::vector<std::array<double, kFeatureDim>> out;
        out.reserve(grids.size());
        NoGradGuard ng;
        for (std::size_t s = 0; s < grids.size(); s += chunk) {
            const std::size_t n = std::min(chunk, grids.size() - s);
            for (std::size_t b = 0; b < n; ++b) check_grid(grids[s + b]);
            const Tensor f = pool(encode_block(normalize_batch(grids, s, n)));
            for (std::size_t b = 0; b < n; ++b) {
                std::array<double, kFeatureDim> row{};
                for (std::size_t c = 0; c < kFeatureDim; ++c) row[c] = f.at(b * kFeatureDim + c);
                out.push_back(row);
            }
        }
        return out;
    }

    const CodecGeometry& geometry() const { return geometry_; }
    const CodecConfig& config() const { return config_; }
    nn::ParameterSet& parameters() { return ps_; }
    const nn::ParameterSet& parameters() const { return ps_; }

private:
    void check_grid(const WeatherGrid& g) const {
        if (g.height != geometry_.heights[0] || g.width != geometry_.widths[0]) {
            throw ShapeError("grid " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                             " does not match codec input " + std::to_string(geometry_.heights[0]) + "x" +
                             std::to_string(geometry_.widths[0]));
        }
    }

    void check_input(const Tensor& x) const {
        if ((x.rank() != 3 && x.rank() != 4) || x.dim(-3) != geometry_.heights[0] ||
            x.dim(-2) != geometry_.widths[0] || x.dim(-1) != 2) {
            throw ShapeError("codec input " + to_string(x.shape()) + " does not match geometry " +
                             std::to_string(geometry_.heights[0]) + "x" + std::to_string(geometry_.widths[0]) +
                             "x2");
        }
    }

    CodecGeometry geometry_;
    CodecConfig config_;
    nn::ParameterSet ps_;
    std::array<Tensor, kLayers> enc_kernel_, enc_bias_, dec_kernel_, dec_bias_;
};

// ------------------------------------------------------------------ file IO

// Grid files: header line "WXG v1 H W", then the VIL plane and the ET plane
// row-major. ".wxg" stores levels as ASCII integers, ".wxb" as raw bytes.
inline std::string grid_filename(long timestamp, bool binary = true) {
    std::ostringstream s;
    s << 't' << std::setw(6) << std::setfill('0') << timestamp << (binary ? ".wxb" : ".wxg");
    return s.str();
}

inline void write_grid(const std::filesystem::path& path, const WeatherGrid& g) {
    g.validate();
    const bool binary = path.extension() == ".wxb";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write grid file " + path.string());
    out << "WXG v1 " << g.height << ' ' << g.width << '\n';
    for (const auto* plane : {&g.vil, &g.et}) {
        if (binary) {
            out.write(reinterpret_cast<const char*>(plane->data()), std::streamsize(plane->size()));
            continue;
        }
        for (std::size_t r = 0; r < g.height; ++r) {
            for (std::size_t c = 0; c < g.width; ++c) {
                out << int((*plane)[r * g.width + c]) << (c + 1 < g.width ? ' ' : '\n');
            }
        }
    }
    if (!out) throw std::runtime_error("failed writing grid file " + path.string());
}

// The timestamp comes from a "t<digits>" file stem when present.
inline WeatherGrid read_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open grid file " + path.string());
    std::string magic, version;
    WeatherGrid g;
    in >> magic >> version >> g.height >> g.width;
    if (!in || magic != "WXG" || version != "v1") throw std::runtime_error("bad grid header in " + path.string());
    in.get();
    const std::string stem = path.stem().string();
    if (stem.size() > 1 && stem[0] == 't') g.timestamp = std::stol(stem.substr(1));
    const std::size_t n = g.height * g.width;
    for (auto* plane : {&g.vil, &g.et}) {
        plane->resize(n);
        if (path.extension() == ".wxb") {
            in.read(reinterpret_cast<char*>(plane->data()), std::streamsize(n));
        } else {
            for (auto& v : *plane) {
                int x = 0;
                in >> x;
                if (x < 0 || x > 255) throw std::out_of_range("grid level " + std::to_string(x) + " in " + path.string());
                v = static_cast<std::uint8_t>(x);
            }
        }
        if (!in) throw std::runtime_error("truncated grid file " + path.string());
    }
    g.validate();
    return g;
}

using FeatureRow = std::array<double, kFeatureDim>;

// CSV "timestamp,f0..f15" with round-trip precision.
inline void write_features_csv(const std::filesystem::path& path, const std::vector<long>& timestamps,
                               const std::vector<FeatureRow>& rows) {
    if (timestamps.size() != rows.size()) throw std::invalid_argument("feature rows and timestamps differ in count");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "timestamp";
    for (std::size_t c = 0; c < kFeatureDim; ++c) out << ",f" << c;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << timestamps[i];
        for (double v : rows[i]) out << ',' << v;
        out << '\n';
    }
}

inline std::pair<std::vector<long>, std::vector<FeatureRow>> read_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::pair<std::vector<long>, std::vector<FeatureRow>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream s(line);
        std::string cell;
        std::getline(s, cell, ',');
        out.first.push_back(std::stol(cell));
        FeatureRow row{};
        for (auto& v : row) {
            if (!std::getline(s, cell, ',')) throw std::runtime_error("short feature row in " + path.string());
            v = std::stod(cell);
        }
        out.second.push_back(row);
    }
    return out;
}

}  // namespace tftdelay::wx
