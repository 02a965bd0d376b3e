#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "tftdelay/archive.hpp"
#include "tftdelay/rng.hpp"
#include "tftdelay/tensor.hpp"

namespace tftdelay::nn {

enum class Init { Uniform, Glorot, Zeros, Ones };

// Named trainable tensors in registration order. Names are dotted paths
// (e.g. "tft.encoder_vsn.flat.fc1.weight") and must be unique.
class ParameterSet {
public:
    // Uniform draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); Glorot from
    // U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
    Tensor add(const std::string& name, Shape shape, Init init, Rng& rng, std::size_t fan_in = 0,
               std::size_t fan_out = 0) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
        Tensor t = Tensor::zeros(std::move(shape), true);
        if (init == Init::Ones) {
            for (auto& v : t.mutable_values()) v = 1.0;
        } else if (init == Init::Uniform || init == Init::Glorot) {
            if (fan_in == 0) throw std::invalid_argument("uniform init of '" + name + "' needs fan_in");
            const double bound = init == Init::Uniform ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                                       : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : t.mutable_values()) v = u(rng);
        }
        index_[name] = entries_.size();
        entries_.emplace_back(name, t);
        return t;
    }

    const NamedTensors& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.second.numel();
        return n;
    }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
        return entries_[it->second].second;
    }

    void zero_grad() {
        for (auto& e : entries_) e.second.zero_grad();
    }

    // Deep copy of all values, for checkpoint/restore.
    NamedTensors snapshot() const {
        NamedTensors out;
        out.reserve(entries_.size());
        for (const auto& [n, t] : entries_) out.emplace_back(n, t.detach());
        return out;
    }

    // Overwrites values in place; names and shapes must match exactly.
    void load(const NamedTensors& source) {
        if (source.size() != entries_.size()) {
            throw ArchiveError("parameter count mismatch: expected " + std::to_string(entries_.size()) +
                               ", got " + std::to_string(source.size()));
        }
        for (const auto& [name, src] : source) {
            auto it = index_.find(name);
            if (it == index_.end()) throw ArchiveError("unexpected parameter '" + name + "'");
            Tensor dst = entries_[it->second].second;
            if (dst.shape() != src.shape()) {
                throw ArchiveError("shape mismatch for '" + name + "': " + to_string(dst.shape()) + " vs " +
                                   to_string(src.shape()));
            }
            std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
        }
    }

    void save(const std::filesystem::path& dir) const { save_archive(dir, entries_); }
    void load(const std::filesystem::path& dir) { load(load_archive(dir)); }

private:
    NamedTensors entries_;
    std::map<std::string, std::size_t> index_;
};

// Forward-pass mode shared by all blocks: dropout is active only when
// training, and draws from the supplied stream.
struct Mode {
    bool training = false;
    Rng* rng = nullptr;

    static Mode eval() { return {}; }
    static Mode train(Rng& r) { return {true, &r}; }
};

}  // namespace tftdelay::nn
