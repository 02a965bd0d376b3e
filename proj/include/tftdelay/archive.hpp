#pragma once

// Weight archive: a directory holding manifest.json (name -> shape, dtype,
// byte offset) and weights.bin (little-endian float64, row-major, packed in
// manifest order).

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tftdelay/tensor.hpp"

namespace tftdelay {

class ArchiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr const char* kArchiveManifest = "manifest.json";
inline constexpr const char* kArchiveWeights = "weights.bin";

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffU) << (8 * (7 - i));
        return r;
    }
}

}  // namespace detail

inline void save_archive(const std::filesystem::path& dir, const NamedTensors& tensors) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "tftdelay-archive";
    manifest["version"] = 1;
    auto& entries = manifest["tensors"] = nlohmann::ordered_json::object();
    std::ofstream bin(dir / kArchiveWeights, std::ios::binary | std::ios::trunc);
    if (!bin) throw ArchiveError("cannot write " + (dir / kArchiveWeights).string());
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        if (entries.contains(name)) throw ArchiveError("duplicate tensor name '" + name + "'");
        entries[name] = {{"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}};
        for (double v : t.values()) {
            const auto bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v));
            bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += t.numel() * sizeof(double);
    }
    std::ofstream(dir / kArchiveManifest) << manifest.dump(2) << '\n';
}

inline NamedTensors load_archive(const std::filesystem::path& dir) {
    std::ifstream mf(dir / kArchiveManifest);
    if (!mf) throw ArchiveError("missing " + (dir / kArchiveManifest).string());
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(std::string("malformed archive manifest: ") + e.what());
    }
    std::ifstream bin(dir / kArchiveWeights, std::ios::binary);
    if (!bin) throw ArchiveError("missing " + (dir / kArchiveWeights).string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    NamedTensors out;
    for (const auto& [name, entry] : manifest.at("tensors").items()) {
        if (entry.at("dtype") != "f64") throw ArchiveError("unsupported dtype for '" + name + "'");
        const auto shape = entry.at("shape").get<Shape>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto n = numel_of(shape);
        if (offset + n * sizeof(double) > bytes.size()) {
            throw ArchiveError("tensor '" + name + "' runs past the end of weights.bin");
        }
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes.data() + offset + i * sizeof bits, sizeof bits);
            values[i] = std::bit_cast<double>(detail::to_little_endian(bits));
        }
        out.emplace_back(name, Tensor(shape, std::move(values)));
    }
    return out;
}

}  // namespace tftdelay
