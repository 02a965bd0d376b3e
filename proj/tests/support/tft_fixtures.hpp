#pragma once

// Small models and random batches for the forecaster tests.

#include <random>

#include "tftdelay/tft.hpp"

namespace tftdelay::testing {

// Two variables per group, covering every input kind.
inline tft::TftConfig tiny_tft_config() {
    tft::TftConfig c;
    c.d = 4;
    c.heads = 2;
    c.k = 2;
    c.tau = 2;
    c.dropout = 0.0;
    c.n_targets = 2;
    using data::VarKind;
    c.schema.static_vars = {{"site", VarKind::Categorical, 3}, {"size", VarKind::Scalar, 1}};
    c.schema.past_vars = {{"a", VarKind::Scalar, 1}, {"b", VarKind::Scalar, 1}, {"c", VarKind::Categorical, 4}};
    c.schema.future_vars = {{"u", VarKind::Scalar, 1}, {"v", VarKind::Vector, 2}};
    return c;
}

inline void fill_row(const std::vector<data::VariableSpec>& vars, std::mt19937_64& rng, double* out) {
    std::normal_distribution<double> n;
    for (const auto& v : vars) {
        if (v.kind == data::VarKind::Categorical) {
            *out++ = double(rng() % v.size);
        } else {
            for (std::size_t i = 0; i < v.size; ++i) *out++ = n(rng);
        }
    }
}

inline tft::Batch random_batch(const tft::TftConfig& c, std::size_t B, std::mt19937_64& rng) {
    using data::InputSchema;
    const std::size_t S = InputSchema::columns(c.schema.static_vars), P = InputSchema::columns(c.schema.past_vars),
                      F = InputSchema::columns(c.schema.future_vars);
    std::vector<double> st(B * S), past(B * c.k * P), fut(B * c.tau * F);
    for (std::size_t b = 0; b < B; ++b) {
        fill_row(c.schema.static_vars, rng, st.data() + b * S);
        for (std::size_t t = 0; t < c.k; ++t) fill_row(c.schema.past_vars, rng, past.data() + (b * c.k + t) * P);
        for (std::size_t t = 0; t < c.tau; ++t) fill_row(c.schema.future_vars, rng, fut.data() + (b * c.tau + t) * F);
    }
    return {Tensor({B, S}, std::move(st)), Tensor({B, c.k, P}, std::move(past)), Tensor({B, c.tau, F}, std::move(fut))};
}

}  // namespace tftdelay::testing
