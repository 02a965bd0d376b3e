#pragma once

#include <cmath>

#include "tftdelay/nn/layers.hpp"

namespace tftdelay::nn {

// Additive stand-in for -inf on masked logits. exp(-1e9 + s - max) underflows
// to exactly 0 for any realistic score s.
inline constexpr double kMaskedLogit = -1e9;

// Square permission matrix: allowed(i, j) means query i may attend to key j.
class AttentionMask {
public:
    AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed)
        : rows_(rows), cols_(cols), allowed_(std::move(allowed)) {
        if (rows_ != cols_) {
            throw ShapeError("attention mask must be square, got " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
        if (allowed_.size() != rows_ * cols_) throw ShapeError("attention mask size mismatch");
        for (std::size_t i = 0; i < rows_; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < cols_; ++j) {
                if (!allowed_[i * cols_ + j]) continue;
                if (j > i) {
                    throw std::invalid_argument("attention mask lets position " + std::to_string(i) +
                                                " see future position " + std::to_string(j));
                }
                any = true;
            }
            if (!any) throw std::invalid_argument("attention mask row " + std::to_string(i) + " is empty");
        }
    }

    static AttentionMask causal(std::size_t n) {
        std::vector<std::uint8_t> a(n * n, 0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) a[i * n + j] = 1;
        return {n, n, std::move(a)};
    }

    std::size_t size() const { return rows_; }
    bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * cols_ + j] != 0; }

    // [n, n] additive bias: 0 where allowed, kMaskedLogit elsewhere.
    Tensor logit_bias() const {
        std::vector<double> v(rows_ * cols_);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = allowed_[i] ? 0.0 : kMaskedLogit;
        return Tensor({rows_, cols_}, std::move(v));
    }

private:
    std::size_t rows_, cols_;
    std::vector<std::uint8_t> allowed_;
};

struct AttentionOutput {
    Tensor values;   // [B, T, d]
    Tensor weights;  // [B, heads, T, T]
};

// Interpretable multi-head attention: per-head query/key projections, one
// value projection shared by all heads, head outputs averaged (not
// concatenated) and then projected back to d.
class InterpretableAttention {
public:
    InterpretableAttention() = default;

    InterpretableAttention(ParameterSet& ps, const std::string& name, std::size_t d, std::size_t heads,
                           std::size_t d_attn, double dropout, Rng& rng)
        : d_(d), heads_(heads), d_attn_(d_attn), dropout_(dropout) {
        if (heads == 0 || d_attn == 0) throw std::invalid_argument("attention needs heads >= 1 and d_attn >= 1");
        for (std::size_t h = 0; h < heads; ++h) {
            const auto hn = name + ".head" + std::to_string(h);
            query_.emplace_back(ps, hn + ".query", d, d_attn, rng);
            key_.emplace_back(ps, hn + ".key", d, d_attn, rng);
        }
        value_ = Linear(ps, name + ".value", d, d_attn, rng);
        out_ = Linear(ps, name + ".out", d_attn, d, rng);
    }

    // queries/keys/values [B, T, d].
    AttentionOutput operator()(const Tensor& queries, const Tensor& keys, const Tensor& values,
                               const AttentionMask& mask, Mode mode = {}) const {
        const std::size_t B = queries.dim(0), T = queries.dim(1);
        if (mask.size() != T || keys.dim(1) != T || values.dim(1) != T) {
            throw ShapeError("attention mask of size " + std::to_string(mask.size()) +
                             " does not match sequence length " + std::to_string(T));
        }
        const Tensor bias = mask.logit_bias();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_attn_));
        Tensor v = value_(values);
        Tensor head_sum;
        std::vector<Tensor> weights;
        for (std::size_t h = 0; h < heads_; ++h) {
            Tensor q = query_[h](queries);
            Tensor k = key_[h](keys);
            Tensor scores = add(scale(matmul(q, transpose(k)), inv_sqrt), bias);
            Tensor a = softmax(scores, -1);
            weights.push_back(reshape(a, {B, 1, T, T}));
            if (mode.training && dropout_ > 0.0) a = dropout(a, dropout_, *mode.rng, true);
            Tensor head = matmul(a, v);
            head_sum = head_sum.defined() ? add(head_sum, head) : head;
        }
        Tensor averaged = heads_ > 1 ? scale(head_sum, 1.0 / static_cast<double>(heads_)) : head_sum;
        return {out_(averaged), heads_ > 1 ? concat(weights, 1) : weights[0]};
    }

    AttentionOutput operator()(const Tensor& x, const AttentionMask& mask, Mode mode = {}) const {
        return (*this)(x, x, x, mask, mode);
    }

    std::size_t heads() const { return heads_; }
    std::size_t attention_dim() const { return d_attn_; }

private:
    std::size_t d_ = 0, heads_ = 0, d_attn_ = 0;
    double dropout_ = 0.0;
    std::vector<Linear> query_, key_;
    Linear value_, out_;
};

}  // namespace tftdelay::nn
