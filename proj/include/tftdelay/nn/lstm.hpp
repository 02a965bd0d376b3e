#pragma once

#include <utility>

#include "tftdelay/nn/layers.hpp"

namespace tftdelay::nn {

struct LstmState {
    Tensor h;
    Tensor c;
};

// Standard LSTM cell, gate order (input, forget, candidate, output):
//   z  = x·Wx + h·Wh + b
//   c' = sigmoid(z_f) ⊙ c + sigmoid(z_i) ⊙ tanh(z_g)
//   h' = sigmoid(z_o) ⊙ tanh(c')
class LstmCell {
public:
    LstmCell() = default;
    LstmCell(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
        : hidden_(hidden),
          wx_(ps.add(name + ".wx", {in, 4 * hidden}, Init::Uniform, rng, in)),
          wh_(ps.add(name + ".wh", {hidden, 4 * hidden}, Init::Uniform, rng, hidden)),
          b_(ps.add(name + ".bias", {4 * hidden}, Init::Zeros, rng)) {}

    // x [B, in]; state tensors [B, hidden].
    LstmState step(const Tensor& x, const LstmState& s) const {
        Tensor z = add(add(matmul(x, wx_), matmul(s.h, wh_)), b_);
        const auto d = hidden_;
        Tensor i = sigmoid(slice(z, 1, 0, d));
        Tensor f = sigmoid(slice(z, 1, d, d));
        Tensor g = tanh(slice(z, 1, 2 * d, d));
        Tensor o = sigmoid(slice(z, 1, 3 * d, d));
        Tensor c = add(mul(f, s.c), mul(i, g));
        return {mul(o, tanh(c)), c};
    }

    // Unrolls over x [B, T, in]; returns outputs [B, T, hidden] and the final state.
    std::pair<Tensor, LstmState> run(const Tensor& x, LstmState s) const {
        const std::size_t B = x.dim(0), T = x.dim(1), in = x.dim(2);
        std::vector<Tensor> outs;
        outs.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            s = step(reshape(slice(x, 1, t, 1), {B, in}), s);
            outs.push_back(reshape(s.h, {B, 1, hidden_}));
        }
        return {concat(outs, 1), s};
    }

    std::size_t hidden() const { return hidden_; }

private:
    std::size_t hidden_ = 0;
    Tensor wx_, wh_, b_;
};

}  // namespace tftdelay::nn
