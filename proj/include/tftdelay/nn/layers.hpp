#pragma once

// Dense building blocks: linear maps, embeddings, the gated linear unit and
// the gated residual network. Row-vector convention throughout: a linear
// map computes x·W + b with W stored [in, out].
//
// Grouped variants apply an independent map per variable: input
// [N, G, in] with weight [G, in, out]. They let one block evaluate every
// per-variable network of a selection layer in a single pass.

#include <optional>
#include <string>

#include "tftdelay/nn/parameters.hpp"
#include "tftdelay/ops.hpp"

namespace tftdelay::nn {

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
    Tensor y = weight.rank() == 3 ? grouped_matmul(x, weight) : matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

inline Tensor embed(const Tensor& table, const std::vector<std::size_t>& ids) { return gather_rows(table, ids); }

inline Tensor embed(const Tensor& table, std::size_t id) {
    return reshape(gather_rows(table, {id}), {table.dim(1)});
}

class Linear {
public:
    Linear() = default;

    Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           bool with_bias = true, std::size_t groups = 0)
        : in_(in), out_(out), groups_(groups) {
        Shape ws = groups ? Shape{groups, in, out} : Shape{in, out};
        weight_ = ps.add(name + ".weight", ws, Init::Uniform, rng, in);
        if (with_bias) {
            Shape bs = groups ? Shape{groups, out} : Shape{out};
            bias_ = ps.add(name + ".bias", bs, Init::Zeros, rng);
        }
    }

    Tensor operator()(const Tensor& x) const { return linear(x, weight_, bias_); }

    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }
    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

private:
    std::size_t in_ = 0, out_ = 0, groups_ = 0;
    Tensor weight_;
    Tensor bias_;
};

class Embedding {
public:
    Embedding() = default;
    Embedding(ParameterSet& ps, const std::string& name, std::size_t rows, std::size_t dim, Rng& rng)
        : table_(ps.add(name + ".table", {rows, dim}, Init::Uniform, rng, dim)) {}

    Tensor operator()(const std::vector<std::size_t>& ids) const { return embed(table_, ids); }
    const Tensor& table() const { return table_; }
    std::size_t rows() const { return table_.dim(0); }

private:
    Tensor table_;
};

// sigmoid(x·W4 + b4) ⊙ (x·W5 + b5)
class GatedLinearUnit {
public:
    GatedLinearUnit() = default;
    GatedLinearUnit(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                    std::size_t groups = 0)
        : gate_(ps, name + ".gate", in, out, rng, true, groups),
          value_(ps, name + ".value", in, out, rng, true, groups) {}

    Tensor operator()(const Tensor& x) const { return mul(sigmoid(gate_(x)), value_(x)); }

    const Linear& gate() const { return gate_; }
    const Linear& value() const { return value_; }

private:
    Linear gate_;
    Linear value_;
};

struct GrnOptions {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    std::size_t context = 0;  // 0: no context input
    std::size_t groups = 0;   // 0: a single network
    double dropout = 0.0;
};

// Gated residual network:
//   eta2 = elu(x·W2 + b2 + c·W3)
//   eta1 = eta2·W1 + b1
//   out  = layer_norm(skip(x) + glu(dropout(eta1)))
// skip is the identity when in == out, otherwise a bias-free projection.
class GatedResidualNetwork {
public:
    GatedResidualNetwork() = default;

    GatedResidualNetwork(ParameterSet& ps, const std::string& name, const GrnOptions& o, Rng& rng) : opt_(o) {
        if (o.groups && o.context) throw std::invalid_argument("grouped GRN does not take a context");
        fc2_ = Linear(ps, name + ".fc2", o.in, o.hidden, rng, true, o.groups);
        if (o.context) context_ = Linear(ps, name + ".context", o.context, o.hidden, rng, false);
        fc1_ = Linear(ps, name + ".fc1", o.hidden, o.hidden, rng, true, o.groups);
        glu_ = GatedLinearUnit(ps, name + ".glu", o.hidden, o.out, rng, o.groups);
        if (o.in != o.out) skip_ = Linear(ps, name + ".skip", o.in, o.out, rng, false, o.groups);
        Shape ns = o.groups ? Shape{o.groups, o.out} : Shape{o.out};
        gain_ = ps.add(name + ".norm.gain", ns, Init::Ones, rng);
        shift_ = ps.add(name + ".norm.bias", ns, Init::Zeros, rng);
    }

    Tensor operator()(const Tensor& x, const Tensor& context = {}, Mode mode = {}) const {
        Tensor h = fc2_(x);
        if (context.defined()) {
            if (!opt_.context) throw std::invalid_argument("GRN built without a context input");
            h = add(h, context_(context));
        }
        h = fc1_(elu(h));
        if (mode.training && opt_.dropout > 0.0) h = dropout(h, opt_.dropout, *mode.rng, true);
        Tensor residual = opt_.in != opt_.out ? skip_(x) : x;
        return layer_norm(add(residual, glu_(h)), gain_, shift_);
    }

    const GrnOptions& options() const { return opt_; }

private:
    GrnOptions opt_;
    Linear fc2_, context_, fc1_, skip_;
    GatedLinearUnit glu_;
    Tensor gain_, shift_;
};

// Gate + add & norm used around the LSTM and attention stages:
// layer_norm(residual + glu(dropout(x))).
class GateAddNorm {
public:
    GateAddNorm() = default;
    GateAddNorm(ParameterSet& ps, const std::string& name, std::size_t d, double dropout_rate, Rng& rng)
        : glu_(ps, name + ".glu", d, d, rng),
          gain_(ps.add(name + ".norm.gain", {d}, Init::Ones, rng)),
          shift_(ps.add(name + ".norm.bias", {d}, Init::Zeros, rng)),
          dropout_(dropout_rate) {}

    Tensor operator()(const Tensor& x, const Tensor& residual, Mode mode = {}) const {
        Tensor h = mode.training && dropout_ > 0.0 ? dropout(x, dropout_, *mode.rng, true) : x;
        return layer_norm(add(residual, glu_(h)), gain_, shift_);
    }

private:
    GatedLinearUnit glu_;
    Tensor gain_, shift_;
    double dropout_ = 0.0;
};

}  // namespace tftdelay::nn
