#pragma once

#include "tftdelay/nn/layers.hpp"

namespace tftdelay::nn {

struct SelectionOutput {
    Tensor combined;  // [N, d]
    Tensor weights;   // [N, n_vars], rows on the simplex
};

// Variable selection network. Each of the n_vars embedded inputs passes
// through its own GRN; a flat GRN over the concatenated embeddings (plus an
// optional context) produces softmax selection weights, and the output is
// the weight-averaged per-variable result.
class VariableSelection {
public:
    VariableSelection() = default;

    VariableSelection(ParameterSet& ps, const std::string& name, std::size_t n_vars, std::size_t d,
                      std::size_t context, double dropout, Rng& rng)
        : n_vars_(n_vars), d_(d) {
        if (n_vars == 0) throw std::invalid_argument("variable selection needs at least one variable");
        // A single variable always gets weight 1, so no flat network is needed.
        if (n_vars > 1) {
            flat_ = GatedResidualNetwork(ps, name + ".flat",
                                         {n_vars * d, d, n_vars, context, 0, dropout}, rng);
        }
        per_var_ = GatedResidualNetwork(ps, name + ".vars", {d, d, d, 0, n_vars, dropout}, rng);
    }

    // vars [N, n_vars, d]; context [N, context] or undefined.
    SelectionOutput operator()(const Tensor& vars, const Tensor& context = {}, Mode mode = {}) const {
        if (vars.rank() != 3 || vars.dim(1) != n_vars_ || vars.dim(2) != d_) {
            throw ShapeError("variable selection expects [N, " + std::to_string(n_vars_) + ", " +
                             std::to_string(d_) + "], got " + to_string(vars.shape()));
        }
        const std::size_t N = vars.dim(0);
        Tensor logits = n_vars_ > 1 ? flat_(reshape(vars, {N, n_vars_ * d_}), context, mode)
                                    : Tensor::zeros({N, 1});
        Tensor weights = softmax(logits, -1);
        Tensor processed = per_var_(vars, {}, mode);
        Tensor combined = sum(mul(processed, reshape(weights, {N, n_vars_, 1})), {1});
        return {combined, weights};
    }

    // Convenience form taking one [N, d] tensor per variable.
    SelectionOutput operator()(const std::vector<Tensor>& vars, const Tensor& context = {}, Mode mode = {}) const {
        if (vars.empty()) throw std::invalid_argument("variable selection needs at least one variable");
        std::vector<Tensor> parts;
        for (const auto& v : vars) parts.push_back(reshape(v, {v.dim(0), 1, v.dim(-1)}));
        return (*this)(concat(parts, 1), context, mode);
    }

    std::size_t n_vars() const { return n_vars_; }

private:
    std::size_t n_vars_ = 0, d_ = 0;
    GatedResidualNetwork flat_;
    GatedResidualNetwork per_var_;
};

}  // namespace tftdelay::nn
