#pragma once

// Differentiable tensor operations. Each op computes its forward values
// eagerly and registers a local gradient rule with the output node.
//
// Broadcasting for binary ops is limited to two forms:
//   * the smaller operand's shape is a suffix of the larger one (a bias or
//     per-position parameter repeated over leading batch dimensions);
//   * the smaller operand matches the larger one except for a trailing
//     singleton dimension (a per-row weight applied across the last axis).

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <random>

#include "tftdelay/tensor.hpp"

namespace tftdelay {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

inline double* sink(const Node& out, std::size_t i) { return out.inputs[i]->grad_sink(); }

// Maps an output flat index to an operand flat index.
struct IndexMap {
    enum class Kind { Identity, Modulo, Divide } kind = Kind::Identity;
    std::size_t n = 1;
    std::size_t operator()(std::size_t i) const {
        switch (kind) {
            case Kind::Modulo: return i % n;
            case Kind::Divide: return i / n;
            default: return i;
        }
    }
};

struct BinaryPlan {
    Shape out;
    IndexMap a;
    IndexMap b;
};

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline bool is_trailing_singleton(const Shape& small, const Shape& big) {
    if (small.size() != big.size() || small.empty() || small.back() != 1) return false;
    return std::equal(small.begin(), small.end() - 1, big.begin());
}

inline BinaryPlan plan_binary(const Shape& a, const Shape& b) {
    BinaryPlan p;
    if (a == b) {
        p.out = a;
        return p;
    }
    if (is_suffix(b, a)) {
        p.out = a;
        p.b = {IndexMap::Kind::Modulo, numel_of(b)};
        return p;
    }
    if (is_suffix(a, b)) {
        p.out = b;
        p.a = {IndexMap::Kind::Modulo, numel_of(a)};
        return p;
    }
    if (is_trailing_singleton(b, a)) {
        p.out = a;
        p.b = {IndexMap::Kind::Divide, a.back()};
        return p;
    }
    if (is_trailing_singleton(a, b)) {
        p.out = b;
        p.a = {IndexMap::Kind::Divide, b.back()};
        return p;
    }
    throw ShapeError("incompatible shapes " + to_string(a) + " and " + to_string(b));
}

// Row-major strides.
inline std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

}  // namespace detail

enum class ElementwiseOp { Add, Sub, Mul, Sigmoid, Tanh, Elu, Relu, Exp, Log, Scale };

// ---------------------------------------------------------------- binary ops

namespace detail {

template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
    const BinaryPlan plan = plan_binary(a.shape(), b.shape());
    const auto n = numel_of(plan.out);
    std::vector<double> out(n);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[plan.a(i)], bv[plan.b(i)]);
    return Tensor::from_op(plan.out, std::move(out), {a, b}, [plan, da, db](Node& self) {
        const auto& x = self.inputs[0]->value;
        const auto& y = self.inputs[1]->value;
        const auto& g = self.grad;
        if (double* ga = sink(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto ia = plan.a(i);
                ga[ia] += g[i] * da(x[ia], y[plan.b(i)]);
            }
        }
        if (double* gb = sink(self, 1)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto ib = plan.b(i);
                gb[ib] += g[i] * db(x[plan.a(i)], y[ib]);
            }
        }
    });
}

// Unary op whose derivative is expressed through the input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, Fwd fwd, Deriv deriv) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return Tensor::from_op(a.shape(), std::move(out), {a}, [deriv](Node& self) {
        double* ga = sink(self, 0);
        if (!ga) return;
        const auto& x = self.inputs[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
        }
    });
}

inline double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

// ----------------------------------------------------------------- unary ops

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(a, detail::sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// ELU with alpha = 1.
inline Tensor elu(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x <= 0.0 ? 0.0 : x; },  // NaN passes through
        [](double x, double) { return x <= 0.0 ? 0.0 : 1.0; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    }
    return detail::unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor scale(const Tensor& a, double s) {
    return detail::unary_op(
        a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {}, double factor = 1.0) {
    auto need_b = [&] {
        if (!b.defined()) throw ShapeError("binary elementwise op needs two operands");
    };
    switch (op) {
        case ElementwiseOp::Add: need_b(); return add(a, b);
        case ElementwiseOp::Sub: need_b(); return sub(a, b);
        case ElementwiseOp::Mul: need_b(); return mul(a, b);
        case ElementwiseOp::Sigmoid: return sigmoid(a);
        case ElementwiseOp::Tanh: return tanh(a);
        case ElementwiseOp::Elu: return elu(a);
        case ElementwiseOp::Relu: return relu(a);
        case ElementwiseOp::Exp: return exp(a);
        case ElementwiseOp::Log: return log(a);
        case ElementwiseOp::Scale: return scale(a, factor);
    }
    throw std::logic_error("unknown elementwise op");
}

// ------------------------------------------------------------------- matmul

// a: [m,k] or [..., m, k]; b: [k,n] (shared) or [B, k, n] matching a's batch.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    using namespace detail;
    if (a.rank() < 2 || (b.rank() != 2 && b.rank() != 3)) {
        throw ShapeError("matmul shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    const std::size_t k = a.shape().back();
    const std::size_t m = a.shape()[a.rank() - 2];
    const std::size_t batch = a.numel() / (m * k);
    const bool batched_b = b.rank() == 3;
    const std::size_t kb = b.shape()[b.rank() - 2];
    const std::size_t n = b.shape().back();
    if (kb != k || (batched_b && (a.rank() != 3 || b.shape()[0] != batch))) {
        throw ShapeError("matmul inner dimension mismatch: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(batch * m * n);
    if (!batched_b) {
        MatMap(out.data(), batch * m, n).noalias() =
            ConstMatMap(a.values().data(), batch * m, k) * ConstMatMap(b.values().data(), k, n);
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            MatMap(out.data() + i * m * n, m, n).noalias() =
                ConstMatMap(a.values().data() + i * m * k, m, k) *
                ConstMatMap(b.values().data() + i * k * n, k, n);
        }
    }
    return Tensor::from_op(std::move(out_shape), std::move(out), {a, b},
                           [batch, m, k, n, batched_b](Node& self) {
        const double* A = self.inputs[0]->value.data();
        const double* B = self.inputs[1]->value.data();
        const double* G = self.grad.data();
        double* gA = sink(self, 0);
        double* gB = sink(self, 1);
        if (!batched_b) {
            ConstMatMap g(G, batch * m, n);
            if (gA) MatMap(gA, batch * m, k).noalias() += g * ConstMatMap(B, k, n).transpose();
            if (gB) MatMap(gB, k, n).noalias() += ConstMatMap(A, batch * m, k).transpose() * g;
            return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMatMap g(G + i * m * n, m, n);
            if (gA) MatMap(gA + i * m * k, m, k).noalias() += g * ConstMatMap(B + i * k * n, k, n).transpose();
            if (gB) MatMap(gB + i * k * n, k, n).noalias() += ConstMatMap(A + i * m * k, m, k).transpose() * g;
        }
    });
}

// Per-group products: x [N, G, k] with w [G, k, n] gives [N, G, n].
inline Tensor grouped_matmul(const Tensor& x, const Tensor& w) {
    using namespace detail;
    if (x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(0) || x.dim(2) != w.dim(1)) {
        throw ShapeError("grouped_matmul shapes " + to_string(x.shape()) + " and " + to_string(w.shape()));
    }
    const std::size_t N = x.dim(0), G = x.dim(1), k = x.dim(2), n = w.dim(2);
    std::vector<double> out(N * G * n);
    for (std::size_t g = 0; g < G; ++g) {
        StridedMap(out.data() + g * n, N, n, Eigen::OuterStride<>(G * n)).noalias() =
            ConstStridedMap(x.values().data() + g * k, N, k, Eigen::OuterStride<>(G * k)) *
            ConstMatMap(w.values().data() + g * k * n, k, n);
    }
    return Tensor::from_op({N, G, n}, std::move(out), {x, w}, [N, G, k, n](Node& self) {
        const double* X = self.inputs[0]->value.data();
        const double* W = self.inputs[1]->value.data();
        double* gX = sink(self, 0);
        double* gW = sink(self, 1);
        for (std::size_t g = 0; g < G; ++g) {
            ConstStridedMap go(self.grad.data() + g * n, N, n, Eigen::OuterStride<>(G * n));
            if (gX) {
                StridedMap(gX + g * k, N, k, Eigen::OuterStride<>(G * k)).noalias() +=
                    go * ConstMatMap(W + g * k * n, k, n).transpose();
            }
            if (gW) {
                MatMap(gW + g * k * n, k, n).noalias() +=
                    ConstStridedMap(X + g * k, N, k, Eigen::OuterStride<>(G * k)).transpose() * go;
            }
        }
    });
}

// Swaps the last two axes.
inline Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + to_string(a.shape()));
    const std::size_t r = a.dim(-2), c = a.dim(-1), batch = a.numel() / (r * c);
    Shape s = a.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    std::vector<double> out(a.numel());
    const auto v = a.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = v[b * r * c + i * c + j];
    return Tensor::from_op(std::move(s), std::move(out), {a}, [batch, r, c](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
    });
}

// ------------------------------------------------------------------ softmax

// Numerically stabilized by subtracting the per-slice maximum.
inline Tensor softmax(const Tensor& a, int axis = -1) {
    const std::size_t ax = a.normalize_axis(axis);
    const std::size_t len = a.shape()[ax];
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::size_t outer = a.numel() / (len * inner);
    const auto v = a.values();
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, v[base + j * inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(v[base + j * inner] - mx);
                out[base + j * inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= sum;
        }
    }
    return Tensor::from_op(a.shape(), std::move(out), {a}, [outer, len, inner](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const auto i = base + j * inner;
                    ga[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

// ------------------------------------------------------------------- reduce

enum class ReduceOp { Sum, Mean, Max };

// Reduces over the listed axes, dropping them from the shape.
inline Tensor reduce(ReduceOp op, const Tensor& a, std::vector<int> axes) {
    std::vector<bool> reduced(a.rank(), false);
    for (int ax : axes) reduced[a.normalize_axis(ax)] = true;
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (reduced[i]) {
            if (a.shape()[i] == 0) throw ShapeError("empty reduction axis in " + to_string(a.shape()));
            count *= a.shape()[i];
        } else {
            out_shape.push_back(a.shape()[i]);
        }
    }
    if (axes.empty()) throw ShapeError("reduce needs at least one axis");

    // Flat input index -> flat output index.
    std::vector<std::size_t> out_stride_for_axis(a.rank(), 0);
    {
        std::size_t s = 1;
        for (std::size_t i = a.rank(); i-- > 0;) {
            if (!reduced[i]) {
                out_stride_for_axis[i] = s;
                s *= a.shape()[i];
            }
        }
    }
    const std::size_t n = a.numel();
    auto target = std::make_shared<std::vector<std::size_t>>(n);
    {
        std::vector<std::size_t> idx(a.rank(), 0);
        std::size_t o = 0;
        for (std::size_t f = 0; f < n; ++f) {
            (*target)[f] = o;
            for (std::size_t d = a.rank(); d-- > 0;) {
                ++idx[d];
                o += out_stride_for_axis[d];
                if (idx[d] < a.shape()[d]) break;
                o -= out_stride_for_axis[d] * idx[d];
                idx[d] = 0;
            }
        }
    }
    const auto v = a.values();
    const std::size_t m = numel_of(out_shape);
    std::vector<double> out(m, op == ReduceOp::Max ? -std::numeric_limits<double>::infinity() : 0.0);
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    if (op == ReduceOp::Max) {
        argmax->assign(m, 0);
        for (std::size_t f = 0; f < n; ++f) {
            const auto t = (*target)[f];
            if (v[f] > out[t]) {
                out[t] = v[f];
                (*argmax)[t] = f;
            }
        }
    } else {
        for (std::size_t f = 0; f < n; ++f) out[(*target)[f]] += v[f];
        if (op == ReduceOp::Mean) {
            for (auto& x : out) x /= static_cast<double>(count);
        }
    }
    return Tensor::from_op(std::move(out_shape), std::move(out), {a},
                           [op, target, argmax, count](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        const auto& g = self.grad;
        if (op == ReduceOp::Max) {
            for (std::size_t t = 0; t < g.size(); ++t) ga[(*argmax)[t]] += g[t];
            return;
        }
        const double s = op == ReduceOp::Mean ? 1.0 / static_cast<double>(count) : 1.0;
        for (std::size_t f = 0; f < target->size(); ++f) ga[f] += g[(*target)[f]] * s;
    });
}

inline Tensor sum(const Tensor& a, std::vector<int> axes) { return reduce(ReduceOp::Sum, a, std::move(axes)); }
inline Tensor mean(const Tensor& a, std::vector<int> axes) { return reduce(ReduceOp::Mean, a, std::move(axes)); }

inline Tensor sum_all(const Tensor& a) {
    std::vector<int> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    if (axes.empty()) return a;
    return reduce(ReduceOp::Sum, a, axes);
}

inline Tensor mean_all(const Tensor& a) {
    std::vector<int> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    if (axes.empty()) return a;
    return reduce(ReduceOp::Mean, a, axes);
}

// --------------------------------------------------------------- layer norm

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each slice along the last axis, then applies gain and bias.
// gain and bias shapes must be suffixes of a's shape ending in the last axis.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps) {
    if (a.rank() == 0 || a.shape().back() < 2) {
        throw ShapeError("layer_norm needs a last axis of length >= 2, got " + to_string(a.shape()));
    }
    const std::size_t L = a.shape().back();
    if (!detail::is_suffix(gain.shape(), a.shape()) || !detail::is_suffix(bias.shape(), a.shape()) ||
        gain.rank() == 0 || bias.rank() == 0) {
        throw ShapeError("layer_norm gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                         " do not fit " + to_string(a.shape()));
    }
    const std::size_t rows = a.numel() / L;
    const std::size_t ng = gain.numel(), nb = bias.numel();
    auto xhat = std::make_shared<std::vector<double>>(a.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(a.numel());
    const auto x = a.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * L;
        double mu = 0.0;
        for (std::size_t j = 0; j < L; ++j) mu += xr[j];
        mu /= static_cast<double>(L);
        double var = 0.0;
        for (std::size_t j = 0; j < L; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(L);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < L; ++j) {
            const std::size_t i = r * L + j;
            (*xhat)[i] = (xr[j] - mu) * is;
            out[i] = (*xhat)[i] * gv[i % ng] + bv[i % nb];
        }
    }
    return Tensor::from_op(a.shape(), std::move(out), {a, gain, bias},
                           [xhat, inv_std, rows, L, ng, nb](detail::Node& self) {
        const auto& g = self.grad;
        const auto& gv = self.inputs[1]->value;
        double* ga = detail::sink(self, 0);
        double* gg = detail::sink(self, 1);
        double* gb = detail::sink(self, 2);
        std::vector<double> dxhat(L);
        for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                const std::size_t i = r * L + j;
                dxhat[j] = g[i] * gv[i % ng];
                m1 += dxhat[j];
                m2 += dxhat[j] * (*xhat)[i];
                if (gg) gg[i % ng] += g[i] * (*xhat)[i];
                if (gb) gb[i % nb] += g[i];
            }
            if (!ga) continue;
            m1 /= static_cast<double>(L);
            m2 /= static_cast<double>(L);
            const double is = (*inv_std)[r];
            for (std::size_t j = 0; j < L; ++j) {
                const std::size_t i = r * L + j;
                ga[i] += is * (dxhat[j] - m1 - (*xhat)[i] * m2);
            }
        }
    });
}

// ------------------------------------------------------------ shape plumbing

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel()) {
        throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    return Tensor::from_op(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    });
}

// Elements [start, start+len) along axis.
inline Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len) {
    const std::size_t ax = a.normalize_axis(axis);
    const std::size_t full = a.shape()[ax];
    if (start + len > full || len == 0) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for axis of length " + std::to_string(full));
    }
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::size_t outer = a.numel() / (full * inner);
    Shape s = a.shape();
    s[ax] = len;
    std::vector<double> out(outer * len * inner);
    const auto v = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(v.data() + (o * full + start) * inner, len * inner, out.data() + o * len * inner);
    }
    return Tensor::from_op(std::move(s), std::move(out), {a},
                           [outer, full, start, len, inner](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + o * len * inner;
            double* dst = ga + (o * full + start) * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of an empty list");
    const std::size_t ax = parts[0].normalize_axis(axis);
    Shape s = parts[0].shape();
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        if (ps.size() != s.size()) throw ShapeError("concat rank mismatch: " + to_string(ps) + " vs " + to_string(s));
        total += ps[ax];
        ps[ax] = s[ax];
        if (ps != s) throw ShapeError("concat shape mismatch: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    }
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t outer = parts[0].numel() / (s[ax] * inner);
    s[ax] = total;
    std::vector<double> out(outer * total * inner);
    std::vector<std::size_t> lens;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t l = p.shape()[ax];
        lens.push_back(l);
        const auto v = p.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.data() + o * l * inner, l * inner, out.data() + (o * total + offset) * inner);
        }
        offset += l;
    }
    return Tensor::from_op(std::move(s), std::move(out), parts,
                           [lens, outer, total, inner](detail::Node& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
            const std::size_t l = lens[p];
            if (double* gp = detail::sink(self, p)) {
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.data() + (o * total + off) * inner;
                    double* dst = gp + o * l * inner;
                    for (std::size_t i = 0; i < l * inner; ++i) dst[i] += src[i];
                }
            }
            off += l;
        }
    });
}

// Rows of table [R, ...] selected by ids; result [ids.size(), ...].
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    if (table.rank() < 1) throw ShapeError("gather_rows needs rank >= 1");
    const std::size_t R = table.dim(0);
    const std::size_t w = table.numel() / std::max<std::size_t>(R, 1);
    for (auto id : ids) {
        if (id >= R) {
            throw std::out_of_range("category id " + std::to_string(id) + " outside table of " +
                                    std::to_string(R) + " rows");
        }
    }
    Shape s = table.shape();
    s[0] = ids.size();
    std::vector<double> out(ids.size() * w);
    const auto v = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i) std::copy_n(v.data() + ids[i] * w, w, out.data() + i * w);
    return Tensor::from_op(std::move(s), std::move(out), {table}, [ids, w](detail::Node& self) {
        double* gt = detail::sink(self, 0);
        if (!gt) return;
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < w; ++j) gt[ids[i] * w + j] += self.grad[i * w + j];
    });
}

// Repeats each slice along axis 0 `reps` times consecutively: [B, ...] -> [B*reps, ...].
inline Tensor repeat_rows(const Tensor& a, std::size_t reps) {
    if (a.rank() < 1 || reps == 0) throw ShapeError("repeat_rows on " + to_string(a.shape()));
    const std::size_t B = a.dim(0);
    const std::size_t w = a.numel() / B;
    Shape s = a.shape();
    s[0] = B * reps;
    std::vector<double> out(B * reps * w);
    const auto v = a.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < reps; ++r) std::copy_n(v.data() + b * w, w, out.data() + (b * reps + r) * w);
    return Tensor::from_op(std::move(s), std::move(out), {a}, [B, reps, w](detail::Node& self) {
        double* ga = detail::sink(self, 0);
        if (!ga) return;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t r = 0; r < reps; ++r)
                for (std::size_t j = 0; j < w; ++j) ga[b * w + j] += self.grad[(b * reps + r) * w + j];
    });
}

// Inverted dropout: kept entries are scaled by 1/(1-rate); identity when not training.
inline Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0,1)");
    if (!training || rate == 0.0) return a;
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(a.numel());
    const double s = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = keep(rng) ? s : 0.0;
    return mul(a, Tensor(a.shape(), std::move(mask)));
}

// ------------------------------------------------------------- convolutions

struct ConvGeometry {
    std::size_t batch, in_h, in_w, cin, kh, kw, cout, out_h, out_w, stride;
};

namespace detail {

// cols[(b,oy,ox), (a,c,ci)] = x[b, oy*s+a, ox*s+c, ci]
inline void im2col(const double* x, const ConvGeometry& g, double* cols) {
    const std::size_t patch = g.kh * g.kw * g.cin;
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                double* row = cols + ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for (std::size_t a = 0; a < g.kh; ++a) {
                    const double* src = x + ((b * g.in_h + oy * g.stride + a) * g.in_w + ox * g.stride) * g.cin;
                    std::copy_n(src, g.kw * g.cin, row + a * g.kw * g.cin);
                }
            }
}

// Adjoint of im2col: scatters-and-adds patch rows back into x.
inline void col2im(const double* cols, const ConvGeometry& g, double* x) {
    const std::size_t patch = g.kh * g.kw * g.cin;
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const double* row = cols + ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for (std::size_t a = 0; a < g.kh; ++a) {
                    double* dst = x + ((b * g.in_h + oy * g.stride + a) * g.in_w + ox * g.stride) * g.cin;
                    const double* src = row + a * g.kw * g.cin;
                    for (std::size_t j = 0; j < g.kw * g.cin; ++j) dst[j] += src[j];
                }
            }
}

}  // namespace detail

inline std::size_t conv_output_size(std::size_t n, std::size_t k, std::size_t stride) {
    if (k > n) {
        throw ShapeError("kernel extent " + std::to_string(k) + " exceeds input extent " + std::to_string(n));
    }
    return (n - k) / stride + 1;
}

inline std::size_t conv_transpose_output_size(std::size_t n, std::size_t k, std::size_t stride,
                                              std::size_t output_padding) {
    if (output_padding >= stride) {
        throw std::out_of_range("output_padding " + std::to_string(output_padding) +
                                " must be below stride " + std::to_string(stride));
    }
    return (n - 1) * stride + k + output_padding;
}

// Valid-padding convolution. input [H,W,Cin] or [B,H,W,Cin]; kernel [kh,kw,Cin,Cout].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride) {
    using namespace detail;
    if (stride == 0) throw std::invalid_argument("conv2d stride must be >= 1");
    if ((input.rank() != 3 && input.rank() != 4) || kernel.rank() != 4) {
        throw ShapeError("conv2d shapes " + to_string(input.shape()) + " and " + to_string(kernel.shape()));
    }
    const bool batched = input.rank() == 4;
    const std::size_t off = batched ? 1 : 0;
    ConvGeometry g{};
    g.batch = batched ? input.dim(0) : 1;
    g.in_h = input.shape()[off];
    g.in_w = input.shape()[off + 1];
    g.cin = input.shape()[off + 2];
    g.kh = kernel.dim(0);
    g.kw = kernel.dim(1);
    g.cout = kernel.dim(3);
    g.stride = stride;
    if (kernel.dim(2) != g.cin) {
        throw ShapeError("conv2d channel mismatch: input " + to_string(input.shape()) + ", kernel " +
                         to_string(kernel.shape()));
    }
    g.out_h = conv_output_size(g.in_h, g.kh, stride);
    g.out_w = conv_output_size(g.in_w, g.kw, stride);
    const std::size_t rows = g.batch * g.out_h * g.out_w;
    const std::size_t patch = g.kh * g.kw * g.cin;
    auto cols = std::make_shared<std::vector<double>>(rows * patch);
    im2col(input.values().data(), g, cols->data());
    std::vector<double> out(rows * g.cout);
    MatMap(out.data(), rows, g.cout).noalias() =
        ConstMatMap(cols->data(), rows, patch) * ConstMatMap(kernel.values().data(), patch, g.cout);
    Shape s = batched ? Shape{g.batch, g.out_h, g.out_w, g.cout} : Shape{g.out_h, g.out_w, g.cout};
    const bool keep_cols = kernel.requires_grad();
    if (!keep_cols) cols.reset();
    return Tensor::from_op(std::move(s), std::move(out), {input, kernel}, [g, cols, rows, patch](Node& self) {
        ConstMatMap go(self.grad.data(), rows, g.cout);
        if (double* gk = sink(self, 1)) {
            MatMap(gk, patch, g.cout).noalias() += ConstMatMap(cols->data(), rows, patch).transpose() * go;
        }
        if (double* gi = sink(self, 0)) {
            RowMat dcols = go * ConstMatMap(self.inputs[1]->value.data(), patch, g.cout).transpose();
            col2im(dcols.data(), g, gi);
        }
    });
}

// Transposed valid convolution, the adjoint of conv2d with the same kernel.
// input [h,w,Cin] or [B,h,w,Cin]; kernel [kh,kw,Cout,Cin] (Keras layout).
// Output extent per axis: (n-1)*stride + k + output_padding.
inline Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, std::size_t stride,
                               std::size_t pad_h, std::size_t pad_w) {
    using namespace detail;
    if (stride == 0) throw std::invalid_argument("conv2d_transpose stride must be >= 1");
    if ((input.rank() != 3 && input.rank() != 4) || kernel.rank() != 4) {
        throw ShapeError("conv2d_transpose shapes " + to_string(input.shape()) + " and " +
                         to_string(kernel.shape()));
    }
    const bool batched = input.rank() == 4;
    const std::size_t off = batched ? 1 : 0;
    // Geometry of the forward convolution this op is the adjoint of.
    ConvGeometry g{};
    g.batch = batched ? input.dim(0) : 1;
    g.out_h = input.shape()[off];
    g.out_w = input.shape()[off + 1];
    g.cout = input.shape()[off + 2];
    g.kh = kernel.dim(0);
    g.kw = kernel.dim(1);
    g.cin = kernel.dim(2);
    g.stride = stride;
    if (kernel.dim(3) != g.cout) {
        throw ShapeError("conv2d_transpose channel mismatch: input " + to_string(input.shape()) + ", kernel " +
                         to_string(kernel.shape()));
    }
    g.in_h = conv_transpose_output_size(g.out_h, g.kh, stride, pad_h);
    g.in_w = conv_transpose_output_size(g.out_w, g.kw, stride, pad_w);
    const std::size_t rows = g.batch * g.out_h * g.out_w;
    const std::size_t patch = g.kh * g.kw * g.cin;
    RowMat cols = ConstMatMap(input.values().data(), rows, g.cout) *
                  ConstMatMap(kernel.values().data(), patch, g.cout).transpose();
    std::vector<double> out(g.batch * g.in_h * g.in_w * g.cin, 0.0);
    col2im(cols.data(), g, out.data());
    Shape s = batched ? Shape{g.batch, g.in_h, g.in_w, g.cin} : Shape{g.in_h, g.in_w, g.cin};
    return Tensor::from_op(std::move(s), std::move(out), {input, kernel}, [g, rows, patch](Node& self) {
        RowMat gcols(rows, patch);
        im2col(self.grad.data(), g, gcols.data());
        if (double* gi = sink(self, 0)) {
            MatMap(gi, rows, g.cout).noalias() += gcols * ConstMatMap(self.inputs[1]->value.data(), patch, g.cout);
        }
        if (double* gk = sink(self, 1)) {
            MatMap(gk, patch, g.cout).noalias() +=
                gcols.transpose() * ConstMatMap(self.inputs[0]->value.data(), rows, g.cout);
        }
    });
}

// Operator sugar for readability inside model code.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace tftdelay
