#pragma once

#include <vector>

#include "humocon/core/graph.hpp"

// Helpers composed from graph primitives. Everything here inherits
// double-backward support from the ops it is built from.

namespace humocon::ag {

// Row maxima over the last dim, detached. Subtracting any constant leaves
// logsumexp and all its derivatives exact, so the max never needs a gradient.
template <class T>
Var<T> rowmax_const(const Var<T>& x) {
    const Shape& s = x->value.shape;
    long inner = s.back();
    long outer = x->value.numel() / inner;
    Shape os = s;
    os.back() = 1;
    Tensor<T> m(os);
    for (long o = 0; o < outer; ++o) {
        T best = x->value[o * inner];
        for (long i = 1; i < inner; ++i) best = std::max(best, x->value[o * inner + i]);
        m[o] = best;
    }
    return constant(std::move(m));
}

template <class T>
Var<T> softmax_lastdim(const Var<T>& x) {
    Var<T> z = sub(x, rowmax_const(x));
    Var<T> e = exp_v(z);
    Var<T> s = sum_axis(e, -1, true);
    return mul(e, reciprocal(s));
}

template <class T>
Var<T> log_softmax_lastdim(const Var<T>& x) {
    Var<T> z = sub(x, rowmax_const(x));
    Var<T> lse = log_v(sum_axis(exp_v(z), -1, true));
    return sub(z, lse);
}

// Mean cross-entropy of rows of `logits` against integer targets.
template <class T>
Var<T> cross_entropy_mean(const Var<T>& logits, const std::vector<long>& targets) {
    const Shape& s = logits->value.shape;
    long classes = s.back();
    long rows = logits->value.numel() / classes;
    HUMOCON_CHECK(static_cast<long>(targets.size()) == rows, humocon::ShapeError,
                  "cross_entropy targets/rows mismatch");
    Tensor<T> onehot(s);
    for (long r = 0; r < rows; ++r) {
        HUMOCON_CHECK(targets[static_cast<size_t>(r)] >= 0 &&
                          targets[static_cast<size_t>(r)] < classes,
                      humocon::ShapeError, "cross_entropy target out of range");
        onehot[r * classes + targets[static_cast<size_t>(r)]] = T(1);
    }
    Var<T> lp = log_softmax_lastdim(logits);
    Var<T> picked = sum_all(mul(lp, constant(std::move(onehot))));
    return scale(picked, T(-1) / static_cast<T>(rows));
}

// Mean squared error over all elements.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    HUMOCON_CHECK(a->value.shape == b->value.shape, humocon::ShapeError,
                  "mse shape mismatch " + shape_str(a->value.shape) + " vs " +
                      shape_str(b->value.shape));
    Var<T> d = sub(a, b);
    return mean_all(mul(d, d));
}

template <class T>
Var<T> mse_const(const Var<T>& a, const Tensor<T>& target) {
    return mse(a, constant(Tensor<T>(target)));
}

// LayerNorm over the last dim.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
    Var<T> mu = mean_axis(x, -1, true);
    Var<T> c = sub(x, mu);
    Var<T> var = mean_axis(mul(c, c), -1, true);
    Var<T> inv = reciprocal(sqrt_v(add_scalar(var, eps)));
    return add(mul(mul(c, inv), gain), bias);
}

// Row-wise L2 normalization with a small clamp on the norm.
template <class T>
Var<T> l2_normalize_rows(const Var<T>& x, T eps = T(1e-8)) {
    Var<T> n = sqrt_v(sum_axis(mul(x, x), -1, true));
    return mul(x, reciprocal(clamp_min(n, eps)));
}

// Row-wise cosine similarity between equally shaped (..., d) tensors,
// norms clamped at eps.
template <class T>
Var<T> cosine_rows(const Var<T>& a, const Var<T>& b, T eps = T(1e-8)) {
    Var<T> dot = sum_axis(mul(a, b), -1, false);
    Var<T> na = sqrt_v(sum_axis(mul(a, a), -1, false));
    Var<T> nb = sqrt_v(sum_axis(mul(b, b), -1, false));
    return mul(dot, reciprocal(mul(clamp_min(na, eps), clamp_min(nb, eps))));
}

}  // namespace humocon::ag
