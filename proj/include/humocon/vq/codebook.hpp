#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "humocon/core/graph.hpp"
#include "humocon/core/ops.hpp"
#include "humocon/core/rng.hpp"

// EMA vector-quantization codebook: nearest-neighbor assignment with
// straight-through gradients, exponential-moving-average code updates,
// Laplace-smoothed normalization, utilization diagnostics and dead-code
// reinitialization. Codes never receive autodiff gradients.

namespace humocon::vq {

using ag::Var;

template <class T>
struct Codebook {
    Tensor<T> codes;         // N x d
    Tensor<T> cluster_size;  // N, EMA of assignment counts
    Tensor<T> embed_sum;     // N x d, EMA of assigned-feature sums
    std::vector<long> steps_since_used;
    T decay = T(0.99);
    T laplace_eps = T(1e-5);
    long dead_threshold = 200;
    bool data_initialized = false;

    long size() const { return codes.dim(0); }
    long dim() const { return codes.dim(1); }

    static Codebook init_random(long n, long d, Rng& rng, double scale = 0.1) {
        HUMOCON_CHECK(n >= 2, ConfigError, "codebook needs at least 2 codes");
        Codebook cb;
        cb.codes = Tensor<T>({n, d});
        for (long i = 0; i < cb.codes.numel(); ++i)
            cb.codes[i] = static_cast<T>(rng.normal() * scale);
        cb.cluster_size = Tensor<T>::full({n}, T(1));
        cb.embed_sum = cb.codes;
        cb.steps_since_used.assign(static_cast<size_t>(n), 0);
        return cb;
    }
};

template <class T>
struct QuantizeResult {
    std::vector<long> indices;  // per token
    Tensor<T> vectors;          // codes[indices], same shape as input
};

// Exhaustive nearest-neighbor scan with squared L2 distance; ties broken by
// the lowest code index. `features` is (..., d) and is flattened token-major.
template <class T>
QuantizeResult<T> quantize_tensor(const Tensor<T>& features, const Codebook<T>& cb) {
    const long d = cb.dim();
    HUMOCON_CHECK(features.ndim() >= 1 && features.shape.back() == d, ShapeError,
                  "feature dim " + shape_str(features.shape) + " does not match codebook dim " +
                      std::to_string(d));
    const long m = features.numel() / d;
    const long n = cb.size();
    QuantizeResult<T> out;
    out.indices.resize(static_cast<size_t>(m));
    out.vectors = Tensor<T>(features.shape);
    for (long t = 0; t < m; ++t) {
        const T* f = &features[t * d];
        T best = std::numeric_limits<T>::max();
        long arg = 0;
        for (long k = 0; k < n; ++k) {
            const T* c = &cb.codes[k * d];
            T acc = 0;
            for (long j = 0; j < d; ++j) {
                const T diff = f[j] - c[j];
                acc += diff * diff;
            }
            if (acc < best) {
                best = acc;
                arg = k;
            }
        }
        out.indices[static_cast<size_t>(t)] = arg;
        std::copy(&cb.codes[arg * d], &cb.codes[arg * d] + d, &out.vectors[t * d]);
    }
    return out;
}

// Quantized view of a feature node. `st` carries the quantized values in the
// forward pass and routes gradients to `input_features` unchanged; codes get
// none.
template <class T>
struct QuantizedFeatures {
    std::vector<long> indices;
    Tensor<T> vectors;
    Var<T> input_features;
    Var<T> st;
};

template <class T>
QuantizedFeatures<T> quantize(const Var<T>& features, const Codebook<T>& cb) {
    QuantizeResult<T> q = quantize_tensor(features->value, cb);
    QuantizedFeatures<T> out;
    out.indices = std::move(q.indices);
    out.vectors = q.vectors;
    out.input_features = features;
    out.st = ag::straight_through(features, std::move(q.vectors));
    return out;
}

// EMA statistics update followed by the Laplace-smoothed code re-estimate.
template <class T>
void ema_update(Codebook<T>& cb, const Tensor<T>& features, const std::vector<long>& indices) {
    const long n = cb.size(), d = cb.dim();
    const long m = features.numel() / d;
    HUMOCON_CHECK(static_cast<long>(indices.size()) == m, ShapeError,
                  "indices/features mismatch in ema_update");
    std::vector<T> count(static_cast<size_t>(n), T(0));
    std::vector<T> sum(static_cast<size_t>(n * d), T(0));
    for (long t = 0; t < m; ++t) {
        const long k = indices[static_cast<size_t>(t)];
        count[static_cast<size_t>(k)] += T(1);
        const T* f = &features[t * d];
        T* s = &sum[static_cast<size_t>(k * d)];
        for (long j = 0; j < d; ++j) s[j] += f[j];
    }
    const T g = cb.decay;
    for (long k = 0; k < n; ++k) {
        cb.cluster_size[k] = g * cb.cluster_size[k] + (T(1) - g) * count[static_cast<size_t>(k)];
        for (long j = 0; j < d; ++j)
            cb.embed_sum[k * d + j] =
                g * cb.embed_sum[k * d + j] + (T(1) - g) * sum[static_cast<size_t>(k * d + j)];
        if (count[static_cast<size_t>(k)] > 0) {
            cb.steps_since_used[static_cast<size_t>(k)] = 0;
        } else {
            cb.steps_since_used[static_cast<size_t>(k)]++;
        }
    }
    T total = 0;
    for (long k = 0; k < n; ++k) total += cb.cluster_size[k];
    for (long k = 0; k < n; ++k) {
        const T smoothed =
            (cb.cluster_size[k] + cb.laplace_eps) / (total + static_cast<T>(n) * cb.laplace_eps) * total;
        for (long j = 0; j < d; ++j) cb.codes[k * d + j] = cb.embed_sum[k * d + j] / smoothed;
    }
}

// exp(entropy) of the empirical code distribution; range [1, N].
inline double perplexity(const std::vector<long>& indices, long n) {
    HUMOCON_CHECK(!indices.empty(), DomainError, "perplexity of empty index set");
    std::vector<double> p(static_cast<size_t>(n), 0.0);
    for (long i : indices) p[static_cast<size_t>(i)] += 1.0;
    double h = 0;
    const double m = static_cast<double>(indices.size());
    for (double c : p) {
        if (c == 0) continue;
        const double q = c / m;
        h -= q * std::log(q);
    }
    return std::exp(h);
}

// Codes unused for >= dead_threshold consecutive update steps are replaced by
// a uniformly sampled input feature. Returns the number reinitialized.
template <class T>
long reinit_dead_codes(Codebook<T>& cb, const Tensor<T>& features, Rng& rng) {
    const long d = cb.dim();
    const long m = features.numel() / d;
    HUMOCON_CHECK(m > 0, DomainError, "reinit_dead_codes needs a nonempty feature batch");
    long hits = 0;
    for (long k = 0; k < cb.size(); ++k) {
        if (cb.steps_since_used[static_cast<size_t>(k)] < cb.dead_threshold) continue;
        const long pick = rng.uniform_int(m);
        for (long j = 0; j < d; ++j) {
            cb.codes[k * d + j] = features[pick * d + j];
            cb.embed_sum[k * d + j] = cb.codes[k * d + j];
        }
        cb.cluster_size[k] = T(1);
        cb.steps_since_used[static_cast<size_t>(k)] = 0;
        ++hits;
    }
    return hits;
}

// One-time data-dependent init: codes snap to sampled feature rows (plus tiny
// jitter so duplicates split). Deterministic given the rng stream.
template <class T>
void maybe_data_init(Codebook<T>& cb, const Tensor<T>& features, Rng& rng) {
    if (cb.data_initialized) return;
    const long d = cb.dim();
    const long m = features.numel() / d;
    for (long k = 0; k < cb.size(); ++k) {
        const long pick = rng.uniform_int(m);
        for (long j = 0; j < d; ++j)
            cb.codes[k * d + j] =
                features[pick * d + j] + static_cast<T>(rng.normal() * 1e-3);
        cb.cluster_size[k] = T(1);
        for (long j = 0; j < d; ++j) cb.embed_sum[k * d + j] = cb.codes[k * d + j];
    }
    cb.data_initialized = true;
}

// Commitment term beta*||F - stopgrad(D)||^2 (mean over elements).
template <class T>
Var<T> commitment_loss(const QuantizedFeatures<T>& q) {
    return ag::mse_const(q.input_features, q.vectors);
}

}  // namespace humocon::vq
