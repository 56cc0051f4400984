#pragma once

#include <memory>
#include <string>
#include <vector>

#include "humocon/core/ops.hpp"
#include "humocon/core/rng.hpp"

namespace humocon::nn {

using ag::Var;

// Ordered registry of named leaf parameters. Order is the serialization and
// optimizer-state order, so module construction order must be deterministic.
template <class T>
struct ParamStore {
    std::vector<std::pair<std::string, Var<T>>> items;

    Var<T> param(const std::string& name, Tensor<T> init) {
        for (auto& [n, v] : items)
            HUMOCON_CHECK(n != name, ConfigError, "duplicate parameter name " + name);
        Var<T> v = ag::leaf(std::move(init), true);
        items.push_back({name, v});
        return v;
    }

    Var<T> find(const std::string& name) const {
        for (const auto& [n, v] : items)
            if (n == name) return v;
        throw ConfigError("unknown parameter " + name);
    }

    std::vector<Var<T>> vars() const {
        std::vector<Var<T>> out;
        out.reserve(items.size());
        for (const auto& [n, v] : items) out.push_back(v);
        return out;
    }

    long total_scalars() const {
        long n = 0;
        for (const auto& [k, v] : items) n += v->value.numel();
        return n;
    }
};

template <class T>
Tensor<T> init_linear_weight(long in, long out, Rng& rng) {
    Tensor<T> w({in, out});
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (long i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * s);
    return w;
}

template <class T>
Tensor<T> init_embedding(const Shape& shape, Rng& rng, double std = 0.02) {
    Tensor<T> w(shape);
    for (long i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
    return w;
}

template <class T>
struct Linear {
    Var<T> weight, bias;  // weight stored (in, out)

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& prefix, long in, long out, Rng& rng) {
        weight = ps.param(prefix + ".w", init_linear_weight<T>(in, out, rng));
        bias = ps.param(prefix + ".b", Tensor<T>::zeros({out}));
    }

    Var<T> forward(const Var<T>& x) const { return ag::add(ag::matmul(x, weight), bias); }
};

template <class T>
struct LayerNormModule {
    Var<T> gain, bias;

    LayerNormModule() = default;
    LayerNormModule(ParamStore<T>& ps, const std::string& prefix, long dim) {
        gain = ps.param(prefix + ".g", Tensor<T>::full({dim}, T(1)));
        bias = ps.param(prefix + ".b", Tensor<T>::zeros({dim}));
    }

    Var<T> forward(const Var<T>& x) const { return ag::layer_norm(x, gain, bias); }
};

// Pre-LN transformer layer; optional causal masking over the token axis.
template <class T>
struct TransformerLayer {
    long hidden = 0, heads = 0;
    Linear<T> wq, wk, wv, wo, fc1, fc2;
    LayerNormModule<T> ln1, ln2;

    TransformerLayer() = default;
    TransformerLayer(ParamStore<T>& ps, const std::string& prefix, long hidden_, long heads_,
                     long mlp_dim, Rng& rng)
        : hidden(hidden_), heads(heads_) {
        HUMOCON_CHECK(hidden % heads == 0, ConfigError, "hidden must be divisible by heads");
        wq = Linear<T>(ps, prefix + ".wq", hidden, hidden, rng);
        wk = Linear<T>(ps, prefix + ".wk", hidden, hidden, rng);
        wv = Linear<T>(ps, prefix + ".wv", hidden, hidden, rng);
        wo = Linear<T>(ps, prefix + ".wo", hidden, hidden, rng);
        fc1 = Linear<T>(ps, prefix + ".fc1", hidden, mlp_dim, rng);
        fc2 = Linear<T>(ps, prefix + ".fc2", mlp_dim, hidden, rng);
        ln1 = LayerNormModule<T>(ps, prefix + ".ln1", hidden);
        ln2 = LayerNormModule<T>(ps, prefix + ".ln2", hidden);
    }

    // x: (B, S, hidden)
    Var<T> forward(const Var<T>& x, bool causal) const {
        const long B = x->value.dim(0);
        const long S = x->value.dim(1);
        const long hd = hidden / heads;

        Var<T> h = ln1.forward(x);
        auto split_heads = [&](const Var<T>& t) {
            // (B,S,H) -> (B*heads, S, hd)
            Var<T> r = ag::reshape(t, {B, S, heads, hd});
            r = ag::transpose(r, 1, 2);
            return ag::reshape(r, {B * heads, S, hd});
        };
        Var<T> q = split_heads(wq.forward(h));
        Var<T> k = split_heads(wk.forward(h));
        Var<T> v = split_heads(wv.forward(h));
        Var<T> scores = ag::scale(ag::bmm(q, k, false, true),
                                  static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
        if (causal) {
            Tensor<T> m({S, S});
            for (long i = 0; i < S; ++i)
                for (long j = 0; j < S; ++j) m[i * S + j] = j > i ? T(-1e9) : T(0);
            scores = ag::add(scores, ag::constant(std::move(m)));
        }
        Var<T> attn = ag::softmax_lastdim(scores);
        Var<T> ctx = ag::bmm(attn, v);
        ctx = ag::reshape(ctx, {B, heads, S, hd});
        ctx = ag::transpose(ctx, 1, 2);
        ctx = ag::reshape(ctx, {B, S, hidden});
        Var<T> y = ag::add(x, wo.forward(ctx));

        Var<T> m2 = fc2.forward(ag::relu(fc1.forward(ln2.forward(y))));
        return ag::add(y, m2);
    }
};

template <class T>
struct TransformerStack {
    std::vector<TransformerLayer<T>> layers;

    TransformerStack() = default;
    TransformerStack(ParamStore<T>& ps, const std::string& prefix, long n_layers, long hidden,
                     long heads, long mlp_dim, Rng& rng) {
        for (long i = 0; i < n_layers; ++i)
            layers.emplace_back(ps, prefix + ".layer" + std::to_string(i), hidden, heads, mlp_dim,
                                rng);
    }

    Var<T> forward(Var<T> x, bool causal) const {
        for (const auto& l : layers) x = l.forward(x, causal);
        return x;
    }
};

}  // namespace humocon::nn
