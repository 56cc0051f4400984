#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "humocon/nn/modules.hpp"

// Discriminative and actionable informativeness. A hypernetwork turns each
// codebook entry into a small classifier over state features; the per-token
// gradient of the assigned code's log-score w.r.t. the pre-quantization
// feature is fed, together with the raw state, to a velocity decoder. With
// second_order enabled the velocity loss backpropagates through that gradient
// into the discriminator and encoder parameters.

namespace humocon::losses {

using ag::Var;
using nn::Linear;
using nn::ParamStore;

enum class DisMode { Multiclass, BinaryPerCode };

inline DisMode dis_mode_from_name(const std::string& s) {
    if (s == "multiclass") return DisMode::Multiclass;
    if (s == "binary") return DisMode::BinaryPerCode;
    throw ConfigError("unknown dis mode '" + s + "' (expected multiclass|binary)");
}

inline const char* dis_mode_name(DisMode m) {
    return m == DisMode::Multiclass ? "multiclass" : "binary";
}

struct DiscriminatorConfig {
    long code_dim = 32;
    long state_dim = 32;   // dim of the pre-quantization feature tokens
    long k_parts = 4;      // code chunks; k_parts-1 layers are generated
    long net_hidden = 32;  // generated network width
    long gen_hidden = 32;  // weight-generator hidden width
    double tau_dis = 10.0; // cosine-logit temperature (logit = cos / tau)
    long max_candidates = 16;
    DisMode mode = DisMode::Multiclass;

    long chunk() const { return code_dim / k_parts; }

    void validate() const {
        HUMOCON_CHECK(k_parts >= 2, ConfigError, "k_parts must be >= 2");
        HUMOCON_CHECK(code_dim % k_parts == 0, ConfigError,
                      "code_dim must be divisible by k_parts");
        HUMOCON_CHECK(tau_dis > 0, ConfigError, "tau_dis must be positive");
        HUMOCON_CHECK(max_candidates >= 2, ConfigError, "max_candidates must be >= 2");
    }
};

// Cosine head: probability from a similarity in [-1,1].
template <class T>
Var<T> score_from_cosine(const Var<T>& cos) {
    return ag::scale(ag::add_scalar(cos, T(1)), T(0.5));
}

template <class T>
struct HyperDiscriminator {
    DiscriminatorConfig cfg;
    // One 2-layer generator per generated layer; layer dims are
    //   state_dim -> net_hidden -> net_hidden -> chunk
    struct GenHead {
        Linear<T> fc1, fc2;
        long in = 0, out = 0;
    };
    std::vector<GenHead> gens;

    HyperDiscriminator() = default;
    HyperDiscriminator(ParamStore<T>& ps, const std::string& prefix, const DiscriminatorConfig& c,
                       Rng& rng)
        : cfg(c) {
        cfg.validate();
        std::vector<std::pair<long, long>> dims;
        const long layers = cfg.k_parts - 1;
        for (long j = 0; j < layers; ++j) {
            long in = j == 0 ? cfg.state_dim : cfg.net_hidden;
            long out = j == layers - 1 ? cfg.chunk() : cfg.net_hidden;
            dims.push_back({in, out});
        }
        for (long j = 0; j < layers; ++j) {
            GenHead g;
            g.in = dims[static_cast<size_t>(j)].first;
            g.out = dims[static_cast<size_t>(j)].second;
            g.fc1 = Linear<T>(ps, prefix + ".gen" + std::to_string(j) + ".fc1", cfg.chunk(),
                              cfg.gen_hidden, rng);
            g.fc2 = Linear<T>(ps, prefix + ".gen" + std::to_string(j) + ".fc2", cfg.gen_hidden,
                              g.in * g.out + g.out, rng);
            gens.push_back(std::move(g));
        }
    }

    // Generated weights for a batch of codes (C, code_dim):
    // per layer a pair {W (C,in,out), b (C,1,out)}.
    struct Generated {
        std::vector<Var<T>> w, b;
    };

    Generated generate(const Var<T>& codes) const {
        const long C = codes->value.dim(0);
        const long ch = cfg.chunk();
        Generated out;
        for (size_t j = 0; j < gens.size(); ++j) {
            Var<T> part = ag::slice(codes, 1, static_cast<long>(j) * ch, ch);
            Var<T> h = ag::tanh_v(gens[j].fc1.forward(part));
            Var<T> wb = gens[j].fc2.forward(h);  // (C, in*out + out)
            const long in = gens[j].in, o = gens[j].out;
            out.w.push_back(ag::reshape(ag::slice(wb, 1, 0, in * o), {C, in, o}));
            out.b.push_back(ag::reshape(ag::slice(wb, 1, in * o, o), {C, 1, o}));
        }
        return out;
    }

    Var<T> last_chunks(const Var<T>& codes) const {
        const long ch = cfg.chunk();
        return ag::slice(codes, 1, cfg.code_dim - ch, ch);
    }

    // Cosine similarities of every (candidate code, state token) pair.
    // codes (C, code_dim), states (S, state_dim) -> (C, S).
    Var<T> cosines_all(const Var<T>& codes, const Var<T>& states) const {
        const long C = codes->value.dim(0);
        const long S = states->value.dim(0);
        Generated gen = generate(codes);
        Var<T> x = ag::broadcast_to(ag::reshape(states, {1, S, cfg.state_dim}),
                                    {C, S, cfg.state_dim});
        for (size_t j = 0; j < gens.size(); ++j) {
            x = ag::add(ag::bmm(x, gen.w[j]), gen.b[j]);
            if (j + 1 < gens.size()) x = ag::tanh_v(x);
        }
        Var<T> tails = ag::reshape(last_chunks(codes), {C, 1, cfg.chunk()});
        return ag::cosine_rows(x, tails);  // (C, S)
    }

    // Cosine of each token against its own assigned code.
    // codes (N, code_dim), states (M, state_dim) -> (M,).
    Var<T> cosines_assigned(const Var<T>& codes, const Var<T>& states,
                            const std::vector<long>& indices) const {
        const long M = states->value.dim(0);
        HUMOCON_CHECK(static_cast<long>(indices.size()) == M, ShapeError,
                      "indices/states mismatch");
        // distinct assigned codes, then a per-token gather of generated weights
        std::vector<long> distinct(indices);
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        std::vector<long> pos_of(static_cast<size_t>(codes->value.dim(0)), -1);
        for (size_t i = 0; i < distinct.size(); ++i)
            pos_of[static_cast<size_t>(distinct[i])] = static_cast<long>(i);
        auto dist_idx = std::make_shared<std::vector<long>>(distinct);
        auto tok_pos = std::make_shared<std::vector<long>>();
        tok_pos->reserve(indices.size());
        for (long i : indices) tok_pos->push_back(pos_of[static_cast<size_t>(i)]);

        Var<T> cand = ag::index_select(codes, dist_idx);  // (C', code_dim)
        Generated gen = generate(cand);
        Var<T> x = ag::reshape(states, {M, 1, cfg.state_dim});
        for (size_t j = 0; j < gens.size(); ++j) {
            const long in = gens[j].in, o = gens[j].out;
            Var<T> wsel = ag::reshape(
                ag::index_select(ag::reshape(gen.w[j], {-1, in * o}), tok_pos), {M, in, o});
            Var<T> bsel = ag::reshape(
                ag::index_select(ag::reshape(gen.b[j], {-1, o}), tok_pos), {M, 1, o});
            x = ag::add(ag::bmm(x, wsel), bsel);
            if (j + 1 < gens.size()) x = ag::tanh_v(x);
        }
        Var<T> tails =
            ag::reshape(ag::index_select(last_chunks(cand), tok_pos), {M, 1, cfg.chunk()});
        return ag::reshape(ag::cosine_rows(x, tails), {M});
    }

    // Score of one (code, state) pair as a probability in [0,1].
    Var<T> score(const Var<T>& code, const Var<T>& state) const {
        Var<T> cos = cosines_all(ag::reshape(code, {1, cfg.code_dim}),
                                 ag::reshape(state, {1, cfg.state_dim}));
        return ag::reshape(score_from_cosine(cos), {1});
    }
};

// Multiclass read of Eq-style classification: softmax over candidate-code
// logits (cosine / tau), cross-entropy against the assigned code, averaged
// over tokens.
template <class T>
Var<T> dis_multiclass_from_cosines(const Var<T>& cosines_sc, const std::vector<long>& targets,
                                   double tau) {
    Var<T> logits = ag::scale(cosines_sc, static_cast<T>(1.0 / tau));
    return ag::cross_entropy_mean(logits, targets);
}

// Literal per-code binary cross-entropy: BCE(s_k, 1[d_i=k]) summed over
// candidates, averaged over tokens.
template <class T>
Var<T> dis_binary_from_cosines(const Var<T>& cosines_sc, const std::vector<long>& targets) {
    const long S = cosines_sc->value.dim(0);
    const long C = cosines_sc->value.dim(1);
    Var<T> s = score_from_cosine(cosines_sc);
    Tensor<T> onehot({S, C});
    for (long r = 0; r < S; ++r) onehot[r * C + targets[static_cast<size_t>(r)]] = T(1);
    Var<T> y = ag::constant(std::move(onehot));
    const T eps = T(1e-7);
    Var<T> pos = ag::mul(y, ag::log_v(ag::clamp_min(s, eps)));
    Var<T> one_minus_y = ag::add_scalar(ag::neg(y), T(1));
    Var<T> neg_t = ag::mul(one_minus_y,
                           ag::log_v(ag::clamp_min(ag::add_scalar(ag::neg(s), T(1)), eps)));
    return ag::scale(ag::sum_all(ag::add(pos, neg_t)), T(-1) / static_cast<T>(S));
}

template <class T>
struct DisLossResult {
    Var<T> loss;
    std::vector<long> candidates;  // codebook rows that were scored
};

// Candidate set: the batch's distinct assigned codes, padded with random
// other codes up to max_candidates (all codes when the book is small).
inline std::vector<long> pick_candidates(const std::vector<long>& indices, long n_codes,
                                         long max_candidates, Rng* rng) {
    std::vector<long> cand(indices);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    if (n_codes <= max_candidates) {
        cand.resize(0);
        for (long k = 0; k < n_codes; ++k) cand.push_back(k);
        return cand;
    }
    if (static_cast<long>(cand.size()) < max_candidates && rng) {
        std::vector<uint8_t> used(static_cast<size_t>(n_codes), 0);
        for (long c : cand) used[static_cast<size_t>(c)] = 1;
        while (static_cast<long>(cand.size()) < max_candidates) {
            long k = rng->uniform_int(n_codes);
            if (used[static_cast<size_t>(k)]) continue;
            used[static_cast<size_t>(k)] = 1;
            cand.push_back(k);
        }
    }
    return cand;
}

// The discriminative informativeness loss over one modality's tokens.
// codes: full codebook (N, d) as a non-grad var; states: (M, state_dim) or
// (B, S, state_dim); indices: assigned code per token.
template <class T>
DisLossResult<T> dis_loss(const HyperDiscriminator<T>& disc, const Var<T>& codes,
                          const Var<T>& states, const std::vector<long>& indices, Rng* rng) {
    Var<T> flat = ag::reshape(states, {-1, disc.cfg.state_dim});
    const long M = flat->value.dim(0);
    HUMOCON_CHECK(static_cast<long>(indices.size()) == M, ShapeError,
                  "dis_loss indices/tokens mismatch");
    std::vector<long> cand =
        pick_candidates(indices, codes->value.dim(0), disc.cfg.max_candidates, rng);
    std::vector<long> pos_of(static_cast<size_t>(codes->value.dim(0)), -1);
    for (size_t i = 0; i < cand.size(); ++i) pos_of[static_cast<size_t>(cand[i])] = static_cast<long>(i);
    std::vector<long> targets;
    targets.reserve(indices.size());
    for (long i : indices) {
        HUMOCON_CHECK(pos_of[static_cast<size_t>(i)] >= 0, DomainError,
                      "assigned code missing from candidate set");
        targets.push_back(pos_of[static_cast<size_t>(i)]);
    }
    auto cand_idx = std::make_shared<std::vector<long>>(cand);
    Var<T> cand_codes = ag::index_select(codes, cand_idx);
    Var<T> cos_cs = disc.cosines_all(cand_codes, flat);         // (C, S)
    Var<T> cos_sc = ag::transpose(cos_cs, 0, 1);                // (S, C)
    Var<T> loss = disc.cfg.mode == DisMode::Multiclass
                      ? dis_multiclass_from_cosines(cos_sc, targets, disc.cfg.tau_dis)
                      : dis_binary_from_cosines(cos_sc, targets);
    return {loss, std::move(cand)};
}

// Per-token gradient of the assigned-code log-score w.r.t. the
// pre-quantization features. With second_order the result stays attached to
// the graph; otherwise it is a constant input downstream.
template <class T>
Var<T> grad_feature(const HyperDiscriminator<T>& disc, const Var<T>& codes, const Var<T>& features,
                    const std::vector<long>& indices, bool second_order) {
    HUMOCON_CHECK(features->needs_grad, DomainError,
                  "grad_feature requires differentiable features (got a constant)");
    Shape orig = features->value.shape;
    Var<T> flat = ag::reshape(features, {-1, disc.cfg.state_dim});
    Var<T> cos = disc.cosines_assigned(codes, flat, indices);          // (M,)
    Var<T> s = ag::clamp_min(score_from_cosine(cos), T(1e-7));
    Var<T> total = ag::sum_all(ag::log_v(s));
    Var<T> g = ag::grad(total, {flat}, {.create_graph = second_order})[0];
    return ag::reshape(g, orig);
}

struct VelocityDecoderConfig {
    long state_dim = 0;  // raw per-frame state dim (P, or patch pixel dim)
    long code_dim = 0;   // gradient-feature dim
    long hidden = 64;
    long out_dim = 0;    // velocity target dim per frame/patch

    long input_dim() const { return state_dim + code_dim; }
};

// Supplementary-table input widths at full scale.
inline VelocityDecoderConfig full_scale_motion_velocity_config() {
    return {.state_dim = 263, .code_dim = 128, .hidden = 256, .out_dim = 263};
}
inline VelocityDecoderConfig full_scale_video_velocity_config() {
    // channel form: (3 pixel channels + 768 gradient channels) into the patch
    // convolution
    return {.state_dim = 3, .code_dim = 768, .hidden = 768, .out_dim = 2};
}

// Two-layer MLP velocity decoder on concat(state, gradient feature).
template <class T>
struct VelocityDecoder {
    VelocityDecoderConfig cfg;
    Linear<T> fc1, fc2;

    VelocityDecoder() = default;
    VelocityDecoder(ParamStore<T>& ps, const std::string& prefix, const VelocityDecoderConfig& c,
                    Rng& rng)
        : cfg(c) {
        HUMOCON_CHECK(cfg.input_dim() == cfg.state_dim + cfg.code_dim, ConfigError,
                      "velocity decoder input dim must be state_dim + code_dim");
        HUMOCON_CHECK(cfg.state_dim > 0 && cfg.code_dim > 0 && cfg.out_dim > 0, ConfigError,
                      "velocity decoder dims must be positive");
        fc1 = Linear<T>(ps, prefix + ".fc1", cfg.input_dim(), cfg.hidden, rng);
        fc2 = Linear<T>(ps, prefix + ".fc2", cfg.hidden, cfg.out_dim, rng);
    }

    // states (..., state_dim), grads (..., code_dim) -> (..., out_dim)
    Var<T> forward(const Var<T>& states, const Var<T>& grads) const {
        HUMOCON_CHECK(states->value.dim(-1) == cfg.state_dim, ShapeError,
                      "velocity decoder state dim mismatch");
        HUMOCON_CHECK(grads->value.dim(-1) == cfg.code_dim, ShapeError,
                      "velocity decoder gradient dim mismatch");
        Var<T> in = ag::concat<T>({states, grads}, -1);
        return fc2.forward(ag::tanh_v(fc1.forward(in)));
    }
};

// Actionable informativeness: MSE between predicted and ground-truth
// velocity.
template <class T>
Var<T> act_loss(const VelocityDecoder<T>& dec, const Var<T>& states, const Var<T>& grads,
                const Tensor<T>& velocity_target) {
    Var<T> pred = dec.forward(states, grads);
    HUMOCON_CHECK(pred->value.shape == velocity_target.shape, ShapeError,
                  "velocity target shape mismatch");
    return ag::mse_const(pred, velocity_target);
}

// Per-modality terms; absent means the modality was not in the batch, which
// is different from a zero-valued loss.
template <class T>
struct InformativenessTerms {
    std::optional<Var<T>> dis_video, dis_motion;
    std::optional<Var<T>> act_video, act_motion;

    std::optional<Var<T>> dis_total() const { return sum_opt(dis_video, dis_motion); }
    std::optional<Var<T>> act_total() const { return sum_opt(act_video, act_motion); }

    static std::optional<Var<T>> sum_opt(const std::optional<Var<T>>& a,
                                         const std::optional<Var<T>>& b) {
        if (a && b) return ag::add(*a, *b);
        if (a) return a;
        if (b) return b;
        return std::nullopt;
    }
};

// Startup self-check for the second-order path: finite differences of
// dL_act/d(discriminator params) on a 2-token toy must match autodiff.
// Throws CapabilityError when the substrate cannot differentiate through the
// gradient computation. Always probed in double: the capability is a
// property of the op set, and float resolution would drown the differences.
inline void verify_second_order_support() {
    using T = double;
    Rng rng(1234);
    ParamStore<T> ps;
    DiscriminatorConfig dc;
    dc.code_dim = 8;
    dc.state_dim = 8;
    dc.k_parts = 4;
    dc.net_hidden = 6;
    dc.gen_hidden = 6;
    HyperDiscriminator<T> disc(ps, "chk.disc", dc, rng);
    VelocityDecoder<T> vdec(ps, "chk.vel",
                            {.state_dim = 3, .code_dim = 8, .hidden = 6, .out_dim = 3}, rng);

    Tensor<T> codes_t({4, 8});
    for (long i = 0; i < codes_t.numel(); ++i) codes_t[i] = static_cast<T>(rng.normal());
    Tensor<T> f0({2, 8});
    for (long i = 0; i < f0.numel(); ++i) f0[i] = static_cast<T>(rng.normal());
    Tensor<T> st({2, 3});
    for (long i = 0; i < st.numel(); ++i) st[i] = static_cast<T>(rng.normal());
    Tensor<T> tgt({2, 3});
    for (long i = 0; i < tgt.numel(); ++i) tgt[i] = static_cast<T>(rng.normal());
    std::vector<long> idx{0, 2};

    auto loss_value = [&]() {
        Var<T> codes = ag::constant(Tensor<T>(codes_t));
        Var<T> f = ag::leaf(Tensor<T>(f0));
        Var<T> g = grad_feature(disc, codes, f, idx, /*second_order=*/true);
        return act_loss(vdec, ag::constant(Tensor<T>(st)), g, tgt);
    };

    Var<T> loss = loss_value();
    Var<T> theta = disc.gens[0].fc2.weight;
    Tensor<T> analytic = ag::grad(loss, {theta})[0]->value;

    const T h = T(1e-4);
    double worst = 0;
    for (long probe = 0; probe < 6; ++probe) {
        const long i = (probe * 131) % theta->value.numel();
        const T keep = theta->value[i];
        theta->value[i] = keep + h;
        const double fp = static_cast<double>(loss_value()->value[0]);
        theta->value[i] = keep - h;
        const double fm = static_cast<double>(loss_value()->value[0]);
        theta->value[i] = keep;
        const double num = (fp - fm) / (2.0 * static_cast<double>(h));
        const double an = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(num), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(num - an) / denom);
    }
    HUMOCON_CHECK(worst < 1e-3, CapabilityError,
                  "second-order gradient self-check failed (max rel err " + std::to_string(worst) +
                      "); the autodiff substrate cannot differentiate through gradient features");
}

}  // namespace humocon::losses
