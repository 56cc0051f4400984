#pragma once

#include <string>
#include <vector>

#include "humocon/nn/modules.hpp"

// Cross-modal feature alignment: per-modality projections into a shared
// space, then an InfoNCE loss over the motion frames of the same pair. A
// plain similarity-ratio form (no exp/log) is retained behind a debug mode.

namespace humocon::align {

using ag::Var;
using nn::Linear;
using nn::ParamStore;

enum class AlignMode { InfoNCE, LiteralRatio };

template <class T>
struct Projection {
    Linear<T> lin;

    Projection() = default;
    Projection(ParamStore<T>& ps, const std::string& prefix, long code_dim, long h_align,
               Rng& rng) {
        lin = Linear<T>(ps, prefix, code_dim, h_align, rng);
    }

    // (..., code_dim) -> unit-normalized (..., h_align). Zero vectors map to
    // zero via the epsilon-clamped norm.
    Var<T> forward(const Var<T>& x) const { return ag::l2_normalize_rows(lin.forward(x)); }
};

// Mean-pool per-patch tokens into one token per frame:
// (B, T*Pp, d) -> (B, T, d).
template <class T>
Var<T> pool_frames(const Var<T>& tokens, long frames, long patches_per_frame) {
    const long B = tokens->value.dim(0);
    const long d = tokens->value.dim(-1);
    Var<T> r = ag::reshape(tokens, {B, frames, patches_per_frame, d});
    return ag::mean_axis(r, 2, false);
}

// video_feats (B,T,H) or (T,H); motion_feats (B,K,H) or (K,H); both already
// normalized by the projection. align_map[i] is the positive motion frame for
// video frame i; all K motion frames of the same pair act as candidates.
template <class T>
Var<T> align_loss(const Var<T>& video_feats, const Var<T>& motion_feats,
                  const std::vector<long>& align_map, double eps,
                  AlignMode mode = AlignMode::InfoNCE) {
    HUMOCON_CHECK(eps > 0, ConfigError, "alignment temperature must be positive");
    Var<T> v = video_feats->value.ndim() == 2
                   ? ag::reshape(video_feats, {1, video_feats->value.dim(0), video_feats->value.dim(1)})
                   : video_feats;
    Var<T> m = motion_feats->value.ndim() == 2
                   ? ag::reshape(motion_feats, {1, motion_feats->value.dim(0), motion_feats->value.dim(1)})
                   : motion_feats;
    const long B = v->value.dim(0);
    const long Tn = v->value.dim(1);
    const long K = m->value.dim(1);
    HUMOCON_CHECK(static_cast<long>(align_map.size()) == Tn, ShapeError,
                  "align_map length must equal the video frame count");
    for (long i = 0; i < Tn; ++i)
        HUMOCON_CHECK(align_map[static_cast<size_t>(i)] >= 0 &&
                          align_map[static_cast<size_t>(i)] < K,
                      DomainError, "align(i) out of range");

    Var<T> sims = ag::bmm(v, m, false, true);  // (B, T, K)
    if (mode == AlignMode::LiteralRatio) {
        // Ratio of similarity shares exactly as printed; the temperature
        // cancels. Debug-only comparison path.
        Tensor<T> onehot({Tn, K});
        for (long i = 0; i < Tn; ++i) onehot[i * K + align_map[static_cast<size_t>(i)]] = T(1);
        Var<T> pos = ag::sum_axis(ag::mul(sims, ag::constant(std::move(onehot))), -1, false);
        Var<T> denom = ag::sum_axis(sims, -1, false);
        return ag::mean_all(ag::mul(pos, ag::reciprocal(denom)));
    }
    Var<T> logits = ag::scale(ag::reshape(sims, {B * Tn, K}), static_cast<T>(1.0 / eps));
    std::vector<long> targets;
    targets.reserve(static_cast<size_t>(B * Tn));
    for (long b = 0; b < B; ++b)
        for (long i = 0; i < Tn; ++i) targets.push_back(align_map[static_cast<size_t>(i)]);
    return ag::cross_entropy_mean(logits, targets);
}

}  // namespace humocon::align
