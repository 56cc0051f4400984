#pragma once

#include <string>
#include <vector>

#include "humocon/nn/modules.hpp"

// Motion/video encoders, the masking operator, reconstruction decoders and
// the masked-reconstruction loss. Video frames are patchified host-side and
// enter the graph as constants; patch-space MSE equals pixel-space MSE since
// the element sets coincide.

namespace humocon::backbones {

using ag::Var;
using nn::Linear;
using nn::LayerNormModule;
using nn::ParamStore;
using nn::TransformerStack;

enum class Modality { Motion, Video };

struct EncoderConfig {
    Modality modality = Modality::Motion;
    // motion
    long input_dim = 10;  // P (263 at full scale)
    long seq_len = 32;    // K
    // video
    long patch_size = 16;
    long channels = 3;
    long image_h = 32, image_w = 32;
    long frames = 8;  // T
    // shared
    long hidden_dim = 64;
    long code_dim = 32;  // d, must match the paired codebook
    long num_layers = 2;
    long num_heads = 4;
    long mlp_dim = 128;

    long patches_x() const { return image_w / patch_size; }
    long patches_y() const { return image_h / patch_size; }
    long patches_per_frame() const { return patches_x() * patches_y(); }
    long patch_dim() const { return patch_size * patch_size * channels; }
    long token_count() const {
        return modality == Modality::Motion ? seq_len : frames * patches_per_frame();
    }

    void validate() const {
        HUMOCON_CHECK(hidden_dim > 0 && code_dim > 0 && num_layers > 0, ConfigError,
                      "encoder dims must be positive");
        HUMOCON_CHECK(hidden_dim % num_heads == 0, ConfigError,
                      "hidden_dim must be divisible by num_heads");
        if (modality == Modality::Video) {
            HUMOCON_CHECK(image_h % patch_size == 0 && image_w % patch_size == 0, ConfigError,
                          "patch_size must divide the image size");
        }
    }
};

// Supplementary-table scale presets, recorded for reference runs; CI trains
// only the desk scale.
inline EncoderConfig full_scale_motion_encoder_config() {
    EncoderConfig c;
    c.modality = Modality::Motion;
    c.input_dim = 263;
    c.hidden_dim = 512;
    c.code_dim = 128;
    c.num_layers = 4;
    c.num_heads = 8;
    c.mlp_dim = 1024;
    return c;
}

inline EncoderConfig full_scale_video_encoder_config() {
    EncoderConfig c;
    c.modality = Modality::Video;
    c.patch_size = 16;
    c.image_h = 256;
    c.image_w = 320;
    c.frames = 8;
    c.hidden_dim = 768;
    c.code_dim = 768;
    c.num_layers = 12;
    c.num_heads = 12;
    c.mlp_dim = 3072;
    return c;
}

// (B,T,H,W,C) clip -> (B, T*Pp, p*p*C) patch rows, row-major within a patch.
template <class T>
Tensor<T> patchify(const Tensor<T>& frames, long patch) {
    HUMOCON_CHECK(frames.ndim() == 5, ShapeError, "patchify expects (B,T,H,W,C)");
    const long B = frames.dim(0), Tn = frames.dim(1), H = frames.dim(2), W = frames.dim(3),
               C = frames.dim(4);
    const long py = H / patch, px = W / patch;
    Tensor<T> out({B, Tn * py * px, patch * patch * C});
    long row = 0;
    for (long b = 0; b < B; ++b) {
        row = 0;
        for (long t = 0; t < Tn; ++t)
            for (long gy = 0; gy < py; ++gy)
                for (long gx = 0; gx < px; ++gx) {
                    T* dst = &out[(b * Tn * py * px + row) * patch * patch * C];
                    for (long iy = 0; iy < patch; ++iy)
                        for (long ix = 0; ix < patch; ++ix) {
                            const long sy = gy * patch + iy, sx = gx * patch + ix;
                            const T* src = &frames[(((b * Tn + t) * H + sy) * W + sx) * C];
                            for (long c = 0; c < C; ++c)
                                dst[(iy * patch + ix) * C + c] = src[c];
                        }
                    ++row;
                }
    }
    return out;
}

// Inverse of patchify for a single sample's patch rows.
template <class T>
Tensor<T> unpatchify(const Tensor<T>& rows, const EncoderConfig& cfg) {
    const long p = cfg.patch_size, C = cfg.channels;
    const long py = cfg.patches_y(), px = cfg.patches_x();
    Tensor<T> out({cfg.frames, cfg.image_h, cfg.image_w, C});
    long row = 0;
    for (long t = 0; t < cfg.frames; ++t)
        for (long gy = 0; gy < py; ++gy)
            for (long gx = 0; gx < px; ++gx) {
                const T* src = &rows[row * p * p * C];
                for (long iy = 0; iy < p; ++iy)
                    for (long ix = 0; ix < p; ++ix)
                        for (long c = 0; c < C; ++c)
                            out[(((t * cfg.image_h) + gy * p + iy) * cfg.image_w + gx * p + ix) *
                                    C +
                                c] = src[(iy * p + ix) * C + c];
                ++row;
            }
    return out;
}

template <class T>
struct MotionEncoder {
    EncoderConfig cfg;
    Linear<T> stem, head;
    Var<T> pos;
    TransformerStack<T> stack;
    LayerNormModule<T> ln_out;

    MotionEncoder() = default;
    MotionEncoder(ParamStore<T>& ps, const std::string& prefix, const EncoderConfig& c, Rng& rng)
        : cfg(c) {
        cfg.validate();
        stem = Linear<T>(ps, prefix + ".stem", cfg.input_dim, cfg.hidden_dim, rng);
        pos = ps.param(prefix + ".pos", nn::init_embedding<T>({cfg.seq_len, cfg.hidden_dim}, rng));
        stack = TransformerStack<T>(ps, prefix, cfg.num_layers, cfg.hidden_dim, cfg.num_heads,
                                    cfg.mlp_dim, rng);
        ln_out = LayerNormModule<T>(ps, prefix + ".ln_out", cfg.hidden_dim);
        head = Linear<T>(ps, prefix + ".head", cfg.hidden_dim, cfg.code_dim, rng);
    }

    // poses (B,K,P) -> tokens (B,K,d)
    Var<T> forward(const Var<T>& poses) const {
        HUMOCON_CHECK(poses->value.dim(-1) == cfg.input_dim, ShapeError,
                      "motion encoder input dim mismatch: got " +
                          std::to_string(poses->value.dim(-1)) + ", config " +
                          std::to_string(cfg.input_dim));
        Var<T> x = ag::add(stem.forward(poses), pos);
        x = stack.forward(x, /*causal=*/false);
        return head.forward(ln_out.forward(x));
    }
};

template <class T>
struct VideoEncoder {
    EncoderConfig cfg;
    Linear<T> patch_embed, head;
    Var<T> pos_patch, pos_time;
    TransformerStack<T> stack;
    LayerNormModule<T> ln_out;

    VideoEncoder() = default;
    VideoEncoder(ParamStore<T>& ps, const std::string& prefix, const EncoderConfig& c, Rng& rng)
        : cfg(c) {
        cfg.validate();
        patch_embed = Linear<T>(ps, prefix + ".patch_embed", cfg.patch_dim(), cfg.hidden_dim, rng);
        pos_patch = ps.param(prefix + ".pos_patch",
                             nn::init_embedding<T>({cfg.patches_per_frame(), cfg.hidden_dim}, rng));
        pos_time =
            ps.param(prefix + ".pos_time", nn::init_embedding<T>({cfg.frames, cfg.hidden_dim}, rng));
        stack = TransformerStack<T>(ps, prefix, cfg.num_layers, cfg.hidden_dim, cfg.num_heads,
                                    cfg.mlp_dim, rng);
        ln_out = LayerNormModule<T>(ps, prefix + ".ln_out", cfg.hidden_dim);
        head = Linear<T>(ps, prefix + ".head", cfg.hidden_dim, cfg.code_dim, rng);
    }

    // Learned spatial + temporal position table, shape (T*Pp, hidden).
    Var<T> position_table() const {
        Var<T> t = ag::reshape(pos_time, {cfg.frames, 1, cfg.hidden_dim});
        Var<T> p = ag::reshape(pos_patch, {1, cfg.patches_per_frame(), cfg.hidden_dim});
        return ag::reshape(ag::add(t, p), {cfg.frames * cfg.patches_per_frame(), cfg.hidden_dim});
    }

    // patches (B, T*Pp, p*p*C) -> tokens (B, T*Pp, d)
    Var<T> forward(const Var<T>& patches) const {
        HUMOCON_CHECK(patches->value.dim(-1) == cfg.patch_dim(), ShapeError,
                      "video encoder patch dim mismatch");
        Var<T> x = ag::add(patch_embed.forward(patches), position_table());
        x = stack.forward(x, /*causal=*/false);
        return head.forward(ln_out.forward(x));
    }
};

// Causal transformer decoder shared by both modalities; the output head maps
// back to the modality's frame dim (P) or patch dim (p*p*C).
template <class T>
struct SequenceDecoder {
    long tokens = 0, out_dim = 0;
    Linear<T> stem, head;
    Var<T> pos;
    TransformerStack<T> stack;
    LayerNormModule<T> ln_out;

    SequenceDecoder() = default;
    SequenceDecoder(ParamStore<T>& ps, const std::string& prefix, long token_count, long in_dim,
                    long out_dim_, long hidden, long heads, long mlp_dim, long layers, Rng& rng)
        : tokens(token_count), out_dim(out_dim_) {
        stem = Linear<T>(ps, prefix + ".stem", in_dim, hidden, rng);
        pos = ps.param(prefix + ".pos", nn::init_embedding<T>({token_count, hidden}, rng));
        stack = TransformerStack<T>(ps, prefix, layers, hidden, heads, mlp_dim, rng);
        ln_out = LayerNormModule<T>(ps, prefix + ".ln_out", hidden);
        head = Linear<T>(ps, prefix + ".head", hidden, out_dim_, rng);
    }

    // (B,S,d) -> (B,S,out_dim)
    Var<T> forward(const Var<T>& toks) const {
        HUMOCON_CHECK(toks->value.dim(1) == tokens, ShapeError,
                      "decoder token count mismatch: got " + std::to_string(toks->value.dim(1)) +
                          ", built for " + std::to_string(tokens));
        Var<T> x = ag::add(stem.forward(toks), pos);
        x = stack.forward(x, /*causal=*/true);
        return head.forward(ln_out.forward(x));
    }
};

struct MaskSpec {
    double ratio = 0.75;
};

template <class T>
struct MaskedTokens {
    Var<T> tokens;                   // masked token matrix
    std::vector<uint8_t> mask;       // flattened (B,S); 1 = masked
    long masked_per_row = 0;
};

// Replaces round(ratio*S) tokens per row (uniform, without replacement) by
// the learned mask token. Deterministic given the rng stream.
template <class T>
MaskedTokens<T> mask_features(const Var<T>& toks, const Var<T>& mask_token, const MaskSpec& spec,
                              Rng& rng) {
    HUMOCON_CHECK(spec.ratio >= 0.0 && spec.ratio <= 1.0, ConfigError,
                  "mask ratio must lie in [0,1]");
    const long B = toks->value.ndim() == 3 ? toks->value.dim(0) : 1;
    const long S = toks->value.dim(-2);
    const long d = toks->value.dim(-1);
    const long m = std::lround(spec.ratio * static_cast<double>(S));

    MaskedTokens<T> out;
    out.masked_per_row = m;
    out.mask.assign(static_cast<size_t>(B * S), 0);
    Tensor<T> keep({B, S, 1}, T(1));
    Tensor<T> drop({B, S, 1}, T(0));
    for (long b = 0; b < B; ++b) {
        auto rows = rng.sample_without_replacement(S, m);
        for (long r : rows) {
            out.mask[static_cast<size_t>(b * S + r)] = 1;
            keep[b * S + r] = T(0);
            drop[b * S + r] = T(1);
        }
    }
    if (toks->value.ndim() == 2) {
        keep = Tensor<T>({S, 1}, std::move(keep.data));
        drop = Tensor<T>({S, 1}, std::move(drop.data));
    }
    Var<T> token_row = ag::reshape(mask_token, {1, d});
    out.tokens = ag::add(ag::mul(toks, ag::constant(std::move(keep))),
                         ag::mul(token_row, ag::constant(std::move(drop))));
    return out;
}

// Masked-reconstruction loss: mean squared error over all elements.
template <class T>
Var<T> rec_loss(const Var<T>& reconstructed, const Var<T>& original) {
    return ag::mse(reconstructed, original);
}

template <class T>
Var<T> rec_loss(const Var<T>& reconstructed, const Tensor<T>& original) {
    return ag::mse_const(reconstructed, original);
}

}  // namespace humocon::backbones
