#pragma once

#include <string>
#include <vector>

#include "humocon/align/alignment.hpp"
#include "humocon/losses/info.hpp"
#include "humocon/nn/backbones.hpp"
#include "humocon/synth/synth.hpp"
#include "humocon/train/config.hpp"
#include "humocon/vq/codebook.hpp"

namespace humocon::train {

using ag::Var;

// Full two-branch model. Construction order is fixed; it defines the
// parameter ordering used by the optimizer state and checkpoints.
template <class T>
struct Model {
    ModelConfig mc;
    synth::SceneSpec scene;
    nn::ParamStore<T> params;

    backbones::EncoderConfig ecfg_m, ecfg_v;
    backbones::MotionEncoder<T> enc_m;
    backbones::SequenceDecoder<T> dec_m;
    Var<T> mask_m;
    backbones::VideoEncoder<T> enc_v;
    backbones::SequenceDecoder<T> dec_v;
    Var<T> mask_v;
    losses::HyperDiscriminator<T> disc_m, disc_v;
    losses::VelocityDecoder<T> vel_m, vel_v;
    align::Projection<T> proj_m, proj_v;
    vq::Codebook<T> cb_m, cb_v;

    Model(const ModelConfig& mcfg, const synth::SceneSpec& sc, uint64_t seed)
        : mc(mcfg), scene(sc) {
        scene.validate();
        Rng rng(seed ^ 0xa1b2c3d4ull);

        ecfg_m.modality = backbones::Modality::Motion;
        ecfg_m.input_dim = scene.pose_dim();
        ecfg_m.seq_len = scene.seq_len_motion;
        ecfg_m.hidden_dim = mc.hidden_dim;
        ecfg_m.code_dim = mc.code_dim;
        ecfg_m.num_layers = mc.enc_layers;
        ecfg_m.num_heads = mc.heads;
        ecfg_m.mlp_dim = mc.mlp_dim;

        ecfg_v = ecfg_m;
        ecfg_v.modality = backbones::Modality::Video;
        ecfg_v.patch_size = mc.patch_size;
        ecfg_v.image_h = scene.image_h;
        ecfg_v.image_w = scene.image_w;
        ecfg_v.frames = scene.seq_len_video;

        enc_m = backbones::MotionEncoder<T>(params, "enc_m", ecfg_m, rng);
        dec_m = backbones::SequenceDecoder<T>(params, "dec_m", scene.seq_len_motion, mc.code_dim,
                                              scene.pose_dim(), mc.hidden_dim, mc.heads,
                                              mc.mlp_dim, mc.dec_layers, rng);
        mask_m = params.param("mask_m", nn::init_embedding<T>({mc.code_dim}, rng));

        enc_v = backbones::VideoEncoder<T>(params, "enc_v", ecfg_v, rng);
        dec_v = backbones::SequenceDecoder<T>(params, "dec_v", ecfg_v.token_count(), mc.code_dim,
                                              ecfg_v.patch_dim(), mc.hidden_dim, mc.heads,
                                              mc.mlp_dim, mc.dec_layers, rng);
        mask_v = params.param("mask_v", nn::init_embedding<T>({mc.code_dim}, rng));

        losses::DiscriminatorConfig dc;
        dc.code_dim = mc.code_dim;
        dc.state_dim = mc.code_dim;  // discriminator states are pre-quantization features
        dc.k_parts = mc.k_parts;
        dc.net_hidden = mc.dis_hidden;
        dc.gen_hidden = mc.gen_hidden;
        disc_m = losses::HyperDiscriminator<T>(params, "disc_m", dc, rng);
        disc_v = losses::HyperDiscriminator<T>(params, "disc_v", dc, rng);

        vel_m = losses::VelocityDecoder<T>(params, "vel_m",
                                           {.state_dim = scene.pose_dim(),
                                            .code_dim = mc.code_dim,
                                            .hidden = mc.vel_hidden,
                                            .out_dim = scene.pose_dim()},
                                           rng);
        vel_v = losses::VelocityDecoder<T>(params, "vel_v",
                                           {.state_dim = ecfg_v.patch_dim(),
                                            .code_dim = mc.code_dim,
                                            .hidden = mc.vel_hidden,
                                            .out_dim = mc.patch_size * mc.patch_size * 2},
                                           rng);

        proj_m = align::Projection<T>(params, "proj_m", mc.code_dim, mc.h_align, rng);
        proj_v = align::Projection<T>(params, "proj_v", mc.code_dim, mc.h_align, rng);

        cb_m = vq::Codebook<T>::init_random(mc.codebook_size, mc.code_dim, rng);
        cb_v = vq::Codebook<T>::init_random(mc.codebook_size, mc.code_dim, rng);
        for (auto* cb : {&cb_m, &cb_v}) {
            cb->decay = static_cast<T>(mc.ema_decay);
            cb->laplace_eps = static_cast<T>(mc.laplace_eps);
            cb->dead_threshold = mc.dead_threshold;
        }
    }

    // Stage 1 trains only the motion masked-reconstruction path.
    static const std::vector<std::string>& stage1_prefixes() {
        static const std::vector<std::string> p{"enc_m.", "dec_m.", "mask_m"};
        return p;
    }

    std::vector<size_t> param_group(int stage) const {
        std::vector<size_t> ids;
        for (size_t i = 0; i < params.items.size(); ++i) {
            if (stage == 2) {
                ids.push_back(i);
                continue;
            }
            const std::string& name = params.items[i].first;
            for (const auto& pre : stage1_prefixes())
                if (name.rfind(pre, 0) == 0) {
                    ids.push_back(i);
                    break;
                }
        }
        return ids;
    }

    std::vector<Var<T>> group_vars(int stage) const {
        std::vector<Var<T>> out;
        for (size_t i : param_group(stage)) out.push_back(params.items[i].second);
        return out;
    }
};

}  // namespace humocon::train
