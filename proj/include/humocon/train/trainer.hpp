#pragma once

#include <chrono>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "humocon/align/alignment.hpp"
#include "humocon/losses/info.hpp"
#include "humocon/nn/backbones.hpp"
#include "humocon/synth/dataset.hpp"
#include "humocon/train/checkpoint.hpp"
#include "humocon/train/metrics.hpp"
#include "humocon/train/model.hpp"
#include "humocon/train/optimizer.hpp"

// Two-stage pre-training: stage 1 is motion-only masked reconstruction;
// stage 2 trains everything under the weighted total objective over paired
// data. Deterministic given config + seed; checkpoints restore the exact
// training state.

namespace humocon::train {

template <class T>
struct LossParts {
    std::optional<ag::Var<T>> rec_motion, rec_video, dis, act, align, commit;
};

// Weighted total objective. Absent parts are excluded, not zero-filled.
template <class T>
ag::Var<T> total_loss(const LossParts<T>& p, const LossWeights& w, double commitment_beta) {
    w.validate();
    HUMOCON_CHECK(commitment_beta >= 0, ConfigError, "commitment weight must be >= 0");
    ag::Var<T> acc;
    auto addw = [&](const std::optional<ag::Var<T>>& term, double lambda) {
        if (!term || lambda == 0) return;
        ag::Var<T> t = lambda == 1.0 ? *term : ag::scale(*term, static_cast<T>(lambda));
        acc = acc ? ag::add(acc, t) : t;
    };
    addw(p.rec_motion, 1.0);
    addw(p.rec_video, 1.0);
    addw(p.dis, w.lambda_dis);
    addw(p.act, w.lambda_act);
    addw(p.align, w.lambda_align);
    addw(p.commit, commitment_beta);
    if (!acc) acc = ag::constant(Tensor<T>::zeros({1}));
    return acc;
}

// Per-sample tensors prepared once: poses, patch rows, velocity targets in
// the same layouts the graphs consume.
template <class T>
struct PreppedData {
    synth::SceneSpec scene;
    std::vector<long> align_map;
    std::vector<Tensor<T>> poses;         // (K, P)
    std::vector<Tensor<T>> patches;       // (Sv, p*p*3)
    std::vector<Tensor<T>> delta;         // (K, P)
    std::vector<Tensor<T>> flow_patches;  // (Sv, p*p*2)

    long count() const { return static_cast<long>(poses.size()); }

    static PreppedData from_samples(const std::vector<synth::PairedSample<T>>& samples,
                                    const synth::SceneSpec& scene, long patch_size) {
        PreppedData d;
        d.scene = scene;
        d.align_map = scene.align_map();
        for (const auto& s : samples) {
            d.poses.push_back(s.motion.poses);
            Tensor<T> fr({1, scene.seq_len_video, scene.image_h, scene.image_w, 3},
                         s.video.frames.data);
            Tensor<T> pr = backbones::patchify(fr, patch_size);
            d.patches.push_back(Tensor<T>({pr.dim(1), pr.dim(2)}, std::move(pr.data)));
            d.delta.push_back(s.velocity.delta_motion);
            Tensor<T> fl({1, scene.seq_len_video, scene.image_h, scene.image_w, 2},
                         s.velocity.flow.data);
            Tensor<T> flp = backbones::patchify(fl, patch_size);
            d.flow_patches.push_back(Tensor<T>({flp.dim(1), flp.dim(2)}, std::move(flp.data)));
        }
        return d;
    }

    static PreppedData load(const std::string& dir, long patch_size) {
        synth::DatasetManifest m;
        auto samples = synth::read_dataset<T>(dir, &m);
        HUMOCON_CHECK(!samples.empty(), IoError, "dataset " + dir + " is empty");
        return from_samples(samples, m.spec, patch_size);
    }

    Tensor<T> stack(const std::vector<Tensor<T>>& rows, const std::vector<long>& ids) const {
        const Shape& s0 = rows[0].shape;
        Shape out_shape{static_cast<long>(ids.size())};
        out_shape.insert(out_shape.end(), s0.begin(), s0.end());
        Tensor<T> out(out_shape);
        const long n = rows[0].numel();
        for (size_t b = 0; b < ids.size(); ++b)
            std::copy(rows[static_cast<size_t>(ids[b])].data.begin(),
                      rows[static_cast<size_t>(ids[b])].data.end(),
                      out.data.begin() + static_cast<long>(b) * n);
        return out;
    }
};

template <class T>
class Trainer {
public:
    Trainer(Config cfg, PreppedData<T> data)
        : cfg_(std::move(cfg)),
          data_(std::move(data)),
          model_(cfg_.model, data_.scene, cfg_.train.seed),
          rng_(cfg_.train.seed ^ 0x7261696e5f726eull) {
        HUMOCON_CHECK(data_.count() > 0, ConfigError, "trainer needs a nonempty dataset");
        // discriminator knobs live in the loss section
        for (auto* disc : {&model_.disc_m, &model_.disc_v}) {
            disc->cfg.tau_dis = cfg_.loss.tau_dis;
            disc->cfg.max_candidates = cfg_.loss.max_candidates;
            disc->cfg.mode = losses::dis_mode_from_name(cfg_.loss.dis_mode);
            disc->cfg.validate();
        }
        begin_stage(1);
    }

    const Config& cfg() const { return cfg_; }
    Model<T>& model() { return model_; }
    const Model<T>& model() const { return model_; }
    int stage() const { return stage_; }
    long step() const { return step_; }
    const std::vector<LossReport>& history() const { return history_; }
    Rng& rng() { return rng_; }

    void begin_stage(int stage) {
        HUMOCON_CHECK(stage == 1 || stage == 2, ConfigError, "stage must be 1 or 2");
        stage_ = stage;
        step_ = 0;
        group_vars_ = model_.group_vars(stage);
        opt_ = Adam<T>{};
        opt_.lr = stage == 1 ? cfg_.train.stage1_lr : cfg_.train.stage2_lr;
        opt_.init(group_vars_);
        if (stage == 2 && cfg_.loss.act && cfg_.loss.second_order)
            losses::verify_second_order_support();
    }

    LossReport run_steps(long iters, MetricsWriter* mw = nullptr) {
        LossReport last;
        for (long i = 0; i < iters; ++i) {
            last = do_step();
            history_.push_back(last);
            if (mw && (cfg_.train.log_every <= 1 || last.step % cfg_.train.log_every == 0))
                mw->write(last.to_json(cfg_.train.deterministic));
        }
        return last;
    }

    void save(const std::string& path) const {
        CheckpointData<T> ck;
        ck.cfg = cfg_;
        ck.scene = data_.scene;
        ck.stage = stage_;
        ck.step = step_;
        for (const auto& [name, v] : model_.params.items) ck.params.push_back({name, v->value});
        ck.cb_m = CodebookState<T>::capture(model_.cb_m);
        ck.cb_v = CodebookState<T>::capture(model_.cb_v);
        ck.opt_t = opt_.t;
        ck.opt_m = opt_.m;
        ck.opt_v = opt_.v;
        ck.rng_state = rng_.state();
        save_checkpoint(path, ck);
    }

    // Resume in the same stage with the exact saved training state.
    static Trainer load(const std::string& path, PreppedData<T> data) {
        CheckpointData<T> ck = load_checkpoint<T>(path);
        check_geometry(ck.scene, data.scene);
        Trainer tr(ck.cfg, std::move(data));
        tr.apply_params(ck);
        tr.begin_stage(static_cast<int>(ck.stage));
        HUMOCON_CHECK(ck.opt_m.size() == tr.opt_.m.size(), IoError,
                      "checkpoint optimizer group does not match the stage group");
        tr.opt_.t = ck.opt_t;
        tr.opt_.m = ck.opt_m;
        tr.opt_.v = ck.opt_v;
        tr.step_ = ck.step;
        tr.rng_.set_state(ck.rng_state);
        return tr;
    }

    // Start stage 2 from a stage-1 checkpoint: parameters and codebooks carry
    // over, the optimizer and rng streams are fresh for the new stage.
    static Trainer from_stage1(const std::string& path, Config cfg2, PreppedData<T> data) {
        CheckpointData<T> ck = load_checkpoint<T>(path);
        HUMOCON_CHECK(ck.stage == 1, ConfigError,
                      "stage-2 training expects a stage-1 checkpoint, got stage " +
                          std::to_string(ck.stage));
        check_geometry(ck.scene, data.scene);
        check_model_match(ck.cfg.model, cfg2.model);
        Trainer tr(std::move(cfg2), std::move(data));
        tr.apply_params(ck);
        tr.rng_ = Rng(tr.cfg_.train.seed ^ 0x73746167655f32ull);
        tr.begin_stage(2);
        return tr;
    }

private:
    static void check_geometry(const synth::SceneSpec& a, const synth::SceneSpec& b) {
        HUMOCON_CHECK(a.pose_dim() == b.pose_dim() && a.seq_len_motion == b.seq_len_motion &&
                          a.seq_len_video == b.seq_len_video && a.image_h == b.image_h &&
                          a.image_w == b.image_w,
                      ConfigError, "checkpoint geometry does not match the dataset");
    }

    static void check_model_match(const ModelConfig& a, const ModelConfig& b) {
        HUMOCON_CHECK(a.code_dim == b.code_dim && a.hidden_dim == b.hidden_dim &&
                          a.enc_layers == b.enc_layers && a.dec_layers == b.dec_layers &&
                          a.codebook_size == b.codebook_size && a.patch_size == b.patch_size,
                      ConfigError, "stage-2 model config does not match the stage-1 checkpoint");
    }

    void apply_params(const CheckpointData<T>& ck) {
        HUMOCON_CHECK(ck.params.size() == model_.params.items.size(), IoError,
                      "checkpoint parameter count mismatch");
        for (size_t i = 0; i < ck.params.size(); ++i) {
            auto& [name, var] = model_.params.items[i];
            HUMOCON_CHECK(ck.params[i].first == name, IoError,
                          "checkpoint parameter order mismatch at '" + name + "'");
            HUMOCON_CHECK(ck.params[i].second.shape == var->value.shape, IoError,
                          "checkpoint parameter shape mismatch at '" + name + "'");
            var->value = ck.params[i].second;
        }
        ck.cb_m.restore(model_.cb_m);
        ck.cb_v.restore(model_.cb_v);
    }

    std::vector<long> draw_batch() {
        std::vector<long> ids(static_cast<size_t>(cfg_.train.micro_batch));
        for (auto& i : ids) i = rng_.uniform_int(data_.count());
        return ids;
    }

    struct MicroResult {
        LossParts<T> parts;
        ag::Var<T> total;
        std::vector<long> batch;
        double perp_m = 0, perp_v = 0;
    };

    MicroResult micro_step() {
        MicroResult r;
        r.batch = draw_batch();
        const auto& L = cfg_.loss;
        const long Tn = data_.scene.seq_len_video;
        const long Pp = model_.ecfg_v.patches_per_frame();

        // motion branch
        Tensor<T> poses_t = data_.stack(data_.poses, r.batch);
        ag::Var<T> poses_c = ag::constant(Tensor<T>(poses_t));
        ag::Var<T> f_m = model_.enc_m.forward(poses_c);
        vq::maybe_data_init(model_.cb_m, f_m->value, rng_);
        auto q_m = vq::quantize(f_m, model_.cb_m);
        r.perp_m = vq::perplexity(q_m.indices, model_.cb_m.size());
        if (L.commitment_beta > 0) r.parts.commit = vq::commitment_loss(q_m);
        if (L.rec || stage_ == 1) {
            auto masked = backbones::mask_features(q_m.st, model_.mask_m,
                                                   {.ratio = L.mask_ratio}, rng_);
            r.parts.rec_motion =
                backbones::rec_loss(model_.dec_m.forward(masked.tokens), poses_t);
        }

        losses::InformativenessTerms<T> info;
        std::optional<ag::Var<T>> align_term;

        if (stage_ == 2) {
            // video branch
            Tensor<T> patches_t = data_.stack(data_.patches, r.batch);
            ag::Var<T> patches_c = ag::constant(Tensor<T>(patches_t));
            ag::Var<T> f_v = model_.enc_v.forward(patches_c);
            vq::maybe_data_init(model_.cb_v, f_v->value, rng_);
            auto q_v = vq::quantize(f_v, model_.cb_v);
            r.perp_v = vq::perplexity(q_v.indices, model_.cb_v.size());
            if (L.commitment_beta > 0) {
                auto cv = vq::commitment_loss(q_v);
                r.parts.commit = r.parts.commit ? ag::add(*r.parts.commit, cv) : cv;
            }
            if (L.rec) {
                auto masked_v = backbones::mask_features(q_v.st, model_.mask_v,
                                                         {.ratio = L.mask_ratio}, rng_);
                r.parts.rec_video =
                    backbones::rec_loss(model_.dec_v.forward(masked_v.tokens), patches_t);
            }

            ag::Var<T> codes_m = ag::constant(Tensor<T>(model_.cb_m.codes));
            ag::Var<T> codes_v = ag::constant(Tensor<T>(model_.cb_v.codes));

            if (L.dis) {
                auto dm = losses::dis_loss(model_.disc_m, codes_m, f_m, q_m.indices, &rng_);
                auto dv = losses::dis_loss(model_.disc_v, codes_v, f_v, q_v.indices, &rng_);
                info.dis_motion = dm.loss;
                info.dis_video = dv.loss;
            }
            if (L.act) {
                ag::Var<T> g_m =
                    losses::grad_feature(model_.disc_m, codes_m, f_m, q_m.indices, L.second_order);
                ag::Var<T> g_v =
                    losses::grad_feature(model_.disc_v, codes_v, f_v, q_v.indices, L.second_order);
                Tensor<T> delta_t = data_.stack(data_.delta, r.batch);
                info.act_motion = losses::act_loss(model_.vel_m, poses_c, g_m, delta_t);
                Tensor<T> flow_t = data_.stack(data_.flow_patches, r.batch);
                info.act_video = losses::act_loss(model_.vel_v, patches_c, g_v, flow_t);
            }
            if (L.align) {
                ag::Var<T> pooled = align::pool_frames(q_v.st, Tn, Pp);
                ag::Var<T> a_v = model_.proj_v.forward(pooled);
                ag::Var<T> a_m = model_.proj_m.forward(q_m.st);
                align_term = align::align_loss(
                    a_v, a_m, data_.align_map, L.align_eps,
                    L.align_mode == "literal" ? align::AlignMode::LiteralRatio
                                              : align::AlignMode::InfoNCE);
            }

            // EMA codebook maintenance
            if (!L.freeze_codebook_stage2) {
                ema_and_reinit(model_.cb_m, f_m->value, q_m.indices);
            }
            ema_and_reinit(model_.cb_v, f_v->value, q_v.indices);
        } else {
            ema_and_reinit(model_.cb_m, f_m->value, q_m.indices);
        }

        r.parts.dis = info.dis_total();
        r.parts.act = info.act_total();
        r.parts.align = align_term;
        r.total = total_loss(r.parts, cfg_.loss.weights, cfg_.loss.commitment_beta);
        return r;
    }

    void ema_and_reinit(vq::Codebook<T>& cb, const Tensor<T>& features,
                        const std::vector<long>& indices) {
        vq::ema_update(cb, features, indices);
        vq::reinit_dead_codes(cb, features, rng_);
    }

    LossReport do_step() {
        const auto t0 = std::chrono::steady_clock::now();
        const long accum = cfg_.train.grad_accum;
        std::vector<Tensor<T>> grad_sum;
        LossReport rep;
        rep.stage = stage_;
        double total_acc = 0;
        double perp_m_acc = 0, perp_v_acc = 0;
        auto add_opt = [](std::optional<double>& slot, const std::optional<ag::Var<T>>& term,
                          double scale) {
            if (!term) return;
            if (!slot) slot = 0.0;
            *slot += static_cast<double>((*term)->value[0]) * scale;
        };
        for (long a = 0; a < accum; ++a) {
            MicroResult mr = micro_step();
            const double tv = static_cast<double>(mr.total->value[0]);
            if (!std::isfinite(tv)) {
                std::ostringstream os;
                os << "non-finite loss at stage " << stage_ << " step " << step_ << " micro " << a
                   << "; batch sample indices:";
                for (long b : mr.batch) os << " " << b;
                throw TrainAbort(os.str());
            }
            const double w = 1.0 / static_cast<double>(accum);
            total_acc += tv * w;
            add_opt(rep.rec_motion, mr.parts.rec_motion, w);
            add_opt(rep.rec_video, mr.parts.rec_video, w);
            add_opt(rep.dis, mr.parts.dis, w);
            add_opt(rep.act, mr.parts.act, w);
            add_opt(rep.align, mr.parts.align, w);
            add_opt(rep.commit, mr.parts.commit, w);
            perp_m_acc += mr.perp_m * w;
            perp_v_acc += mr.perp_v * w;

            ag::Var<T> scaled =
                accum == 1 ? mr.total : ag::scale(mr.total, static_cast<T>(1.0 / accum));
            auto grads = ag::grad(scaled, group_vars_);
            if (grad_sum.empty()) {
                grad_sum.reserve(grads.size());
                for (auto& g : grads) grad_sum.push_back(g->value);
            } else {
                for (size_t i = 0; i < grads.size(); ++i)
                    for (long k = 0; k < grad_sum[i].numel(); ++k)
                        grad_sum[i][k] += grads[i]->value[k];
            }
        }
        opt_.step(group_vars_, grad_sum);
        ++step_;
        rep.step = step_;
        rep.total = total_acc;
        rep.perp_motion = perp_m_acc;
        rep.perp_video = perp_v_acc;
        const auto t1 = std::chrono::steady_clock::now();
        rep.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

        // decomposition identity (spec invariant); float rounding bounded by
        // 1e-6 relative at these magnitudes
        const double recomposed =
            rep.recomposed_total(cfg_.loss.weights.lambda_dis, cfg_.loss.weights.lambda_act,
                                 cfg_.loss.weights.lambda_align, cfg_.loss.commitment_beta);
        HUMOCON_CHECK(std::abs(recomposed - rep.total) <= 1e-6 * std::max(1.0, std::abs(rep.total)),
                      DomainError, "loss report identity violated");
        return rep;
    }

    Config cfg_;
    PreppedData<T> data_;
    Model<T> model_;
    Rng rng_;
    Adam<T> opt_;
    std::vector<ag::Var<T>> group_vars_;
    int stage_ = 1;
    long step_ = 0;
    std::vector<LossReport> history_;
};

}  // namespace humocon::train
