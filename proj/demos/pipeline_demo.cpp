// Miniature end-to-end run: generate a small paired dataset, pre-train both
// stages briefly, then print held-out evaluation metrics.

#include <cstdio>
#include <filesystem>

#include "humocon/humocon.hpp"

using namespace humocon;
using train::Config;
using train::PreppedData;
using train::Trainer;

int main() {
    synth::SceneSpec scene;
    scene.seed = 11;
    auto samples = synth::make_dataset<float>(scene, 32);
    auto data = PreppedData<float>::from_samples(samples, scene, 16);

    synth::SceneSpec eval_scene = scene;
    eval_scene.seed = 1011;
    auto eval_samples = synth::make_dataset<float>(eval_scene, 16);
    auto eval_data = PreppedData<float>::from_samples(eval_samples, eval_scene, 16);

    Config cfg;
    cfg.train.stage1_iters = 500;
    cfg.train.stage2_iters = 300;
    cfg.model.code_dim = 16;
    cfg.model.hidden_dim = 32;
    cfg.model.enc_layers = 1;
    cfg.model.dec_layers = 1;
    cfg.model.mlp_dim = 64;
    cfg.model.codebook_size = 16;
    cfg.model.dis_hidden = 16;
    cfg.model.gen_hidden = 16;
    cfg.model.vel_hidden = 32;
    cfg.model.h_align = 16;
    cfg.model.dead_threshold = 50;  // recycle fast at toy scale

    auto tmp = std::filesystem::temp_directory_path() / "humocon_pipeline_demo";
    std::filesystem::create_directories(tmp);
    const std::string s1 = (tmp / "stage1.ckpt").string();

    Trainer<float> stage1(cfg, data);
    auto r1 = stage1.run_steps(cfg.train.stage1_iters);
    std::printf("stage 1: rec_motion %.4f after %ld steps\n", *r1.rec_motion, r1.step);
    stage1.save(s1);

    Trainer<float> stage2 = Trainer<float>::from_stage1(s1, cfg, data);
    auto r2 = stage2.run_steps(cfg.train.stage2_iters);
    std::printf("stage 2: total %.4f (dis %.4f act %.4f align %.4f)\n", r2.total,
                r2.dis.value_or(0), r2.act.value_or(0), r2.align.value_or(0));

    auto m = eval::eval_metrics(stage2.model(), cfg, eval_data);
    std::printf("eval (toy scale): retrieval top1 %.3f top5 %.3f, perplexity m/v %.1f/%.1f\n",
                m.retrieval_top1, m.retrieval_top5, m.perp_motion, m.perp_video);
    std::printf("the desk-scale reference run (see README) is where the real numbers live\n");
    std::filesystem::remove_all(tmp);
    return 0;
}
