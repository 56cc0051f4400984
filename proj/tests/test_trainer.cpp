#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "humocon/train/trainer.hpp"

using namespace humocon;
using namespace humocon::train;
namespace A = humocon::ag;
using Td = Tensor<double>;
namespace fs = std::filesystem;

namespace {

synth::SceneSpec tiny_scene(uint64_t seed = 5) {
    synth::SceneSpec s;
    s.num_joints = 2;
    s.seq_len_motion = 8;
    s.seq_len_video = 2;
    s.frame_rate_ratio = 4;
    s.image_h = 16;
    s.image_w = 16;
    s.blob_sigma = 1.5;
    s.seed = seed;
    return s;
}

Config tiny_config() {
    Config c;
    c.model.code_dim = 8;
    c.model.hidden_dim = 16;
    c.model.enc_layers = 1;
    c.model.dec_layers = 1;
    c.model.heads = 2;
    c.model.mlp_dim = 32;
    c.model.patch_size = 8;
    c.model.codebook_size = 8;
    c.model.dead_threshold = 50;
    c.model.k_parts = 4;
    c.model.dis_hidden = 8;
    c.model.gen_hidden = 8;
    c.model.vel_hidden = 8;
    c.model.h_align = 8;
    c.loss.max_candidates = 8;
    c.train.micro_batch = 2;
    c.train.seed = 3;
    return c;
}

PreppedData<double> tiny_data(long count = 6, uint64_t seed = 5) {
    auto scene = tiny_scene(seed);
    auto samples = synth::make_dataset<double>(scene, count);
    return PreppedData<double>::from_samples(samples, scene, 8);
}

std::string temp_path(const std::string& tag) {
    return (fs::temp_directory_path() / ("humocon_trainer_" + tag)).string();
}

bool params_equal(const Model<double>& a, const Model<double>& b) {
    if (a.params.items.size() != b.params.items.size()) return false;
    for (size_t i = 0; i < a.params.items.size(); ++i)
        if (a.params.items[i].second->value.data != b.params.items[i].second->value.data)
            return false;
    return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("total_loss arithmetic with the reference weights") {
    auto one = [] { return A::constant(Td({1}, {1.0})); };
    LossParts<double> p;
    p.rec_motion = one();
    p.rec_video = one();
    p.dis = one();
    p.act = one();
    p.align = one();
    LossWeights w;  // 0.3 / 0.1 / 0.1
    CHECK(total_loss(p, w, 0.0)->value[0] == doctest::Approx(2.5).epsilon(1e-12));

    // absent align is excluded, not zeroed
    p.align.reset();
    CHECK(total_loss(p, w, 0.0)->value[0] == doctest::Approx(2.4).epsilon(1e-12));

    LossParts<double> zero;
    zero.rec_motion = A::constant(Td({1}, {0.0}));
    CHECK(total_loss(zero, w, 0.25)->value[0] == 0.0);

    LossParts<double> empty;
    CHECK(total_loss(empty, w, 0.25)->value[0] == 0.0);

    LossWeights bad;
    bad.lambda_act = -0.1;
    CHECK_THROWS_AS(total_loss(p, bad, 0.25), ConfigError);
}

TEST_CASE("config json round trip, unknown keys, overrides") {
    Config c = tiny_config();
    auto j = config_to_json(c);
    Config back = config_from_json(j);
    CHECK(back.model.code_dim == c.model.code_dim);
    CHECK(back.train.micro_batch == c.train.micro_batch);

    auto bad = j;
    bad["model"]["bogus_knob"] = 1;
    CHECK_THROWS_WITH_AS(config_from_json(bad), doctest::Contains("bogus_knob"), ConfigError);

    Config o = config_with_overrides(c, {"loss.align=off", "train.stage2_iters=17",
                                         "loss.lambda_dis=0.5", "loss.dis_mode=binary"});
    CHECK(o.loss.align == false);
    CHECK(o.train.stage2_iters == 17);
    CHECK(o.loss.weights.lambda_dis == doctest::Approx(0.5));
    CHECK(o.loss.dis_mode == "binary");

    CHECK_THROWS_AS(config_with_overrides(c, {"loss.nope=1"}), ConfigError);
    CHECK_THROWS_AS(config_with_overrides(c, {"loss.align=maybe"}), ConfigError);
    CHECK_THROWS_AS(config_with_overrides(c, {"train.seed"}), ConfigError);
}

TEST_CASE("zero iterations leaves the checkpoint at initialization") {
    Trainer<double> tr(tiny_config(), tiny_data());
    tr.run_steps(0);
    std::string p = temp_path("init.ckpt");
    tr.save(p);

    Trainer<double> fresh(tiny_config(), tiny_data());
    CHECK(params_equal(tr.model(), fresh.model()));

    auto loaded = Trainer<double>::load(p, tiny_data());
    CHECK(params_equal(loaded.model(), fresh.model()));
    CHECK(loaded.step() == 0);
    fs::remove(p);
}

TEST_CASE("stage 1 trains motion only and keeps the loss identity") {
    Config cfg = tiny_config();
    Trainer<double> tr(cfg, tiny_data());

    // snapshot of non-motion parameters
    std::vector<Td> before;
    std::vector<std::string> names;
    for (auto& [name, v] : tr.model().params.items)
        if (name.rfind("enc_m.", 0) != 0 && name.rfind("dec_m.", 0) != 0 && name != "mask_m") {
            before.push_back(v->value);
            names.push_back(name);
        }

    auto last = tr.run_steps(8);
    CHECK(last.step == 8);
    CHECK(last.rec_motion.has_value());
    CHECK(!last.rec_video.has_value());
    CHECK(!last.dis.has_value());

    size_t j = 0;
    for (auto& [name, v] : tr.model().params.items)
        if (name.rfind("enc_m.", 0) != 0 && name.rfind("dec_m.", 0) != 0 && name != "mask_m") {
            CHECK(v->value.data == before[j].data);
            ++j;
        }

    // something in the motion branch must have moved
    bool moved = false;
    Trainer<double> fresh(cfg, tiny_data());
    for (size_t i = 0; i < tr.model().params.items.size(); ++i)
        moved = moved ||
                tr.model().params.items[i].second->value.data !=
                    fresh.model().params.items[i].second->value.data;
    CHECK(moved);

    for (const auto& rep : tr.history()) {
        double rt = rep.recomposed_total(cfg.loss.weights.lambda_dis, cfg.loss.weights.lambda_act,
                                         cfg.loss.weights.lambda_align, cfg.loss.commitment_beta);
        CHECK(std::abs(rt - rep.total) <= 1e-6 * std::max(1.0, std::abs(rep.total)));
    }
}

TEST_CASE("stage 2 emits every enabled term and honors toggles") {
    Config cfg = tiny_config();
    Trainer<double> tr(cfg, tiny_data());
    tr.run_steps(2);
    std::string p = temp_path("s1.ckpt");
    tr.save(p);

    Trainer<double> s2 = Trainer<double>::from_stage1(p, cfg, tiny_data());
    auto rep = s2.run_steps(3);
    CHECK(rep.stage == 2);
    CHECK(rep.rec_motion.has_value());
    CHECK(rep.rec_video.has_value());
    CHECK(rep.dis.has_value());
    CHECK(rep.act.has_value());
    CHECK(rep.align.has_value());
    CHECK(rep.commit.has_value());
    CHECK(rep.perp_motion >= 1.0);
    CHECK(rep.perp_video >= 1.0);

    Config off = config_with_overrides(cfg, {"loss.align=off", "loss.act=off"});
    Trainer<double> s2b = Trainer<double>::from_stage1(p, off, tiny_data());
    auto rep2 = s2b.run_steps(2);
    CHECK(!rep2.align.has_value());
    CHECK(!rep2.act.has_value());
    CHECK(rep2.dis.has_value());
    fs::remove(p);
}

TEST_CASE("identical config and seed reproduce the metrics stream") {
    Config cfg = tiny_config();
    Trainer<double> a(cfg, tiny_data());
    Trainer<double> b(cfg, tiny_data());
    a.run_steps(5);
    b.run_steps(5);
    REQUIRE(a.history().size() == b.history().size());
    for (size_t i = 0; i < a.history().size(); ++i)
        CHECK(a.history()[i].to_json(true).dump() == b.history()[i].to_json(true).dump());
}

TEST_CASE("save/load restores training bit-exactly; resume matches unbroken run") {
    Config cfg = tiny_config();
    // unbroken reference
    Trainer<double> ref(cfg, tiny_data());
    ref.run_steps(6);

    Trainer<double> part(cfg, tiny_data());
    part.run_steps(3);
    std::string p = temp_path("resume.ckpt");
    part.save(p);
    auto resumed = Trainer<double>::load(p, tiny_data());
    CHECK(params_equal(resumed.model(), part.model()));
    CHECK(resumed.step() == 3);
    resumed.run_steps(3);

    REQUIRE(resumed.history().size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        const auto& r = resumed.history()[i];
        const auto& u = ref.history()[i + 3];
        CHECK(r.step == u.step);
        CHECK(std::abs(r.total - u.total) <= 1e-6);
        if (u.rec_motion) CHECK(std::abs(*r.rec_motion - *u.rec_motion) <= 1e-6);
    }
    CHECK(params_equal(resumed.model(), ref.model()));
    fs::remove(p);
}

TEST_CASE("corrupt and mismatched checkpoints are explicit errors") {
    Config cfg = tiny_config();
    Trainer<double> tr(cfg, tiny_data());
    tr.run_steps(1);
    std::string p = temp_path("corrupt.ckpt");
    tr.save(p);

    auto size = fs::file_size(p);
    fs::resize_file(p, size - 64);
    CHECK_THROWS_AS(Trainer<double>::load(p, tiny_data()), IoError);

    // wrong magic
    {
        std::ofstream f(p, std::ios::binary);
        f << "NOTACKPT and then some garbage bytes";
    }
    CHECK_THROWS_AS(Trainer<double>::load(p, tiny_data()), IoError);
    fs::remove(p);

    // stage-2 start needs a stage-1 checkpoint
    Trainer<double> s1(cfg, tiny_data());
    s1.run_steps(1);
    std::string p1 = temp_path("stage.ckpt");
    s1.save(p1);
    auto s2 = Trainer<double>::from_stage1(p1, cfg, tiny_data());
    s2.run_steps(1);
    std::string p2 = temp_path("stage2.ckpt");
    s2.save(p2);
    CHECK_THROWS_AS(Trainer<double>::from_stage1(p2, cfg, tiny_data()), ConfigError);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("non-finite loss aborts with the offending batch") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    data.poses[0][3] = std::numeric_limits<double>::quiet_NaN();
    cfg.train.micro_batch = static_cast<long>(data.poses.size());  // guarantee sample 0 shows up
    Trainer<double> tr(cfg, std::move(data));
    CHECK_THROWS_AS(tr.run_steps(3), TrainAbort);
}

TEST_CASE("full-scale preset records the reference schedule") {
    Config p = full_scale_config();
    CHECK(p.train.stage1_iters == 60000);
    CHECK(p.train.stage1_lr == doctest::Approx(1e-4));
    CHECK(p.train.stage2_iters == 8000);
    CHECK(p.train.stage2_lr == doctest::Approx(1e-5));
    CHECK(p.train.micro_batch == 16);
    CHECK(p.train.grad_accum == 8);
    CHECK(p.model.codebook_size == 512);
    // reference loss weights are the defaults
    CHECK(p.loss.weights.lambda_dis == doctest::Approx(0.3));
    CHECK(p.loss.weights.lambda_act == doctest::Approx(0.1));
    CHECK(p.loss.weights.lambda_align == doctest::Approx(0.1));
    CHECK(p.loss.mask_ratio == doctest::Approx(0.75));
}

TEST_CASE("gradient accumulation reaches an effective batch") {
    Config cfg = tiny_config();
    cfg.train.grad_accum = 3;
    Trainer<double> tr(cfg, tiny_data());
    auto rep = tr.run_steps(2);
    CHECK(rep.step == 2);
    CHECK(std::isfinite(rep.total));
}

}  // TEST_SUITE
