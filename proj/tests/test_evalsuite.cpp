#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "humocon/eval/evalsuite.hpp"

using namespace humocon;
using namespace humocon::eval;
using namespace humocon::train;
namespace fs = std::filesystem;
using Td = Tensor<double>;

namespace {

synth::SceneSpec tiny_scene(uint64_t seed = 5) {
    synth::SceneSpec s;
    s.num_joints = 2;
    s.seq_len_motion = 8;
    s.seq_len_video = 2;
    s.frame_rate_ratio = 4;
    s.image_h = 16;
    s.image_w = 16;
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
    c.model.dis_hidden = 8;
    c.model.gen_hidden = 8;
    c.model.vel_hidden = 8;
    c.model.h_align = 8;
    c.loss.max_candidates = 8;
    c.train.micro_batch = 2;
    c.train.stage1_iters = 4;
    c.train.stage2_iters = 3;
    c.train.seed = 3;
    return c;
}

PreppedData<double> tiny_data(long count = 6, uint64_t seed = 5) {
    auto scene = tiny_scene(seed);
    auto samples = synth::make_dataset<double>(scene, count);
    return PreppedData<double>::from_samples(samples, scene, 8);
}

std::string temp_dir(const std::string& tag) {
    auto d = fs::temp_directory_path() / ("humocon_eval_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
}

}  // namespace

TEST_SUITE("evalsuite") {

TEST_CASE("perfect indicator similarities give top1 = 1") {
    // aligned features identical at matching frames, orthogonal otherwise:
    // similarity is the indicator matrix
    const long Tn = 4, K = 16;
    std::vector<long> amap{0, 4, 8, 12};
    Td sims({Tn, K});
    for (long i = 0; i < Tn; ++i) sims[i * K + amap[static_cast<size_t>(i)]] = 1.0;
    long h1 = 0, h5 = 0;
    retrieval_rank_counts(sims.data.data(), Tn, K, amap, &h1, &h5);
    CHECK(h1 == Tn);
    CHECK(h5 == Tn);
}

TEST_CASE("ties never count as hits") {
    const long Tn = 1, K = 8;
    std::vector<long> amap{3};
    Td sims({Tn, K}, 0.5);  // fully collapsed embedding
    long h1 = 0, h5 = 0;
    retrieval_rank_counts(sims.data.data(), Tn, K, amap, &h1, &h5);
    CHECK(h1 == 0);
    CHECK(h5 == 0);
}

TEST_CASE("random aligned features sit at binomial chance") {
    // 100 sequences x 8 frames against K=32 candidates
    Rng rng(11);
    const long K = 32, H = 16, Tn = 8;
    std::vector<long> amap;
    for (long i = 0; i < Tn; ++i) amap.push_back(4 * i);
    long hits1 = 0, total = 0;
    for (int seq = 0; seq < 100; ++seq) {
        Td av({Tn, H}), am({K, H});
        for (long i = 0; i < av.numel(); ++i) av[i] = rng.normal();
        for (long i = 0; i < am.numel(); ++i) am[i] = rng.normal();
        Td sims({Tn, K});
        for (long i = 0; i < Tn; ++i)
            for (long j = 0; j < K; ++j) {
                double acc = 0;
                for (long c = 0; c < H; ++c) acc += av.at2(i, c) * am.at2(j, c);
                sims.at2(i, j) = acc;
            }
        long h1 = 0, h5 = 0;
        retrieval_rank_counts(sims.data.data(), Tn, K, amap, &h1, &h5);
        hits1 += h1;
        total += Tn;
    }
    const double p = 1.0 / K;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(total));
    const double got = static_cast<double>(hits1) / static_cast<double>(total);
    CHECK(std::abs(got - p) <= 3 * sigma);
}

TEST_CASE("retrieval on a real model: top5 >= top1 and errors on empty data") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    Trainer<double> tr(cfg, data);
    auto rr = retrieval_eval(tr.model(), data);
    CHECK(rr.top5 >= rr.top1);
    CHECK(rr.top1 >= 0.0);
    CHECK(rr.top5 <= 1.0);
    CHECK(rr.chance == doctest::Approx(1.0 / 8));
    CHECK(rr.per_sequence.size() == 6);

    PreppedData<double> empty;
    empty.scene = tiny_scene();
    CHECK_THROWS_AS(retrieval_eval(tr.model(), empty), DomainError);
}

TEST_CASE("eval metrics are finite and reproducible") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    Trainer<double> tr(cfg, data);
    tr.run_steps(2);
    auto m1 = eval_metrics(tr.model(), cfg, data);
    auto m2 = eval_metrics(tr.model(), cfg, data);
    CHECK(m1.to_json().dump() == m2.to_json().dump());
    CHECK(std::isfinite(m1.rec_mse));
    CHECK(std::isfinite(m1.velocity_mse));
    CHECK(m1.perp_motion >= 1.0);
    CHECK(m1.retrieval_top5 >= m1.retrieval_top1);
}

TEST_CASE("finite difference checks pass their stated tolerances") {
    auto lin = finite_diff_check("linear", 1e-8);
    CHECK(lin.pass);
    auto score = finite_diff_check("score", 1e-4);
    CHECK(score.pass);
    auto second = finite_diff_check("second_order", 1e-3);
    CHECK(second.pass);
    auto enc = finite_diff_check("encoder", 1e-4);
    CHECK(enc.pass);
    CHECK_THROWS_AS(finite_diff_check("bogus", 1e-3), ConfigError);
}

TEST_CASE("single-row ablation grid emits a one-row table") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    std::string dir = temp_dir("abl1");
    auto table = run_ablation(cfg, {"full"}, {3}, data, data, dir, 1);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].ok);
    CHECK(table.rows[0].per_seed.size() == 1);
    CHECK(fs::exists(dir + "/ablation.json"));
    fs::remove_all(dir);
}

TEST_CASE("ablation is deterministic across runs and parallelism") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    std::string d1 = temp_dir("abl_det1");
    std::string d2 = temp_dir("abl_det2");
    auto t1 = run_ablation(cfg, {"full", "wo_align"}, {3, 4}, data, data, d1, 1);
    auto t2 = run_ablation(cfg, {"full", "wo_align"}, {3, 4}, data, data, d2, 2);
    CHECK(t1.to_json().dump() == t2.to_json().dump());
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("a failing row is recorded and the table still emitted") {
    Config cfg = tiny_config();
    auto data = tiny_data();
    std::string dir = temp_dir("abl_fail");
    auto table = run_ablation(cfg, {"full", "not_a_row"}, {3}, data, data, dir, 1);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].ok);
    CHECK(!table.rows[1].ok);
    CHECK(table.rows[1].error.find("not_a_row") != std::string::npos);
    CHECK(fs::exists(dir + "/ablation.json"));
    std::string text = table.render_text();
    CHECK(text.find("FAILED") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("report: empty dir warns, full dir renders all four plots, idempotent") {
    std::string empty = temp_dir("rep_empty");
    auto r0 = report(empty);
    CHECK(!r0.warnings.empty());
    CHECK(fs::exists(empty + "/summary.txt"));
    fs::remove_all(empty);

    // build a results dir with metrics + ablation
    Config cfg = tiny_config();
    auto data = tiny_data();
    std::string dir = temp_dir("rep_full");
    {
        Trainer<double> tr(cfg, data);
        MetricsWriter mw(dir + "/metrics.jsonl");
        tr.run_steps(3, &mw);
        tr.save(dir + "/s1.ckpt");
        auto s2 = Trainer<double>::from_stage1(dir + "/s1.ckpt", cfg, data);
        MetricsWriter mw2(dir + "/metrics.jsonl", /*append=*/true);
        s2.run_steps(2, &mw2);
        run_ablation(cfg, {"full"}, {3}, data, data, dir, 1);
    }
    auto r1 = report(dir);
    for (const char* f : {"loss_total.svg", "loss_terms.svg", "perplexity.svg", "ablation.svg",
                          "summary.txt"})
        CHECK(fs::exists(dir + "/" + std::string(f)));

    auto read_file = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    std::string sum1 = read_file(dir + "/summary.txt");
    std::string svg1 = read_file(dir + "/loss_terms.svg");
    auto r2 = report(dir);
    CHECK(read_file(dir + "/summary.txt") == sum1);
    CHECK(read_file(dir + "/loss_terms.svg") == svg1);
    fs::remove_all(dir);
}

}  // TEST_SUITE
