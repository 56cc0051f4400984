// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-based criteria run the desk-scale reference setup (200
// pairs, seed 7, stage 1 = 2000 iters, stage 2 = 1000 iters) over 3 seeds,
// sharing runs between the threshold checks and the directional ablations.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "humocon/humocon.hpp"

using namespace humocon;
using train::Config;
using train::PreppedData;
using train::Trainer;
namespace fs = std::filesystem;

namespace {

struct Checker {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& msg) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += msg;
        }
    }

    void note(const std::string& msg) {
        if (!detail.empty()) detail += "; ";
        detail += msg;
    }
};

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: quantizer oracle equivalence
// ---------------------------------------------------------------------------
void criterion_quantizer_oracle(Checker& c) {
    Rng rng(90125);
    auto cb = vq::Codebook<double>::init_random(64, 16, rng, 1.0);
    Tensor<double> toks({10000, 16});
    for (long i = 0; i < toks.numel(); ++i) toks[i] = rng.normal();
    auto q = vq::quantize_tensor(toks, cb);

    long mismatches = 0;
    for (long t = 0; t < 10000; ++t) {
        // independent oracle: plain argmin over euclidean distances
        long best = -1;
        double bestd = std::numeric_limits<double>::infinity();
        for (long k = 0; k < 64; ++k) {
            double acc = 0;
            for (long j = 0; j < 16; ++j) {
                const double d = toks[t * 16 + j] - cb.codes[k * 16 + j];
                acc += d * d;
            }
            const double dist = std::sqrt(acc);
            if (dist < bestd) {
                bestd = dist;
                best = k;
            }
        }
        if (q.indices[static_cast<size_t>(t)] != best) ++mismatches;
    }
    c.require(mismatches == 0, "index mismatches: " + std::to_string(mismatches));
    c.note("10000 tokens vs 64 codes, " + std::to_string(mismatches) + " mismatches");
}

// ---------------------------------------------------------------------------
// criterion 2: EMA geometric envelope
// ---------------------------------------------------------------------------
void criterion_ema_envelope(Checker& c) {
    Rng rng(777);
    auto cb = vq::Codebook<double>::init_random(4, 3, rng, 0.3);
    for (long k = 1; k < 4; ++k)
        for (long j = 0; j < 3; ++j) cb.codes[k * 3 + j] += 50.0;
    cb.embed_sum = cb.codes;
    cb.decay = 0.99;

    Tensor<double> batch({5, 3});
    Rng brng(778);
    for (long i = 0; i < batch.numel(); ++i) batch[i] = 0.25 + 0.05 * brng.normal();
    double mu[3] = {0, 0, 0};
    for (long t = 0; t < 5; ++t)
        for (long j = 0; j < 3; ++j) mu[j] += batch.at2(t, j) / 5.0;

    auto dist = [&] {
        double acc = 0;
        for (long j = 0; j < 3; ++j) acc += (cb.codes[j] - mu[j]) * (cb.codes[j] - mu[j]);
        return std::sqrt(acc);
    };
    const double d0 = dist();
    double worst_slack = 1e18;
    for (int step = 1; step <= 500; ++step) {
        auto q = vq::quantize_tensor(batch, cb);
        for (long t = 0; t < 5; ++t)
            c.require(q.indices[static_cast<size_t>(t)] == 0, "cluster left code 0");
        vq::ema_update(cb, batch, q.indices);
        const double bound = std::pow(0.99, step) * d0 + 1e-6;
        worst_slack = std::min(worst_slack, bound - dist());
        if (dist() > bound) {
            c.require(false, "envelope broken at step " + std::to_string(step) + ": " +
                                 fmt(dist()) + " > " + fmt(bound));
            return;
        }
    }
    c.note("500 steps inside the gamma^n envelope (min slack " + fmt(worst_slack) + ")");
}

// ---------------------------------------------------------------------------
// criterion 3: mask statistics
// ---------------------------------------------------------------------------
void criterion_mask_statistics(Checker& c) {
    Rng rng(31337);
    nn::ParamStore<double> ps;
    auto tok = ps.param("mask", Tensor<double>::zeros({2}));
    Tensor<double> x({1, 100, 2}, 1.0);
    long total_masked = 0, total_tokens = 0;
    for (int batch = 0; batch < 100; ++batch) {
        auto mk = backbones::mask_features(ag::constant(Tensor<double>(x)), tok, {.ratio = 0.75},
                                           rng);
        const long count = std::count(mk.mask.begin(), mk.mask.end(), uint8_t(1));
        c.require(count == 75,
                  "batch " + std::to_string(batch) + " masked " + std::to_string(count));
        total_masked += count;
        total_tokens += 100;
    }
    c.require(total_masked * 4 == total_tokens * 3,
              "aggregate fraction is not exactly 0.75");
    c.note("100 batches of 100 tokens, each masked exactly 75; aggregate exactly 0.75");
}

// ---------------------------------------------------------------------------
// criterion 4: gradient checks
// ---------------------------------------------------------------------------
void criterion_gradient_checks(Checker& c) {
    auto score = eval::finite_diff_check("score", 1e-4);
    c.require(score.pass, "score path rel err " + fmt(score.max_rel_err));
    auto second = eval::finite_diff_check("second_order", 1e-3);
    c.require(second.pass, "second-order path rel err " + fmt(second.max_rel_err));

    // straight-through identity: dL/dF == dL/dD bitwise
    Rng rng(2024);
    auto cb = vq::Codebook<double>::init_random(8, 4, rng, 1.0);
    Tensor<double> f0({6, 4});
    for (long i = 0; i < f0.numel(); ++i) f0[i] = rng.normal();
    Tensor<double> w0({4, 3});
    for (long i = 0; i < w0.numel(); ++i) w0[i] = rng.normal();

    ag::Var<double> f = ag::leaf(Tensor<double>(f0));
    auto q = vq::quantize(f, cb);
    auto loss = ag::mean_all(ag::tanh_v(ag::matmul(q.st, ag::constant(Tensor<double>(w0)))));
    auto gf = ag::grad(loss, {f})[0]->value;

    ag::Var<double> dleaf = ag::leaf(Tensor<double>(q.vectors));
    auto loss2 = ag::mean_all(ag::tanh_v(ag::matmul(dleaf, ag::constant(Tensor<double>(w0)))));
    auto gd = ag::grad(loss2, {dleaf})[0]->value;
    c.require(gf.data == gd.data, "straight-through gradients are not bitwise identical");
    c.note("score " + fmt(score.max_rel_err) + ", second-order " + fmt(second.max_rel_err) +
           ", straight-through exact");
}

// ---------------------------------------------------------------------------
// criterion 5: alignment-loss oracle and chance level
// ---------------------------------------------------------------------------
void criterion_alignment_oracle(Checker& c) {
    // toy T=2, K=4 similarity matrix against an independently coded
    // softmax-CE oracle
    const long K = 4;
    Tensor<double> m({1, K, K});
    for (long j = 0; j < K; ++j) m[j * K + j] = 1.0;
    Tensor<double> v({1, 2, K}, {0.9, 0.1, -0.3, 0.2, -0.5, 0.7, 0.25, -0.1});
    const std::vector<long> amap{1, 3};
    const double eps = 0.1;

    auto oracle_row = [&](const std::vector<double>& sims, long pos) {
        double mx = -1e18;
        for (double s : sims) mx = std::max(mx, s / eps);
        double denom = 0;
        for (double s : sims) denom += std::exp(s / eps - mx);
        return -(sims[static_cast<size_t>(pos)] / eps - mx - std::log(denom));
    };
    const double expect =
        0.5 * (oracle_row({0.9, 0.1, -0.3, 0.2}, 1) + oracle_row({-0.5, 0.7, 0.25, -0.1}, 3));
    const double got = align::align_loss(ag::constant(Tensor<double>(v)),
                                         ag::constant(Tensor<double>(m)), amap, eps)
                           ->value[0];
    c.require(std::abs(got - expect) < 1e-10,
              "toy oracle mismatch: " + fmt(got) + " vs " + fmt(expect));

    // chance level ln K at K=32 on random unit features, 100 trials
    Rng rng(5150);
    const long K2 = 32, H = 64;
    double acc = 0;
    std::vector<long> amap2;
    for (long i = 0; i < 8; ++i) amap2.push_back(4 * i);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor<double> mv({1, K2, H}), vv({1, 8, H});
        for (auto* t : {&mv, &vv}) {
            for (long r = 0; r < t->dim(1); ++r) {
                double n = 0;
                for (long j = 0; j < H; ++j) {
                    (*t)[r * H + j] = rng.normal();
                    n += (*t)[r * H + j] * (*t)[r * H + j];
                }
                n = std::sqrt(n);
                for (long j = 0; j < H; ++j) (*t)[r * H + j] /= n;
            }
        }
        acc += align::align_loss(ag::constant(std::move(vv)), ag::constant(std::move(mv)), amap2,
                                 1.0)
                   ->value[0];
    }
    acc /= 100;
    const double lnk = std::log(32.0);
    c.require(std::abs(acc - lnk) <= 0.10 * lnk,
              "chance level " + fmt(acc) + " outside ln K +-10% (" + fmt(lnk) + ")");
    c.note("toy oracle " + fmt(got) + " (diff " + fmt(std::abs(got - expect)) +
           "), chance level " + fmt(acc) + " vs ln K " + fmt(lnk));
}

// ---------------------------------------------------------------------------
// criteria 6 and 7: desk-scale reference training and directional ablations
// ---------------------------------------------------------------------------
struct ReferenceRuns {
    std::vector<uint64_t> seeds{1, 2, 3};
    std::vector<std::string> rows{"full", "wo_align", "wo_act", "wo_dis"};
    // [row][seed]
    std::vector<std::vector<eval::EvalMetrics>> metrics;
    std::vector<double> rec_first50, rec_last50;  // stage-1 moving averages per seed
    bool ran = false;
};

Config reference_config() {
    Config cfg;  // desk defaults: 2000/1000 iters, lr 1e-3/3e-4, micro-batch 8
    return cfg;
}

void run_reference(ReferenceRuns& R, const std::string& tmp) {
    synth::SceneSpec spec;  // desk scene: 5 joints, K=32, T=8, 32x32
    spec.seed = 7;
    auto train_samples = synth::make_dataset<float>(spec, 200);
    PreppedData<float> train_data = PreppedData<float>::from_samples(train_samples, spec, 16);
    synth::SceneSpec espec = spec;
    espec.seed = 1007;
    auto eval_samples = synth::make_dataset<float>(espec, 100);
    PreppedData<float> eval_data = PreppedData<float>::from_samples(eval_samples, espec, 16);

    const Config base = reference_config();
    fs::create_directories(tmp);

    // stage 1 per seed, capturing the rec_motion halving statistics
    std::vector<std::string> s1(R.seeds.size());
    R.rec_first50.resize(R.seeds.size());
    R.rec_last50.resize(R.seeds.size());
    eval::detail::parallel_for(static_cast<long>(R.seeds.size()), 2, [&](long i) {
        Config c = base;
        c.train.seed = R.seeds[static_cast<size_t>(i)];
        Trainer<float> tr(c, train_data);
        tr.run_steps(c.train.stage1_iters);
        double first = 0, last = 0;
        const auto& h = tr.history();
        for (int k = 0; k < 50; ++k) {
            first += *h[static_cast<size_t>(k)].rec_motion / 50.0;
            last += *h[h.size() - 1 - static_cast<size_t>(k)].rec_motion / 50.0;
        }
        R.rec_first50[static_cast<size_t>(i)] = first;
        R.rec_last50[static_cast<size_t>(i)] = last;
        s1[static_cast<size_t>(i)] = tmp + "/stage1_seed" +
                                     std::to_string(R.seeds[static_cast<size_t>(i)]) + ".ckpt";
        tr.save(s1[static_cast<size_t>(i)]);
    });

    // stage-2 rows x seeds
    R.metrics.assign(R.rows.size(), std::vector<eval::EvalMetrics>(R.seeds.size()));
    struct Task {
        size_t row, seed;
    };
    std::vector<Task> tasks;
    for (size_t r = 0; r < R.rows.size(); ++r)
        for (size_t s = 0; s < R.seeds.size(); ++s) tasks.push_back({r, s});
    eval::detail::parallel_for(static_cast<long>(tasks.size()), 2, [&](long ti) {
        const Task& tk = tasks[static_cast<size_t>(ti)];
        Config c = base;
        c.train.seed = R.seeds[tk.seed];
        c = train::config_with_overrides(c, eval::ablation_row_overrides(R.rows[tk.row]));
        Trainer<float> tr = Trainer<float>::from_stage1(s1[tk.seed], c, train_data);
        tr.run_steps(c.train.stage2_iters);
        R.metrics[tk.row][tk.seed] = eval::eval_metrics(tr.model(), c, eval_data);
    });
    R.ran = true;
}

double row_mean(const ReferenceRuns& R, const std::string& row,
                double eval::EvalMetrics::*field) {
    for (size_t r = 0; r < R.rows.size(); ++r)
        if (R.rows[r] == row) {
            double acc = 0;
            for (const auto& m : R.metrics[r]) acc += m.*field;
            return acc / static_cast<double>(R.metrics[r].size());
        }
    throw DomainError("row not found: " + row);
}

void criterion_desk_training(Checker& c, const ReferenceRuns& R) {
    for (size_t i = 0; i < R.seeds.size(); ++i) {
        const std::string tag = "seed " + std::to_string(R.seeds[i]);
        c.require(R.rec_last50[i] <= 0.5 * R.rec_first50[i],
                  tag + ": stage-1 rec_motion " + fmt(R.rec_first50[i]) + " -> " +
                      fmt(R.rec_last50[i]) + " not halved");
        const auto& m = R.metrics[0][i];  // full row
        c.require(m.retrieval_top1 >= 5.0 / 32.0,
                  tag + ": retrieval top1 " + fmt(m.retrieval_top1) + " < 0.15625");
        c.require(m.perp_motion >= 8.0, tag + ": motion perplexity " + fmt(m.perp_motion) + " < 8");
        c.require(m.perp_video >= 8.0, tag + ": video perplexity " + fmt(m.perp_video) + " < 8");
    }
    std::ostringstream os;
    os << "top1 per seed:";
    for (size_t i = 0; i < R.seeds.size(); ++i) os << " " << fmt(R.metrics[0][i].retrieval_top1);
    os << "; rec halving:";
    for (size_t i = 0; i < R.seeds.size(); ++i)
        os << " " << fmt(R.rec_first50[i]) << "->" << fmt(R.rec_last50[i]);
    c.note(os.str());
}

void criterion_ablations(Checker& c, const ReferenceRuns& R) {
    const double full_top1 = row_mean(R, "full", &eval::EvalMetrics::retrieval_top1);
    const double noalign_top1 = row_mean(R, "wo_align", &eval::EvalMetrics::retrieval_top1);
    c.require(full_top1 >= 1.05 * noalign_top1,
              "full top1 " + fmt(full_top1) + " not >= 1.05 x wo_align " + fmt(noalign_top1));

    const double full_vel = row_mean(R, "full", &eval::EvalMetrics::velocity_mse);
    const double noact_vel = row_mean(R, "wo_act", &eval::EvalMetrics::velocity_mse);
    c.require(full_vel <= 0.90 * noact_vel,
              "full velocity mse " + fmt(full_vel) + " not <= 0.9 x wo_act " + fmt(noact_vel));

    const double nodis_vel = row_mean(R, "wo_dis", &eval::EvalMetrics::velocity_mse);
    c.require(nodis_vel <= noact_vel, "wo_dis velocity mse " + fmt(nodis_vel) +
                                          " degrades more than wo_act " + fmt(noact_vel));
    c.note("top1 full/wo_align " + fmt(full_top1) + "/" + fmt(noalign_top1) +
           "; velocity full/wo_dis/wo_act " + fmt(full_vel) + "/" + fmt(nodis_vel) + "/" +
           fmt(noact_vel));
}

// ---------------------------------------------------------------------------
// criterion 8: reproducibility and resume
// ---------------------------------------------------------------------------
void criterion_reproducibility(Checker& c, const std::string& tmp) {
    synth::SceneSpec spec;
    spec.seed = 7;
    auto samples = synth::make_dataset<float>(spec, 24);
    PreppedData<float> data = PreppedData<float>::from_samples(samples, spec, 16);

    Config cfg;
    cfg.train.stage1_iters = 50;
    cfg.train.stage2_iters = 30;

    auto run_stream = [&](const std::string& path) {
        Trainer<float> tr(cfg, data);
        train::MetricsWriter mw(path);
        tr.run_steps(cfg.train.stage1_iters, &mw);
        tr.save(tmp + "/repro_s1.ckpt");
        Trainer<float> s2 = Trainer<float>::from_stage1(tmp + "/repro_s1.ckpt", cfg, data);
        train::MetricsWriter mw2(path, /*append=*/true);
        s2.run_steps(cfg.train.stage2_iters, &mw2);
    };
    run_stream(tmp + "/metrics_a.jsonl");
    run_stream(tmp + "/metrics_b.jsonl");
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const std::string sa = slurp(tmp + "/metrics_a.jsonl");
    c.require(!sa.empty() && sa == slurp(tmp + "/metrics_b.jsonl"),
              "metrics streams differ between identical runs");

    // resume: run 40, checkpoint at 20, continue; per-step totals within 1e-6
    Trainer<float> ref(cfg, data);
    ref.run_steps(40);
    Trainer<float> part(cfg, data);
    part.run_steps(20);
    part.save(tmp + "/resume.ckpt");
    Trainer<float> resumed = Trainer<float>::load(tmp + "/resume.ckpt", data);
    resumed.run_steps(20);
    double worst = 0;
    for (size_t i = 0; i < 20; ++i) {
        const auto& r = resumed.history()[i];
        const auto& u = ref.history()[i + 20];
        worst = std::max(worst, std::abs(r.total - u.total));
    }
    c.require(worst <= 1e-6, "resume deviates by " + fmt(worst) + " per step");
    c.note("identical streams; resume max per-step deviation " + fmt(worst));
}

}  // namespace

int main() {
    const std::string tmp =
        (fs::temp_directory_path() / "humocon_acceptance").string();
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    ReferenceRuns R;
    bool all_ok = true;
    auto report = [&](int id, const std::string& title, Checker& c) {
        std::printf("[%s] criterion %d: %s%s%s\n", c.ok ? "PASS" : "FAIL", id, title.c_str(),
                    c.detail.empty() ? "" : " -- ", c.detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && c.ok;
    };

    {
        Checker c;
        criterion_quantizer_oracle(c);
        report(1, "quantizer oracle equivalence", c);
    }
    {
        Checker c;
        criterion_ema_envelope(c);
        report(2, "EMA convergence envelope", c);
    }
    {
        Checker c;
        criterion_mask_statistics(c);
        report(3, "mask statistics at sigma=0.75", c);
    }
    {
        Checker c;
        criterion_gradient_checks(c);
        report(4, "gradient checks (score, second-order, straight-through)", c);
    }
    {
        Checker c;
        criterion_alignment_oracle(c);
        report(5, "alignment-loss oracle and chance level", c);
    }
    {
        Checker c6, c7;
        try {
            run_reference(R, tmp + "/reference");
            criterion_desk_training(c6, R);
            criterion_ablations(c7, R);
        } catch (const std::exception& e) {
            c6.require(false, std::string("reference runs failed: ") + e.what());
            c7.require(false, std::string("reference runs failed: ") + e.what());
        }
        report(6, "desk-scale training thresholds (3 seeds)", c6);
        report(7, "directional ablations (3 seeds)", c7);
    }
    {
        Checker c;
        try {
            criterion_reproducibility(c, tmp);
        } catch (const std::exception& e) {
            c.require(false, std::string("exception: ") + e.what());
        }
        report(8, "reproducibility and checkpoint resume", c);
    }

    fs::remove_all(tmp);
    return all_ok ? 0 : 1;
}
