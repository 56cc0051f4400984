// humocon command-line driver: data generation, two-stage pre-training,
// evaluation, the ablation grid, feature export and report rendering.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "humocon/humocon.hpp"

namespace fs = std::filesystem;
using Scalar = float;  // training dtype for the CLI; tests cover double too

using namespace humocon;
using train::Config;
using train::PreppedData;
using train::Trainer;

namespace {

struct GenDataArgs {
    uint64_t seed = 7;
    long count = 200;
    std::string out;
    long joints = 5, k = 32, t = 8, ratio = 4, height = 32, width = 32;
    double sigma = 1.5;
    std::string family = "sinusoidal-chain";
};

int cmd_gen_data(const GenDataArgs& a) {
    synth::SceneSpec spec;
    spec.num_joints = a.joints;
    spec.seq_len_motion = a.k;
    spec.seq_len_video = a.t;
    spec.frame_rate_ratio = a.ratio;
    spec.image_h = a.height;
    spec.image_w = a.width;
    spec.blob_sigma = a.sigma;
    spec.family = synth::family_from_name(a.family);
    spec.seed = a.seed;
    spec.validate();
    auto samples = synth::make_dataset<Scalar>(spec, a.count);
    synth::write_dataset(samples, a.out, spec);
    auto manifest = synth::read_manifest(a.out);
    std::printf("dataset written: %s\n", a.out.c_str());
    std::printf("  format: %s  count: %ld  seed: %llu\n", manifest.format.c_str(), manifest.count,
                static_cast<unsigned long long>(manifest.seed));
    std::printf("  content hash: %s\n", hash_hex(synth::dataset_hash(a.out)).c_str());
    return 0;
}

struct PretrainArgs {
    std::string config_path, data_dir, out_dir, stage = "all";
    std::string stage1_ckpt, resume;
    long iters = -1;
    std::vector<std::string> sets;
};

Config load_base_config(const std::string& path, const std::vector<std::string>& sets) {
    Config cfg = path.empty() ? Config{} : train::load_config_file(path);
    return train::config_with_overrides(cfg, sets);
}

int cmd_pretrain(const PretrainArgs& a) {
    Config cfg = load_base_config(a.config_path, a.sets);
    if (a.iters >= 0) {
        if (a.stage == "1" || a.stage == "all") cfg.train.stage1_iters = a.iters;
        if (a.stage == "2" || a.stage == "all") cfg.train.stage2_iters = a.iters;
    }
    HUMOCON_CHECK(a.stage == "1" || a.stage == "2" || a.stage == "all", ConfigError,
                  "--stage must be 1, 2 or all");
    fs::create_directories(a.out_dir);
    PreppedData<Scalar> data = PreppedData<Scalar>::load(a.data_dir, cfg.model.patch_size);
    std::printf("rng master seed: %llu (single generator, all streams derived)\n",
                static_cast<unsigned long long>(cfg.train.seed));

    const std::string metrics_path = a.out_dir + "/metrics.jsonl";
    const std::string s1_path = a.out_dir + "/stage1.ckpt";
    const std::string s2_path = a.out_dir + "/stage2.ckpt";

    if (!a.resume.empty()) {
        Trainer<Scalar> tr = Trainer<Scalar>::load(a.resume, data);
        const long target = tr.stage() == 1 ? cfg.train.stage1_iters : cfg.train.stage2_iters;
        const long remaining = std::max(0L, target - tr.step());
        train::MetricsWriter mw(metrics_path, /*append=*/true);
        std::printf("resuming stage %d at step %ld, %ld steps remaining\n", tr.stage(), tr.step(),
                    remaining);
        tr.run_steps(remaining, &mw);
        const std::string out = tr.stage() == 1 ? s1_path : s2_path;
        tr.save(out);
        std::printf("checkpoint written: %s\n", out.c_str());
        return 0;
    }

    if (a.stage == "1" || a.stage == "all") {
        Trainer<Scalar> tr(cfg, data);
        train::MetricsWriter mw(metrics_path, /*append=*/false);
        tr.run_steps(cfg.train.stage1_iters, &mw);
        tr.save(s1_path);
        std::printf("stage 1 done (%ld steps); checkpoint: %s\n", cfg.train.stage1_iters,
                    s1_path.c_str());
    }
    if (a.stage == "2" || a.stage == "all") {
        std::string s1src = !a.stage1_ckpt.empty() ? a.stage1_ckpt : s1_path;
        HUMOCON_CHECK(fs::exists(s1src), IoError,
                      "stage-2 training needs a stage-1 checkpoint; none found at " + s1src +
                          " (run --stage 1 first or pass --stage1-ckpt)");
        Trainer<Scalar> tr = Trainer<Scalar>::from_stage1(s1src, cfg, data);
        train::MetricsWriter mw(metrics_path, /*append=*/a.stage == "all");
        tr.run_steps(cfg.train.stage2_iters, &mw);
        tr.save(s2_path);
        std::printf("stage 2 done (%ld steps); checkpoint: %s\n", cfg.train.stage2_iters,
                    s2_path.c_str());
    }
    std::printf("metrics: %s\n", metrics_path.c_str());
    return 0;
}

struct EvalArgs {
    std::string ckpt, data_dir, out_dir;
    bool gradcheck = false;
};

int cmd_eval(const EvalArgs& a) {
    auto ck = train::load_checkpoint<Scalar>(a.ckpt);
    PreppedData<Scalar> data = PreppedData<Scalar>::load(a.data_dir, ck.cfg.model.patch_size);
    Trainer<Scalar> tr = Trainer<Scalar>::load(a.ckpt, data);
    auto metrics = eval::eval_metrics(tr.model(), tr.cfg(), data);
    auto j = metrics.to_json();
    std::printf("%s\n", j.dump(2).c_str());

    bool all_pass = true;
    if (a.gradcheck) {
        struct Sel {
            const char* name;
            double tol;
        };
        for (const Sel& s : {Sel{"linear", 1e-8}, Sel{"score", 1e-4}, Sel{"second_order", 1e-3},
                             Sel{"encoder", 1e-4}}) {
            auto rep = eval::finite_diff_check(s.name, s.tol);
            std::printf("gradcheck %-12s max_rel_err=%.3e tol=%.0e  %s\n", rep.selector.c_str(),
                        rep.max_rel_err, rep.tolerance, rep.pass ? "PASS" : "FAIL");
            all_pass = all_pass && rep.pass;
        }
    }
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        std::ofstream f(a.out_dir + "/eval.json");
        f << j.dump(2) << "\n";
        std::printf("eval written: %s/eval.json\n", a.out_dir.c_str());
    }
    HUMOCON_CHECK(all_pass, DomainError, "gradient checks failed");
    return 0;
}

struct AblateArgs {
    std::string config_path, data_dir, eval_dir, out_dir;
    std::string rows = "full,wo_align,wo_act,wo_dis";
    std::string seeds = "1,2,3";
    long jobs = 0;
    std::vector<std::string> sets;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string::npos ? comma : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int cmd_ablate(const AblateArgs& a) {
    Config cfg = load_base_config(a.config_path, a.sets);
    PreppedData<Scalar> data = PreppedData<Scalar>::load(a.data_dir, cfg.model.patch_size);
    PreppedData<Scalar> eval_data = PreppedData<Scalar>::load(a.eval_dir, cfg.model.patch_size);
    std::vector<uint64_t> seeds;
    for (const auto& s : split_csv(a.seeds)) seeds.push_back(std::stoull(s));
    long jobs = a.jobs > 0 ? a.jobs : static_cast<long>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    auto table = eval::run_ablation(cfg, split_csv(a.rows), seeds, data, eval_data, a.out_dir,
                                    jobs);
    std::printf("%s", table.render_text().c_str());
    std::printf("ablation table written: %s/ablation.json\n", a.out_dir.c_str());
    return 0;
}

struct ExportArgs {
    std::string ckpt, data_dir, out_dir;
    std::string expect_ckpt_hash, expect_config_hash;
};

int cmd_export(const ExportArgs& a) {
    const std::string ckpt_hash = hash_hex(io::file_hash(a.ckpt));
    auto ck = train::load_checkpoint<Scalar>(a.ckpt);
    const std::string cfg_dump = train::config_to_json(ck.cfg).dump();
    const std::string config_hash = hash_hex(fnv1a64(cfg_dump.data(), cfg_dump.size()));
    if (!a.expect_ckpt_hash.empty() && a.expect_ckpt_hash != ckpt_hash)
        throw IoError("refusing to export: checkpoint hash mismatch (expected " +
                      a.expect_ckpt_hash + ", file has " + ckpt_hash + ")");
    if (!a.expect_config_hash.empty() && a.expect_config_hash != config_hash)
        throw IoError("refusing to export: config hash mismatch (expected " +
                      a.expect_config_hash + ", checkpoint carries " + config_hash + ")");
    PreppedData<Scalar> data = PreppedData<Scalar>::load(a.data_dir, ck.cfg.model.patch_size);
    Trainer<Scalar> tr = Trainer<Scalar>::load(a.ckpt, data);
    cli::write_export_bundle(tr.model(), data, a.out_dir, ckpt_hash, config_hash);
    std::printf("export bundle written: %s (%ld samples)\n", a.out_dir.c_str(), data.count());
    std::printf("  checkpoint hash: %s\n  config hash: %s\n", ckpt_hash.c_str(),
                config_hash.c_str());
    return 0;
}

int cmd_report(const std::string& results_dir) {
    auto r = eval::report(results_dir);
    for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
    for (const auto& f : r.files_written) std::printf("wrote %s/%s\n", results_dir.c_str(), f.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"humocon: multi-modal motion-concept encoder pre-training"};
    app.require_subcommand(1);
    int rc = 0;
    std::function<int()> run;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    auto ga = std::make_shared<GenDataArgs>();
    gen->add_option("--seed", ga->seed, "master scene seed");
    gen->add_option("--count", ga->count, "number of paired samples")->check(CLI::NonNegativeNumber);
    gen->add_option("--out", ga->out, "output dataset directory")->required();
    gen->add_option("--joints", ga->joints, "chain joint count");
    gen->add_option("--k", ga->k, "motion frames per sequence");
    gen->add_option("--t", ga->t, "video keyframes per sequence");
    gen->add_option("--ratio", ga->ratio, "motion frames per video frame (K=r*T)");
    gen->add_option("--height", ga->height, "image height");
    gen->add_option("--width", ga->width, "image width");
    gen->add_option("--sigma", ga->sigma, "blob sigma in pixels");
    gen->add_option("--family", ga->family, "sinusoidal-chain | random-walk-chain");
    gen->callback([&, ga] { run = [ga] { return cmd_gen_data(*ga); }; });

    auto* pre = app.add_subcommand("pretrain", "run encoder pre-training");
    auto pa = std::make_shared<PretrainArgs>();
    pre->add_option("--config", pa->config_path, "config JSON file (defaults are desk scale)");
    pre->add_option("--data", pa->data_dir, "training dataset directory")->required();
    pre->add_option("--out", pa->out_dir, "output directory")->required();
    pre->add_option("--stage", pa->stage, "1 | 2 | all");
    pre->add_option("--stage1-ckpt", pa->stage1_ckpt, "stage-1 checkpoint for --stage 2");
    pre->add_option("--resume", pa->resume, "resume from a checkpoint");
    pre->add_option("--iters", pa->iters, "override iteration count for the selected stage");
    pre->add_option("--set", pa->sets, "config override section.key=value")->take_all();
    pre->callback([&, pa] { run = [pa] { return cmd_pretrain(*pa); }; });

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a held-out paired set");
    auto ea = std::make_shared<EvalArgs>();
    ev->add_option("--ckpt", ea->ckpt, "checkpoint path")->required();
    ev->add_option("--data", ea->data_dir, "held-out dataset directory")->required();
    ev->add_option("--out", ea->out_dir, "optional output directory for eval.json");
    ev->add_flag("--gradcheck", ea->gradcheck, "also run finite-difference gradient checks");
    ev->callback([&, ea] { run = [ea] { return cmd_eval(*ea); }; });

    auto* ab = app.add_subcommand("ablate", "train the loss-ablation grid and score each row");
    auto aa = std::make_shared<AblateArgs>();
    ab->add_option("--config", aa->config_path, "config JSON file");
    ab->add_option("--data", aa->data_dir, "training dataset directory")->required();
    ab->add_option("--eval-data", aa->eval_dir, "held-out dataset directory")->required();
    ab->add_option("--out", aa->out_dir, "results directory")->required();
    ab->add_option("--rows", aa->rows, "comma-separated row names");
    ab->add_option("--seeds", aa->seeds, "comma-separated seeds");
    ab->add_option("--jobs", aa->jobs, "parallel row workers (default: hardware threads)");
    ab->add_option("--set", aa->sets, "config override section.key=value")->take_all();
    ab->callback([&, aa] { run = [aa] { return cmd_ablate(*aa); }; });

    auto* ex = app.add_subcommand("export", "export discrete/aligned features for downstream use");
    auto xa = std::make_shared<ExportArgs>();
    ex->add_option("--ckpt", xa->ckpt, "checkpoint path")->required();
    ex->add_option("--data", xa->data_dir, "dataset directory")->required();
    ex->add_option("--out", xa->out_dir, "output bundle directory")->required();
    ex->add_option("--expect-ckpt-hash", xa->expect_ckpt_hash, "refuse unless checkpoint matches");
    ex->add_option("--expect-config-hash", xa->expect_config_hash, "refuse unless config matches");
    ex->callback([&, xa] { run = [xa] { return cmd_export(*xa); }; });

    auto* rp = app.add_subcommand("report", "render plots and a text summary from a results dir");
    auto rdir = std::make_shared<std::string>();
    rp->add_option("--results", *rdir, "results directory")->required();
    rp->callback([&, rdir] { run = [rdir] { return cmd_report(*rdir); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        rc = run ? run() : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return rc;
}
