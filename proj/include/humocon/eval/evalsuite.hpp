#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "humocon/eval/svg.hpp"
#include "humocon/train/trainer.hpp"

// Quantitative verification harness: retrieval metrics in the aligned space,
// finite-difference gradient checks, the loss-ablation grid and a
// reproducible report generator.

namespace humocon::eval {

using train::Config;
using train::Model;
using train::PreppedData;
using train::Trainer;

struct RetrievalResult {
    double top1 = 0, top5 = 0;
    double chance = 0;
    std::vector<std::pair<double, double>> per_sequence;
};

// Ranking core: a hit at k requires fewer than k candidates with similarity
// >= the positive's. Ties count against the positive, so a collapsed
// embedding cannot fake a hit.
template <class T>
void retrieval_rank_counts(const T* sims, long tn, long k, const std::vector<long>& align_map,
                           long* h1, long* h5) {
    *h1 = 0;
    *h5 = 0;
    for (long i = 0; i < tn; ++i) {
        const long pos = align_map[static_cast<size_t>(i)];
        const T* row = sims + i * k;
        long rank = 0;
        for (long j = 0; j < k; ++j)
            if (j != pos && row[j] >= row[pos]) ++rank;
        if (rank < 1) ++*h1;
        if (rank < 5) ++*h5;
    }
}

// For each video frame, rank all K motion frames of its own pair by cosine
// similarity in the aligned space.
template <class T>
RetrievalResult retrieval_eval(Model<T>& model, const PreppedData<T>& data) {
    HUMOCON_CHECK(data.count() > 0, DomainError, "retrieval_eval needs a nonempty paired set");
    const long Tn = data.scene.seq_len_video;
    const long K = data.scene.seq_len_motion;
    const long Pp = model.ecfg_v.patches_per_frame();
    RetrievalResult res;
    res.chance = 1.0 / static_cast<double>(K);
    long hits1 = 0, hits5 = 0, total = 0;
    for (long s = 0; s < data.count(); ++s) {
        ag::Var<T> poses = ag::constant(
            Tensor<T>({1, K, data.scene.pose_dim()}, data.poses[static_cast<size_t>(s)].data));
        auto q_m = vq::quantize(model.enc_m.forward(poses), model.cb_m);
        ag::Var<T> a_m = model.proj_m.forward(q_m.st);  // (1,K,H)

        ag::Var<T> patches = ag::constant(Tensor<T>(
            {1, data.patches[static_cast<size_t>(s)].dim(0), data.patches[static_cast<size_t>(s)].dim(1)},
            data.patches[static_cast<size_t>(s)].data));
        auto q_v = vq::quantize(model.enc_v.forward(patches), model.cb_v);
        ag::Var<T> a_v = model.proj_v.forward(align::pool_frames(q_v.st, Tn, Pp));  // (1,T,H)

        ag::Var<T> sims = ag::bmm(a_v, a_m, false, true);  // (1,T,K)
        long h1 = 0, h5 = 0;
        retrieval_rank_counts(sims->value.data.data(), Tn, K, data.align_map, &h1, &h5);
        res.per_sequence.push_back({static_cast<double>(h1) / Tn, static_cast<double>(h5) / Tn});
        hits1 += h1;
        hits5 += h5;
        total += Tn;
    }
    res.top1 = static_cast<double>(hits1) / static_cast<double>(total);
    res.top5 = static_cast<double>(hits5) / static_cast<double>(total);
    return res;
}

struct EvalMetrics {
    double rec_motion_mse = 0, rec_video_mse = 0, rec_mse = 0;
    double velocity_motion_mse = 0, velocity_video_mse = 0, velocity_mse = 0;
    double retrieval_top1 = 0, retrieval_top5 = 0;
    double perp_motion = 0, perp_video = 0;

    nlohmann::ordered_json to_json() const {
        return {{"rec_motion_mse", rec_motion_mse},
                {"rec_video_mse", rec_video_mse},
                {"rec_mse", rec_mse},
                {"velocity_motion_mse", velocity_motion_mse},
                {"velocity_video_mse", velocity_video_mse},
                {"velocity_mse", velocity_mse},
                {"retrieval_top1", retrieval_top1},
                {"retrieval_top5", retrieval_top5},
                {"perp_motion", perp_motion},
                {"perp_video", perp_video}};
    }
};

// Deterministic held-out evaluation: masked reconstruction under a fixed rng,
// velocity prediction error through the gradient features, retrieval and
// codebook utilization.
template <class T>
EvalMetrics eval_metrics(Model<T>& model, const Config& cfg, const PreppedData<T>& data) {
    HUMOCON_CHECK(data.count() > 0, DomainError, "eval needs a nonempty paired set");
    EvalMetrics em;
    Rng mask_rng(0xe7a1u);  // fixed eval stream
    std::vector<long> idx_m_all, idx_v_all;
    for (long s = 0; s < data.count(); ++s) {
        // motion branch
        Tensor<T> poses_t({1, data.scene.seq_len_motion, data.scene.pose_dim()},
                          data.poses[static_cast<size_t>(s)].data);
        ag::Var<T> poses = ag::constant(Tensor<T>(poses_t));
        ag::Var<T> f_m = ag::leaf(Tensor<T>(model.enc_m.forward(poses)->value), true);
        auto q_m = vq::quantize(f_m, model.cb_m);
        idx_m_all.insert(idx_m_all.end(), q_m.indices.begin(), q_m.indices.end());
        auto masked_m = backbones::mask_features(q_m.st, model.mask_m,
                                                 {.ratio = cfg.loss.mask_ratio}, mask_rng);
        em.rec_motion_mse +=
            static_cast<double>(backbones::rec_loss(model.dec_m.forward(masked_m.tokens), poses_t)
                                    ->value[0]);

        // video branch
        Tensor<T> patches_t({1, data.patches[static_cast<size_t>(s)].dim(0),
                             data.patches[static_cast<size_t>(s)].dim(1)},
                            data.patches[static_cast<size_t>(s)].data);
        ag::Var<T> patches = ag::constant(Tensor<T>(patches_t));
        ag::Var<T> f_v = ag::leaf(Tensor<T>(model.enc_v.forward(patches)->value), true);
        auto q_v = vq::quantize(f_v, model.cb_v);
        idx_v_all.insert(idx_v_all.end(), q_v.indices.begin(), q_v.indices.end());
        auto masked_v = backbones::mask_features(q_v.st, model.mask_v,
                                                 {.ratio = cfg.loss.mask_ratio}, mask_rng);
        em.rec_video_mse +=
            static_cast<double>(backbones::rec_loss(model.dec_v.forward(masked_v.tokens), patches_t)
                                    ->value[0]);

        // velocity through gradient features (first order is enough for
        // evaluation values)
        ag::Var<T> codes_m = ag::constant(Tensor<T>(model.cb_m.codes));
        ag::Var<T> codes_v = ag::constant(Tensor<T>(model.cb_v.codes));
        ag::Var<T> g_m = losses::grad_feature(model.disc_m, codes_m, f_m, q_m.indices, false);
        ag::Var<T> g_v = losses::grad_feature(model.disc_v, codes_v, f_v, q_v.indices, false);
        Tensor<T> delta_t({1, data.scene.seq_len_motion, data.scene.pose_dim()},
                          data.delta[static_cast<size_t>(s)].data);
        Tensor<T> flow_t({1, data.flow_patches[static_cast<size_t>(s)].dim(0),
                          data.flow_patches[static_cast<size_t>(s)].dim(1)},
                         data.flow_patches[static_cast<size_t>(s)].data);
        em.velocity_motion_mse +=
            static_cast<double>(losses::act_loss(model.vel_m, poses, g_m, delta_t)->value[0]);
        em.velocity_video_mse +=
            static_cast<double>(losses::act_loss(model.vel_v, patches, g_v, flow_t)->value[0]);
    }
    const double n = static_cast<double>(data.count());
    em.rec_motion_mse /= n;
    em.rec_video_mse /= n;
    em.rec_mse = em.rec_motion_mse + em.rec_video_mse;
    em.velocity_motion_mse /= n;
    em.velocity_video_mse /= n;
    em.velocity_mse = em.velocity_motion_mse + em.velocity_video_mse;
    em.perp_motion = vq::perplexity(idx_m_all, model.cb_m.size());
    em.perp_video = vq::perplexity(idx_v_all, model.cb_v.size());
    auto rr = retrieval_eval(model, data);
    em.retrieval_top1 = rr.top1;
    em.retrieval_top5 = rr.top5;
    return em;
}

// ---------------------------------------------------------------------------
// finite-difference checks
// ---------------------------------------------------------------------------

struct FiniteDiffReport {
    std::string selector;
    double max_rel_err = 0;
    double tolerance = 0;
    bool pass = false;
};

namespace fd_detail {

template <class F>
double probe(F&& loss_value, ag::Var<double> theta, const Tensor<double>& analytic, long probes,
             double h) {
    double worst = 0;
    for (long p = 0; p < probes; ++p) {
        const long i = (p * 197 + 13) % theta->value.numel();
        const double keep = theta->value[i];
        theta->value[i] = keep + h;
        const double fp = loss_value();
        theta->value[i] = keep - h;
        const double fm = loss_value();
        theta->value[i] = keep;
        const double num = (fp - fm) / (2 * h);
        const double an = analytic[i];
        const double denom = std::max({std::abs(num), std::abs(an), 1e-8});
        worst = std::max(worst, std::abs(num - an) / denom);
    }
    return worst;
}

}  // namespace fd_detail

// Central differences against analytic gradients on small double-precision
// fixtures. Selectors: linear | score | second_order | encoder.
inline FiniteDiffReport finite_diff_check(const std::string& selector, double tolerance) {
    using Td = Tensor<double>;
    Rng rng(4242);
    auto randt = [&](const Shape& s, double sc = 1.0) {
        Td t(s);
        for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * sc;
        return t;
    };
    FiniteDiffReport rep;
    rep.selector = selector;
    rep.tolerance = tolerance;

    if (selector == "linear") {
        nn::ParamStore<double> ps;
        nn::Linear<double> lin(ps, "lin", 6, 4, rng);
        Td x = randt({5, 6});
        Td r = randt({5, 4});
        auto loss = [&] {
            return ag::mean_all(
                       ag::mul(lin.forward(ag::constant(Td(x))), ag::constant(Td(r))))
                ->value[0];
        };
        Td analytic =
            ag::grad(ag::mean_all(
                         ag::mul(lin.forward(ag::constant(Td(x))), ag::constant(Td(r)))),
                     {lin.weight})[0]
                ->value;
        rep.max_rel_err = fd_detail::probe(loss, lin.weight, analytic, 12, 1e-6);
    } else if (selector == "score") {
        nn::ParamStore<double> ps;
        losses::DiscriminatorConfig dc;
        dc.code_dim = 16;
        dc.state_dim = 16;
        dc.net_hidden = 8;
        dc.gen_hidden = 8;
        losses::HyperDiscriminator<double> disc(ps, "disc", dc, rng);
        Td codes = randt({6, 16});
        Td states = randt({4, 16});
        std::vector<long> idx{0, 2, 4, 1};
        auto loss_var = [&] {
            ag::Var<double> cos = disc.cosines_assigned(ag::constant(Td(codes)),
                                                        ag::constant(Td(states)), idx);
            return ag::mean_all(losses::score_from_cosine(cos));
        };
        auto loss = [&] { return loss_var()->value[0]; };
        ag::Var<double> theta = disc.gens[1].fc2.weight;
        Td analytic = ag::grad(loss_var(), {theta})[0]->value;
        rep.max_rel_err = fd_detail::probe(loss, theta, analytic, 12, 1e-6);
    } else if (selector == "second_order") {
        nn::ParamStore<double> ps;
        losses::DiscriminatorConfig dc;
        dc.code_dim = 8;
        dc.state_dim = 8;
        dc.net_hidden = 6;
        dc.gen_hidden = 6;
        losses::HyperDiscriminator<double> disc(ps, "disc", dc, rng);
        losses::VelocityDecoder<double> vdec(
            ps, "vel", {.state_dim = 3, .code_dim = 8, .hidden = 6, .out_dim = 3}, rng);
        Td codes = randt({4, 8});
        Td f0 = randt({2, 8});
        Td st = randt({2, 3});
        Td tgt = randt({2, 3});
        std::vector<long> idx{1, 3};
        auto loss_var = [&] {
            ag::Var<double> f = ag::leaf(Td(f0));
            ag::Var<double> g =
                losses::grad_feature(disc, ag::constant(Td(codes)), f, idx, true);
            return losses::act_loss(vdec, ag::constant(Td(st)), g, tgt);
        };
        auto loss = [&] { return loss_var()->value[0]; };
        ag::Var<double> theta = disc.gens[0].fc2.weight;
        Td analytic = ag::grad(loss_var(), {theta})[0]->value;
        rep.max_rel_err = fd_detail::probe(loss, theta, analytic, 12, 1e-4);
    } else if (selector == "encoder") {
        nn::ParamStore<double> ps;
        backbones::EncoderConfig cfg;
        cfg.modality = backbones::Modality::Motion;
        cfg.input_dim = 4;
        cfg.seq_len = 6;
        cfg.hidden_dim = 16;
        cfg.code_dim = 8;
        cfg.num_layers = 1;
        cfg.num_heads = 2;
        cfg.mlp_dim = 32;
        backbones::MotionEncoder<double> enc(ps, "enc", cfg, rng);
        Td x = randt({1, 6, 4});
        Td r = randt({1, 6, 8});
        auto loss_var = [&] {
            return ag::mean_all(ag::mul(enc.forward(ag::constant(Td(x))), ag::constant(Td(r))));
        };
        auto loss = [&] { return loss_var()->value[0]; };
        ag::Var<double> theta = enc.stem.weight;
        Td analytic = ag::grad(loss_var(), {theta})[0]->value;
        rep.max_rel_err = fd_detail::probe(loss, theta, analytic, 12, 1e-6);
    } else {
        throw ConfigError("unknown finite-diff selector '" + selector + "'");
    }
    rep.pass = rep.max_rel_err < tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// ablation grid
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& ablation_row_names() {
    static const std::vector<std::string> rows{"full",   "wo_rec", "wo_dis_act",
                                               "wo_act", "wo_dis", "wo_align"};
    return rows;
}

inline std::vector<std::string> ablation_row_overrides(const std::string& row) {
    if (row == "full") return {};
    if (row == "wo_rec") return {"loss.rec=off"};
    if (row == "wo_dis_act") return {"loss.dis=off", "loss.act=off"};
    if (row == "wo_act") return {"loss.act=off"};
    if (row == "wo_dis") return {"loss.dis=off"};
    if (row == "wo_align") return {"loss.align=off"};
    throw ConfigError("unknown ablation row '" + row + "'");
}

struct AblationRowResult {
    std::string name;
    bool ok = false;
    std::string error;
    std::vector<EvalMetrics> per_seed;
    EvalMetrics mean, stddev;
};

struct AblationTable {
    std::vector<uint64_t> seeds;
    std::vector<AblationRowResult> rows;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json per = nlohmann::ordered_json::array();
            for (const auto& m : r.per_seed) per.push_back(m.to_json());
            jrows.push_back({{"name", r.name},
                             {"ok", r.ok},
                             {"error", r.error},
                             {"per_seed", per},
                             {"mean", r.mean.to_json()},
                             {"stddev", r.stddev.to_json()}});
        }
        return {{"seeds", seeds}, {"rows", jrows}};
    }

    const AblationRowResult& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw DomainError("ablation table has no row '" + name + "'");
    }

    std::string render_text() const {
        std::ostringstream os;
        os << "row          rec_mse      velocity_mse retr_top1  perp_m   perp_v\n";
        for (const auto& r : rows) {
            char buf[160];
            if (r.ok) {
                std::snprintf(buf, sizeof(buf), "%-12s %-12.5f %-12.5f %-10.4f %-8.2f %-8.2f\n",
                              r.name.c_str(), r.mean.rec_mse, r.mean.velocity_mse,
                              r.mean.retrieval_top1, r.mean.perp_motion, r.mean.perp_video);
            } else {
                std::snprintf(buf, sizeof(buf), "%-12s FAILED: %s\n", r.name.c_str(),
                              r.error.c_str());
            }
            os << buf;
        }
        return os.str();
    }
};

namespace detail {

inline void aggregate(AblationRowResult& r) {
    const double n = static_cast<double>(r.per_seed.size());
    auto acc = [&](auto get) {
        double mu = 0;
        for (const auto& m : r.per_seed) mu += get(m);
        mu /= n;
        double var = 0;
        for (const auto& m : r.per_seed) var += (get(m) - mu) * (get(m) - mu);
        return std::make_pair(mu, std::sqrt(var / n));
    };
    auto set = [&](double EvalMetrics::*field) {
        auto [mu, sd] = acc([&](const EvalMetrics& m) { return m.*field; });
        r.mean.*field = mu;
        r.stddev.*field = sd;
    };
    set(&EvalMetrics::rec_motion_mse);
    set(&EvalMetrics::rec_video_mse);
    set(&EvalMetrics::rec_mse);
    set(&EvalMetrics::velocity_motion_mse);
    set(&EvalMetrics::velocity_video_mse);
    set(&EvalMetrics::velocity_mse);
    set(&EvalMetrics::retrieval_top1);
    set(&EvalMetrics::retrieval_top5);
    set(&EvalMetrics::perp_motion);
    set(&EvalMetrics::perp_video);
}

inline void parallel_for(long n, long jobs, const std::function<void(long)>& fn) {
    if (jobs <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> workers;
    for (long w = 0; w < std::min(jobs, n); ++w)
        workers.emplace_back([&] {
            while (true) {
                long i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    for (auto& t : workers) t.join();
}

}  // namespace detail

// Trains each row identically except for the loss toggles; stage-1
// checkpoints are shared per seed across rows (stage 1 is reconstruction-only
// for every row). Rows within the grid may run in parallel worker threads;
// every run is internally single-threaded and seed-deterministic.
template <class T>
AblationTable run_ablation(const Config& base, const std::vector<std::string>& rows,
                           const std::vector<uint64_t>& seeds, const PreppedData<T>& train_data,
                           const PreppedData<T>& eval_data, const std::string& out_dir,
                           long jobs = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    AblationTable table;
    table.seeds = seeds;

    // shared stage-1 checkpoints, one per seed
    std::vector<std::string> stage1_paths(seeds.size());
    detail::parallel_for(static_cast<long>(seeds.size()), jobs, [&](long i) {
        Config c = base;
        c.train.seed = seeds[static_cast<size_t>(i)];
        Trainer<T> tr(c, train_data);
        tr.run_steps(c.train.stage1_iters);
        std::string path =
            out_dir + "/stage1_seed" + std::to_string(seeds[static_cast<size_t>(i)]) + ".ckpt";
        tr.save(path);
        stage1_paths[static_cast<size_t>(i)] = path;
    });

    table.rows.resize(rows.size());
    struct Task {
        size_t row, seed;
    };
    std::vector<Task> tasks;
    for (size_t r = 0; r < rows.size(); ++r) {
        table.rows[r].name = rows[r];
        table.rows[r].per_seed.resize(seeds.size());
        for (size_t s = 0; s < seeds.size(); ++s) tasks.push_back({r, s});
    }
    std::vector<std::string> task_errors(tasks.size());
    detail::parallel_for(static_cast<long>(tasks.size()), jobs, [&](long ti) {
        const Task& tk = tasks[static_cast<size_t>(ti)];
        try {
            Config c = base;
            c.train.seed = seeds[tk.seed];
            c = train::config_with_overrides(c, ablation_row_overrides(rows[tk.row]));
            Trainer<T> tr = Trainer<T>::from_stage1(stage1_paths[tk.seed], c, train_data);
            tr.run_steps(c.train.stage2_iters);
            table.rows[tk.row].per_seed[tk.seed] = eval_metrics(tr.model(), c, eval_data);
        } catch (const std::exception& e) {
            task_errors[static_cast<size_t>(ti)] = e.what();  // recorded, table still emitted
        }
    });
    for (size_t t = 0; t < tasks.size(); ++t) {
        if (task_errors[t].empty()) continue;
        auto& row = table.rows[tasks[t].row];
        if (!row.error.empty()) row.error += "; ";
        row.error += "seed " + std::to_string(seeds[tasks[t].seed]) + ": " + task_errors[t];
    }
    for (auto& row : table.rows) {
        row.ok = row.error.empty();
        if (row.ok) detail::aggregate(row);
    }

    std::ofstream jf(out_dir + "/ablation.json");
    HUMOCON_CHECK(jf.good(), IoError, "cannot write ablation.json in " + out_dir);
    jf << table.to_json().dump(2) << "\n";
    return table;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportResult {
    std::vector<std::string> files_written;
    std::vector<std::string> warnings;
};

// Renders loss curves, the perplexity curve and the ablation bar chart from a
// results directory (metrics.jsonl, ablation.json). Pure function of its
// inputs: regenerating over the same inputs is byte-identical.
inline ReportResult report(const std::string& results_dir) {
    namespace fs = std::filesystem;
    ReportResult out;
    std::ostringstream summary;
    summary << "humocon results report\n======================\n";

    std::vector<nlohmann::json> steps;
    {
        std::ifstream mf(results_dir + "/metrics.jsonl");
        if (!mf.good()) {
            out.warnings.push_back("metrics.jsonl missing; loss and perplexity plots skipped");
        } else {
            std::string line;
            while (std::getline(mf, line)) {
                if (line.empty()) continue;
                steps.push_back(nlohmann::json::parse(line));
            }
        }
    }
    auto series_of = [&](const char* key) {
        Series s;
        s.label = key;
        for (const auto& j : steps)
            if (j.contains(key)) s.y.push_back(j.at(key).get<double>());
        return s;
    };
    if (!steps.empty()) {
        write_line_chart(results_dir + "/loss_total.svg", "total loss", {series_of("total")});
        out.files_written.push_back("loss_total.svg");
        std::vector<Series> terms;
        for (const char* k : {"rec_motion", "rec_video", "dis", "act", "align", "commit"}) {
            Series s = series_of(k);
            if (!s.y.empty()) terms.push_back(std::move(s));
        }
        write_line_chart(results_dir + "/loss_terms.svg", "loss terms", terms);
        out.files_written.push_back("loss_terms.svg");
        std::vector<Series> perp;
        for (const char* k : {"perp_motion", "perp_video"}) {
            Series s = series_of(k);
            if (!s.y.empty()) perp.push_back(std::move(s));
        }
        write_line_chart(results_dir + "/perplexity.svg", "codebook perplexity", perp);
        out.files_written.push_back("perplexity.svg");
        const auto& last = steps.back();
        summary << "steps logged: " << steps.size() << "\n";
        summary << "final total loss: " << last.value("total", 0.0) << "\n";
        if (last.contains("perp_motion"))
            summary << "final motion perplexity: " << last.at("perp_motion").get<double>() << "\n";
        if (last.contains("perp_video"))
            summary << "final video perplexity: " << last.at("perp_video").get<double>() << "\n";
    }

    {
        std::ifstream af(results_dir + "/ablation.json");
        if (!af.good()) {
            out.warnings.push_back("ablation.json missing; ablation chart skipped");
        } else {
            nlohmann::json j;
            af >> j;
            std::vector<std::pair<std::string, double>> bars;
            summary << "\nablation (mean over seeds)\n";
            summary << "row          rec_mse      velocity_mse retr_top1\n";
            for (const auto& row : j.at("rows")) {
                if (!row.value("ok", false)) {
                    summary << row.value("name", "?") << " FAILED: " << row.value("error", "")
                            << "\n";
                    continue;
                }
                const auto& m = row.at("mean");
                bars.push_back({row.at("name").get<std::string>(),
                                m.at("retrieval_top1").get<double>()});
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%-12s %-12.5f %-12.5f %-10.4f\n",
                              row.at("name").get<std::string>().c_str(),
                              m.at("rec_mse").get<double>(), m.at("velocity_mse").get<double>(),
                              m.at("retrieval_top1").get<double>());
                summary << buf;
            }
            write_bar_chart(results_dir + "/ablation.svg", "retrieval top-1 by ablation row",
                            bars);
            out.files_written.push_back("ablation.svg");
        }
    }

    for (const auto& w : out.warnings) summary << "warning: " << w << "\n";
    std::ofstream sf(results_dir + "/summary.txt");
    HUMOCON_CHECK(sf.good(), IoError, "cannot write summary in " + results_dir);
    sf << summary.str();
    out.files_written.push_back("summary.txt");
    return out;
}

}  // namespace humocon::eval
