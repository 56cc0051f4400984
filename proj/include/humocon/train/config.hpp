#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "humocon/core/errors.hpp"
#include "humocon/losses/info.hpp"

// Run configuration: one JSON document with data/model/loss/train sections.
// Unknown keys are rejected; every field can be overridden from the command
// line via --set section.key=value (overrides win).

namespace humocon::train {

using nlohmann::json;
using nlohmann::ordered_json;

struct ModelConfig {
    long code_dim = 32;
    long hidden_dim = 64;
    long enc_layers = 2;
    long dec_layers = 2;
    long heads = 4;
    long mlp_dim = 128;
    long patch_size = 16;
    long codebook_size = 64;
    double ema_decay = 0.99;
    double laplace_eps = 1e-5;
    long dead_threshold = 100;
    long k_parts = 4;
    long dis_hidden = 32;
    long gen_hidden = 32;
    long vel_hidden = 64;
    long h_align = 64;
};

struct LossWeights {
    double lambda_dis = 0.3;
    double lambda_act = 0.1;
    double lambda_align = 0.1;

    void validate() const {
        for (double v : {lambda_dis, lambda_act, lambda_align})
            HUMOCON_CHECK(v >= 0 && std::isfinite(v), ConfigError,
                          "loss weights must be finite and nonnegative");
    }
};

struct LossConfig {
    bool rec = true;
    bool dis = true;
    bool act = true;
    bool align = true;
    bool second_order = true;
    std::string dis_mode = "multiclass";
    long max_candidates = 16;
    double mask_ratio = 0.75;
    double tau_dis = 10.0;
    double align_eps = 0.07;
    std::string align_mode = "infonce";
    LossWeights weights;
    double commitment_beta = 0.05;
    bool freeze_codebook_stage2 = false;
};

struct TrainSchedule {
    long stage1_iters = 2000;
    double stage1_lr = 1e-3;
    long stage2_iters = 1000;
    double stage2_lr = 3e-4;
    long micro_batch = 8;
    long grad_accum = 1;
    uint64_t seed = 1;
    bool deterministic = true;
    long log_every = 1;

    void validate() const {
        HUMOCON_CHECK(stage1_iters >= 0 && stage2_iters >= 0, ConfigError, "iters must be >= 0");
        HUMOCON_CHECK(stage1_lr > 0 && stage2_lr > 0, ConfigError, "learning rates must be > 0");
        HUMOCON_CHECK(micro_batch >= 1 && grad_accum >= 1, ConfigError,
                      "batch settings must be >= 1");
    }
};

struct Config {
    std::string data_dir;
    std::string eval_dir;
    ModelConfig model;
    LossConfig loss;
    TrainSchedule train;
};

namespace detail {

inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) ok = ok || it.key() == k;
        HUMOCON_CHECK(ok, ConfigError, "unknown key '" + it.key() + "' in " + where);
    }
}

template <class V>
void get_if(const json& j, const char* key, V& out) {
    if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline ordered_json config_to_json(const Config& c) {
    return ordered_json{
        {"data", {{"dir", c.data_dir}, {"eval_dir", c.eval_dir}}},
        {"model",
         {{"code_dim", c.model.code_dim},
          {"hidden_dim", c.model.hidden_dim},
          {"enc_layers", c.model.enc_layers},
          {"dec_layers", c.model.dec_layers},
          {"heads", c.model.heads},
          {"mlp_dim", c.model.mlp_dim},
          {"patch_size", c.model.patch_size},
          {"codebook_size", c.model.codebook_size},
          {"ema_decay", c.model.ema_decay},
          {"laplace_eps", c.model.laplace_eps},
          {"dead_threshold", c.model.dead_threshold},
          {"k_parts", c.model.k_parts},
          {"dis_hidden", c.model.dis_hidden},
          {"gen_hidden", c.model.gen_hidden},
          {"vel_hidden", c.model.vel_hidden},
          {"h_align", c.model.h_align}}},
        {"loss",
         {{"rec", c.loss.rec},
          {"dis", c.loss.dis},
          {"act", c.loss.act},
          {"align", c.loss.align},
          {"second_order", c.loss.second_order},
          {"dis_mode", c.loss.dis_mode},
          {"max_candidates", c.loss.max_candidates},
          {"mask_ratio", c.loss.mask_ratio},
          {"tau_dis", c.loss.tau_dis},
          {"align_eps", c.loss.align_eps},
          {"align_mode", c.loss.align_mode},
          {"lambda_dis", c.loss.weights.lambda_dis},
          {"lambda_act", c.loss.weights.lambda_act},
          {"lambda_align", c.loss.weights.lambda_align},
          {"commitment_beta", c.loss.commitment_beta},
          {"freeze_codebook_stage2", c.loss.freeze_codebook_stage2}}},
        {"train",
         {{"stage1_iters", c.train.stage1_iters},
          {"stage1_lr", c.train.stage1_lr},
          {"stage2_iters", c.train.stage2_iters},
          {"stage2_lr", c.train.stage2_lr},
          {"micro_batch", c.train.micro_batch},
          {"grad_accum", c.train.grad_accum},
          {"seed", c.train.seed},
          {"deterministic", c.train.deterministic},
          {"log_every", c.train.log_every}}}};
}

inline Config config_from_json(const json& j) {
    detail::check_keys(j, {"data", "model", "loss", "train"}, "config root");
    Config c;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_keys(d, {"dir", "eval_dir"}, "data");
        detail::get_if(d, "dir", c.data_dir);
        detail::get_if(d, "eval_dir", c.eval_dir);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m,
                           {"code_dim", "hidden_dim", "enc_layers", "dec_layers", "heads",
                            "mlp_dim", "patch_size", "codebook_size", "ema_decay", "laplace_eps",
                            "dead_threshold", "k_parts", "dis_hidden", "gen_hidden", "vel_hidden",
                            "h_align"},
                           "model");
        detail::get_if(m, "code_dim", c.model.code_dim);
        detail::get_if(m, "hidden_dim", c.model.hidden_dim);
        detail::get_if(m, "enc_layers", c.model.enc_layers);
        detail::get_if(m, "dec_layers", c.model.dec_layers);
        detail::get_if(m, "heads", c.model.heads);
        detail::get_if(m, "mlp_dim", c.model.mlp_dim);
        detail::get_if(m, "patch_size", c.model.patch_size);
        detail::get_if(m, "codebook_size", c.model.codebook_size);
        detail::get_if(m, "ema_decay", c.model.ema_decay);
        detail::get_if(m, "laplace_eps", c.model.laplace_eps);
        detail::get_if(m, "dead_threshold", c.model.dead_threshold);
        detail::get_if(m, "k_parts", c.model.k_parts);
        detail::get_if(m, "dis_hidden", c.model.dis_hidden);
        detail::get_if(m, "gen_hidden", c.model.gen_hidden);
        detail::get_if(m, "vel_hidden", c.model.vel_hidden);
        detail::get_if(m, "h_align", c.model.h_align);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        detail::check_keys(l,
                           {"rec", "dis", "act", "align", "second_order", "dis_mode",
                            "max_candidates", "mask_ratio", "tau_dis", "align_eps", "align_mode",
                            "lambda_dis", "lambda_act", "lambda_align", "commitment_beta",
                            "freeze_codebook_stage2"},
                           "loss");
        detail::get_if(l, "rec", c.loss.rec);
        detail::get_if(l, "dis", c.loss.dis);
        detail::get_if(l, "act", c.loss.act);
        detail::get_if(l, "align", c.loss.align);
        detail::get_if(l, "second_order", c.loss.second_order);
        detail::get_if(l, "dis_mode", c.loss.dis_mode);
        detail::get_if(l, "max_candidates", c.loss.max_candidates);
        detail::get_if(l, "mask_ratio", c.loss.mask_ratio);
        detail::get_if(l, "tau_dis", c.loss.tau_dis);
        detail::get_if(l, "align_eps", c.loss.align_eps);
        detail::get_if(l, "align_mode", c.loss.align_mode);
        detail::get_if(l, "lambda_dis", c.loss.weights.lambda_dis);
        detail::get_if(l, "lambda_act", c.loss.weights.lambda_act);
        detail::get_if(l, "lambda_align", c.loss.weights.lambda_align);
        detail::get_if(l, "commitment_beta", c.loss.commitment_beta);
        detail::get_if(l, "freeze_codebook_stage2", c.loss.freeze_codebook_stage2);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t,
                           {"stage1_iters", "stage1_lr", "stage2_iters", "stage2_lr",
                            "micro_batch", "grad_accum", "seed", "deterministic", "log_every"},
                           "train");
        detail::get_if(t, "stage1_iters", c.train.stage1_iters);
        detail::get_if(t, "stage1_lr", c.train.stage1_lr);
        detail::get_if(t, "stage2_iters", c.train.stage2_iters);
        detail::get_if(t, "stage2_lr", c.train.stage2_lr);
        detail::get_if(t, "micro_batch", c.train.micro_batch);
        detail::get_if(t, "grad_accum", c.train.grad_accum);
        detail::get_if(t, "seed", c.train.seed);
        detail::get_if(t, "deterministic", c.train.deterministic);
        detail::get_if(t, "log_every", c.train.log_every);
    }
    c.loss.weights.validate();
    c.train.validate();
    losses::dis_mode_from_name(c.loss.dis_mode);
    HUMOCON_CHECK(c.loss.align_mode == "infonce" || c.loss.align_mode == "literal", ConfigError,
                  "align_mode must be infonce|literal");
    return c;
}

inline Config load_config_file(const std::string& path) {
    std::ifstream f(path);
    HUMOCON_CHECK(f.good(), IoError, "cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// Dotted-path override, e.g. "loss.align=off". The key must already exist in
// the document; the value is coerced to the existing type.
inline void apply_override(ordered_json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    HUMOCON_CHECK(eq != std::string::npos, ConfigError,
                  "override must look like section.key=value, got '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    ordered_json* node = &doc;
    size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        auto dot = path.find('.', start);
        parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        HUMOCON_CHECK(node->contains(parts[i]), ConfigError,
                      "unknown config section '" + parts[i] + "' in override " + assignment);
        node = &(*node)[parts[i]];
    }
    const std::string& leaf = parts.back();
    HUMOCON_CHECK(node->contains(leaf), ConfigError,
                  "unknown config key '" + path + "' in override " + assignment);
    ordered_json& slot = (*node)[leaf];
    try {
        if (slot.is_boolean()) {
            if (value == "on" || value == "true" || value == "1" || value == "yes")
                slot = true;
            else if (value == "off" || value == "false" || value == "0" || value == "no")
                slot = false;
            else
                throw ConfigError("expected a boolean for " + path + ", got '" + value + "'");
        } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
            slot = static_cast<long long>(std::stoll(value));
        } else if (slot.is_number_float()) {
            slot = std::stod(value);
        } else {
            slot = value;
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("cannot parse value '" + value + "' for " + path);
    }
}

inline Config config_with_overrides(Config base, const std::vector<std::string>& sets) {
    ordered_json doc = config_to_json(base);
    for (const auto& s : sets) apply_override(doc, s);
    return config_from_json(doc);
}

// Full-scale preset recorded for reference; far beyond desk scale and not
// exercised by CI.
inline Config full_scale_config() {
    Config c;
    c.model.code_dim = 128;
    c.model.hidden_dim = 512;
    c.model.enc_layers = 4;
    c.model.dec_layers = 4;
    c.model.heads = 8;
    c.model.mlp_dim = 1024;
    c.model.codebook_size = 512;
    c.model.h_align = 256;
    c.train.stage1_iters = 60000;
    c.train.stage1_lr = 1e-4;
    c.train.stage2_iters = 8000;
    c.train.stage2_lr = 1e-5;
    c.train.micro_batch = 16;
    c.train.grad_accum = 8;
    return c;
}

}  // namespace humocon::train
