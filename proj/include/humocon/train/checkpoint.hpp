#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "humocon/core/serialize.hpp"
#include "humocon/synth/dataset.hpp"
#include "humocon/train/config.hpp"
#include "humocon/train/model.hpp"
#include "humocon/train/optimizer.hpp"

// Single-file checkpoint container, schema "humocon-ckpt/1". Restores
// parameters, codebook EMA statistics, optimizer state, step counter and rng
// state bit-exactly, so a resumed deterministic run reproduces the unbroken
// one step for step.

namespace humocon::train {

inline constexpr const char* kCheckpointFormat = "humocon-ckpt/1";
inline constexpr const char* kCheckpointMagic = "HMCK1\n";

template <class T>
struct CodebookState {
    Tensor<T> codes, cluster_size, embed_sum;
    std::vector<long> steps_since_used;
    bool data_initialized = false;

    static CodebookState capture(const vq::Codebook<T>& cb) {
        return {cb.codes, cb.cluster_size, cb.embed_sum, cb.steps_since_used,
                cb.data_initialized};
    }

    void restore(vq::Codebook<T>& cb) const {
        cb.codes = codes;
        cb.cluster_size = cluster_size;
        cb.embed_sum = embed_sum;
        cb.steps_since_used = steps_since_used;
        cb.data_initialized = data_initialized;
    }
};

template <class T>
struct CheckpointData {
    Config cfg;
    synth::SceneSpec scene;
    long stage = 1;
    long step = 0;
    std::vector<std::pair<std::string, Tensor<T>>> params;
    CodebookState<T> cb_m, cb_v;
    long opt_t = 0;
    std::vector<Tensor<T>> opt_m, opt_v;
    std::array<uint64_t, 4> rng_state{};
};

template <class T>
void save_checkpoint(const std::string& path, const CheckpointData<T>& ck) {
    std::ofstream f(path, std::ios::binary);
    HUMOCON_CHECK(f.good(), IoError, "cannot write checkpoint " + path);
    f.write(kCheckpointMagic, 6);
    io::write_string(f, kCheckpointFormat);
    io::write_string(f, io::dtype_tag<T>());
    nlohmann::ordered_json meta{{"config", config_to_json(ck.cfg)},
                                {"scene", synth::spec_to_json(ck.scene)}};
    io::write_string(f, meta.dump());
    io::write_u64(f, static_cast<uint64_t>(ck.stage));
    io::write_u64(f, static_cast<uint64_t>(ck.step));
    io::write_u64(f, ck.params.size());
    for (const auto& [name, t] : ck.params) {
        io::write_string(f, name);
        io::write_tensor(f, t);
    }
    for (const CodebookState<T>* cb : {&ck.cb_m, &ck.cb_v}) {
        io::write_tensor(f, cb->codes);
        io::write_tensor(f, cb->cluster_size);
        io::write_tensor(f, cb->embed_sum);
        io::write_i64_vec(f, cb->steps_since_used);
        io::write_u64(f, cb->data_initialized ? 1 : 0);
    }
    io::write_u64(f, static_cast<uint64_t>(ck.opt_t));
    io::write_u64(f, ck.opt_m.size());
    for (size_t i = 0; i < ck.opt_m.size(); ++i) {
        io::write_tensor(f, ck.opt_m[i]);
        io::write_tensor(f, ck.opt_v[i]);
    }
    for (uint64_t w : ck.rng_state) io::write_u64(f, w);
    HUMOCON_CHECK(f.good(), IoError, "write failed for checkpoint " + path);
}

template <class T>
CheckpointData<T> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    HUMOCON_CHECK(f.good(), IoError, "cannot open checkpoint " + path);
    char magic[6];
    io::read_bytes(f, magic, 6);
    HUMOCON_CHECK(std::string(magic, 6) == kCheckpointMagic, IoError,
                  "bad checkpoint magic in " + path + " (corrupt file?)");
    std::string format = io::read_string(f, 64);
    HUMOCON_CHECK(format == kCheckpointFormat, IoError,
                  "checkpoint schema mismatch: expected '" + std::string(kCheckpointFormat) +
                      "', found '" + format + "'");
    std::string dtype = io::read_string(f, 16);
    HUMOCON_CHECK(dtype == io::dtype_tag<T>(), IoError,
                  std::string("checkpoint dtype mismatch: expected ") + io::dtype_tag<T>() +
                      ", found " + dtype);
    CheckpointData<T> ck;
    nlohmann::json meta = nlohmann::json::parse(io::read_string(f));
    ck.cfg = config_from_json(meta.at("config"));
    ck.scene = synth::spec_from_json(meta.at("scene"));
    ck.stage = static_cast<long>(io::read_u64(f));
    ck.step = static_cast<long>(io::read_u64(f));
    const uint64_t np = io::read_u64(f);
    HUMOCON_CHECK(np < (1ULL << 24), IoError, "parameter count out of range");
    for (uint64_t i = 0; i < np; ++i) {
        std::string name = io::read_string(f);
        ck.params.push_back({std::move(name), io::read_tensor<T>(f)});
    }
    for (CodebookState<T>* cb : {&ck.cb_m, &ck.cb_v}) {
        cb->codes = io::read_tensor<T>(f);
        cb->cluster_size = io::read_tensor<T>(f);
        cb->embed_sum = io::read_tensor<T>(f);
        cb->steps_since_used = io::read_i64_vec(f);
        cb->data_initialized = io::read_u64(f) != 0;
    }
    ck.opt_t = static_cast<long>(io::read_u64(f));
    const uint64_t ng = io::read_u64(f);
    HUMOCON_CHECK(ng <= np, IoError, "optimizer group larger than the parameter set");
    for (uint64_t i = 0; i < ng; ++i) {
        ck.opt_m.push_back(io::read_tensor<T>(f));
        ck.opt_v.push_back(io::read_tensor<T>(f));
    }
    for (auto& w : ck.rng_state) w = io::read_u64(f);
    return ck;
}

}  // namespace humocon::train
