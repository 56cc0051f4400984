#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "humocon/eval/evalsuite.hpp"

// Feature export for a downstream modality-translation stage: per-sample
// discrete code indices, quantized vectors and aligned projections, with a
// manifest tying the bundle to its source checkpoint and config by content
// hash. Format "humocon-feat/1".

namespace humocon::cli {

inline constexpr const char* kExportFormat = "humocon-feat/1";
inline constexpr const char* kExportMagic = "HMFB1\n";

template <class T>
struct ExportedSample {
    std::vector<long> indices_motion, indices_video;
    Tensor<T> q_motion, q_video;        // quantized vectors
    Tensor<T> aligned_motion, aligned_video;
};

inline std::string export_filename(long i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "features_%06ld.bin", i);
    return buf;
}

template <class T>
ExportedSample<T> export_sample(train::Model<T>& model, const train::PreppedData<T>& data,
                                long s) {
    const long K = data.scene.seq_len_motion;
    const long Tn = data.scene.seq_len_video;
    const long Pp = model.ecfg_v.patches_per_frame();
    ExportedSample<T> out;

    ag::Var<T> poses = ag::constant(
        Tensor<T>({1, K, data.scene.pose_dim()}, data.poses[static_cast<size_t>(s)].data));
    auto q_m = vq::quantize(model.enc_m.forward(poses), model.cb_m);
    out.indices_motion = q_m.indices;
    out.q_motion = Tensor<T>({K, model.mc.code_dim}, q_m.vectors.data);
    Tensor<T> am = model.proj_m.forward(q_m.st)->value;
    out.aligned_motion = Tensor<T>({K, model.mc.h_align}, std::move(am.data));

    ag::Var<T> patches = ag::constant(Tensor<T>(
        {1, data.patches[static_cast<size_t>(s)].dim(0), data.patches[static_cast<size_t>(s)].dim(1)},
        data.patches[static_cast<size_t>(s)].data));
    auto q_v = vq::quantize(model.enc_v.forward(patches), model.cb_v);
    out.indices_video = q_v.indices;
    out.q_video = Tensor<T>({Tn * Pp, model.mc.code_dim}, q_v.vectors.data);
    Tensor<T> av = model.proj_v.forward(align::pool_frames(q_v.st, Tn, Pp))->value;
    out.aligned_video = Tensor<T>({Tn, model.mc.h_align}, std::move(av.data));
    return out;
}

template <class T>
void write_export_bundle(train::Model<T>& model, const train::PreppedData<T>& data,
                         const std::string& out_dir, const std::string& ckpt_hash,
                         const std::string& config_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    nlohmann::ordered_json manifest{{"format", kExportFormat},
                                    {"count", data.count()},
                                    {"checkpoint_hash", ckpt_hash},
                                    {"config_hash", config_hash},
                                    {"code_dim", model.mc.code_dim},
                                    {"codebook_size", model.mc.codebook_size},
                                    {"h_align", model.mc.h_align}};
    {
        std::ofstream mf(out_dir + "/manifest.json");
        HUMOCON_CHECK(mf.good(), IoError, "cannot write export manifest in " + out_dir);
        mf << manifest.dump(2) << "\n";
    }
    for (long s = 0; s < data.count(); ++s) {
        ExportedSample<T> ex = export_sample(model, data, s);
        std::ofstream f(out_dir + "/" + export_filename(s), std::ios::binary);
        HUMOCON_CHECK(f.good(), IoError, "cannot write export sample in " + out_dir);
        f.write(kExportMagic, 6);
        io::write_i64_vec(f, ex.indices_motion);
        io::write_i64_vec(f, ex.indices_video);
        io::write_tensor(f, ex.q_motion);
        io::write_tensor(f, ex.q_video);
        io::write_tensor(f, ex.aligned_motion);
        io::write_tensor(f, ex.aligned_video);
    }
}

struct ExportManifest {
    std::string format, checkpoint_hash, config_hash;
    long count = 0;
};

inline ExportManifest read_export_manifest(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    HUMOCON_CHECK(mf.good(), IoError, "cannot open export manifest in " + dir);
    nlohmann::json j;
    mf >> j;
    ExportManifest m;
    m.format = j.at("format").get<std::string>();
    HUMOCON_CHECK(m.format == kExportFormat, IoError,
                  "export format mismatch: expected '" + std::string(kExportFormat) +
                      "', found '" + m.format + "'");
    m.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.count = j.at("count").get<long>();
    return m;
}

template <class T>
std::vector<ExportedSample<T>> read_export_bundle(const std::string& dir,
                                                  ExportManifest* out_manifest = nullptr) {
    ExportManifest m = read_export_manifest(dir);
    std::vector<ExportedSample<T>> out;
    for (long s = 0; s < m.count; ++s) {
        std::ifstream f(dir + "/" + export_filename(s), std::ios::binary);
        HUMOCON_CHECK(f.good(), IoError, "cannot open export sample " + export_filename(s));
        char magic[6];
        io::read_bytes(f, magic, 6);
        HUMOCON_CHECK(std::string(magic, 6) == kExportMagic, IoError,
                      "bad export magic in " + export_filename(s));
        ExportedSample<T> ex;
        ex.indices_motion = io::read_i64_vec(f);
        ex.indices_video = io::read_i64_vec(f);
        ex.q_motion = io::read_tensor<T>(f);
        ex.q_video = io::read_tensor<T>(f);
        ex.aligned_motion = io::read_tensor<T>(f);
        ex.aligned_video = io::read_tensor<T>(f);
        out.push_back(std::move(ex));
    }
    if (out_manifest) *out_manifest = m;
    return out;
}

}  // namespace humocon::cli
