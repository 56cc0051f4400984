#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "humocon/core/serialize.hpp"
#include "humocon/synth/synth.hpp"

// Dataset container: one directory per dataset, manifest.json plus one binary
// file of named arrays per sample. Format version "humocon-synth/1".

namespace humocon::synth {

inline constexpr const char* kDatasetFormat = "humocon-synth/1";
inline constexpr const char* kSampleMagic = "HMSB1\n";

inline nlohmann::ordered_json spec_to_json(const SceneSpec& s) {
    return nlohmann::ordered_json{{"num_joints", s.num_joints},
                                  {"seq_len_motion", s.seq_len_motion},
                                  {"seq_len_video", s.seq_len_video},
                                  {"frame_rate_ratio", s.frame_rate_ratio},
                                  {"image_h", s.image_h},
                                  {"image_w", s.image_w},
                                  {"blob_sigma", s.blob_sigma},
                                  {"motion_family", family_name(s.family)},
                                  {"seed", s.seed}};
}

inline SceneSpec spec_from_json(const nlohmann::json& j) {
    SceneSpec s;
    s.num_joints = j.at("num_joints").get<long>();
    s.seq_len_motion = j.at("seq_len_motion").get<long>();
    s.seq_len_video = j.at("seq_len_video").get<long>();
    s.frame_rate_ratio = j.at("frame_rate_ratio").get<long>();
    s.image_h = j.at("image_h").get<long>();
    s.image_w = j.at("image_w").get<long>();
    s.blob_sigma = j.at("blob_sigma").get<double>();
    s.family = family_from_name(j.at("motion_family").get<std::string>());
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

inline std::string sample_filename(long i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06ld.bin", i);
    return buf;
}

template <class T>
void write_sample(const std::string& path, const PairedSample<T>& s) {
    std::ofstream f(path, std::ios::binary);
    HUMOCON_CHECK(f.good(), IoError, "cannot write " + path);
    f.write(kSampleMagic, 6);
    io::write_tensor(f, s.motion.poses);
    io::write_tensor(f, s.video.frames);
    io::write_tensor(f, s.velocity.delta_motion);
    io::write_tensor(f, s.velocity.flow);
    io::write_i64_vec(f, s.align_map);
    HUMOCON_CHECK(f.good(), IoError, "write failed for " + path);
}

template <class T>
PairedSample<T> read_sample(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    HUMOCON_CHECK(f.good(), IoError, "cannot open " + path);
    char magic[6];
    io::read_bytes(f, magic, 6);
    HUMOCON_CHECK(std::string(magic, 6) == kSampleMagic, IoError,
                  "bad sample magic in " + path + " (corrupt file?)");
    PairedSample<T> s;
    s.motion.poses = io::read_tensor<T>(f);
    s.video.frames = io::read_tensor<T>(f);
    s.velocity.delta_motion = io::read_tensor<T>(f);
    s.velocity.flow = io::read_tensor<T>(f);
    s.align_map = io::read_i64_vec(f);
    return s;
}

template <class T>
void write_dataset(const std::vector<PairedSample<T>>& samples, const std::string& dir,
                   const SceneSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::ordered_json manifest{{"format", kDatasetFormat},
                                    {"dtype", io::dtype_tag<T>()},
                                    {"count", samples.size()},
                                    {"seed", spec.seed},
                                    {"spec", spec_to_json(spec)}};
    {
        std::ofstream mf(dir + "/manifest.json");
        HUMOCON_CHECK(mf.good(), IoError, "cannot write manifest in " + dir);
        mf << manifest.dump(2) << "\n";
    }
    for (size_t i = 0; i < samples.size(); ++i)
        write_sample(dir + "/" + sample_filename(static_cast<long>(i)), samples[i]);
}

struct DatasetManifest {
    std::string format;
    std::string dtype;
    long count = 0;
    uint64_t seed = 0;
    SceneSpec spec;
};

inline DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    HUMOCON_CHECK(mf.good(), IoError, "cannot open manifest in " + dir);
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest parse failure in " + dir + ": " + e.what());
    }
    DatasetManifest m;
    m.format = j.at("format").get<std::string>();
    HUMOCON_CHECK(m.format == kDatasetFormat, IoError,
                  "dataset format mismatch: expected '" + std::string(kDatasetFormat) +
                      "', found '" + m.format + "'");
    m.dtype = j.at("dtype").get<std::string>();
    m.count = j.at("count").get<long>();
    m.seed = j.at("seed").get<uint64_t>();
    m.spec = spec_from_json(j.at("spec"));
    return m;
}

template <class T>
std::vector<PairedSample<T>> read_dataset(const std::string& dir, DatasetManifest* out_manifest = nullptr) {
    DatasetManifest m = read_manifest(dir);
    HUMOCON_CHECK(m.dtype == io::dtype_tag<T>(), IoError,
                  "dataset dtype mismatch: expected '" + std::string(io::dtype_tag<T>()) +
                      "', found '" + m.dtype + "'");
    std::vector<PairedSample<T>> samples;
    samples.reserve(static_cast<size_t>(m.count));
    for (long i = 0; i < m.count; ++i)
        samples.push_back(read_sample<T>(dir + "/" + sample_filename(i)));
    if (out_manifest) *out_manifest = m;
    return samples;
}

// Content hash over the manifest and all sample files; used by determinism
// checks and export manifests.
inline uint64_t dataset_hash(const std::string& dir) {
    DatasetManifest m = read_manifest(dir);
    uint64_t h = io::file_hash(dir + "/manifest.json");
    for (long i = 0; i < m.count; ++i)
        h = fnv1a64(&h, sizeof(h), io::file_hash(dir + "/" + sample_filename(i)));
    return h;
}

}  // namespace humocon::synth
