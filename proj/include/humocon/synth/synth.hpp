#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "humocon/core/errors.hpp"
#include "humocon/core/rng.hpp"
#include "humocon/core/tensor.hpp"

// Deterministic synthetic paired motion/video data with analytically known
// velocities. A planar kinematic chain of Gaussian blobs stands in for real
// mocap + video at desk scale.

namespace humocon::synth {

enum class MotionFamily { SinusoidalChain, RandomWalkChain };

inline const char* family_name(MotionFamily f) {
    return f == MotionFamily::SinusoidalChain ? "sinusoidal-chain" : "random-walk-chain";
}

inline MotionFamily family_from_name(const std::string& s) {
    if (s == "sinusoidal-chain") return MotionFamily::SinusoidalChain;
    if (s == "random-walk-chain") return MotionFamily::RandomWalkChain;
    throw ConfigError("unknown motion family '" + s + "'");
}

struct SceneSpec {
    long num_joints = 5;
    long seq_len_motion = 32;  // K
    long seq_len_video = 8;    // T
    long frame_rate_ratio = 4; // r; K = r*T
    long image_h = 32;
    long image_w = 32;
    double blob_sigma = 1.5;   // pixels
    MotionFamily family = MotionFamily::SinusoidalChain;
    uint64_t seed = 0;

    long pose_dim() const { return 2 * num_joints; }

    void validate() const {
        HUMOCON_CHECK(num_joints >= 2, ConfigError, "num_joints must be >= 2");
        HUMOCON_CHECK(image_h >= 16 && image_w >= 16, ConfigError, "image size must be >= 16");
        HUMOCON_CHECK(seq_len_video >= 1 && frame_rate_ratio >= 1, ConfigError,
                      "sequence lengths must be positive");
        HUMOCON_CHECK(seq_len_motion == frame_rate_ratio * seq_len_video, ConfigError,
                      "K must equal r*T (got K=" + std::to_string(seq_len_motion) +
                          ", r*T=" + std::to_string(frame_rate_ratio * seq_len_video) + ")");
        HUMOCON_CHECK(blob_sigma > 0, ConfigError, "blob_sigma must be positive");
    }

    std::vector<long> align_map() const {
        std::vector<long> m(static_cast<size_t>(seq_len_video));
        for (long i = 0; i < seq_len_video; ++i)
            m[static_cast<size_t>(i)] = frame_rate_ratio * i;
        return m;
    }
};

template <class T>
struct MotionSequence {
    Tensor<T> poses;  // K x P, scene units in [0,1]
};

template <class T>
struct VideoClip {
    Tensor<T> frames;  // T x H x W x 3, values in [0,1]
};

template <class T>
struct VelocityTarget {
    Tensor<T> delta_motion;  // K x P, scene units per motion frame; row 0 zero
    Tensor<T> flow;          // T x H x W x 2, pixels per video frame; frame 0 zero
};

template <class T>
struct PairedSample {
    VideoClip<T> video;
    MotionSequence<T> motion;
    VelocityTarget<T> velocity;
    std::vector<long> align_map;
};

// Closed-form parameters of the sinusoidal chain. Drawn from the scene seed
// in a fixed, documented order so tests can re-derive poses independently:
// root(t) = (root_x + drift_x*t, root_y + drift_y*t)
// link j (absolute angle): theta_j(t) = base[j] + amp[j]*sin(omega[j]*t + phase[j])
// joint_0 = root, joint_j = joint_{j-1} + link_len*(cos theta_j, sin theta_j)
struct ChainParams {
    double root_x = 0, root_y = 0;
    double drift_x = 0, drift_y = 0;
    double link_len = 0;
    std::vector<double> amp, omega, phase, base;  // per link, size num_joints-1
};

// Draw order: root_x, root_y, drift_x, drift_y, then per link amp, omega,
// phase, base.
inline ChainParams derive_chain_params(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed ^ 0x5931c1a27f3bull);
    ChainParams p;
    p.root_x = 0.45 + 0.10 * rng.uniform();
    p.root_y = 0.45 + 0.10 * rng.uniform();
    const double drift_span = 0.25 / static_cast<double>(spec.seq_len_motion);
    p.drift_x = rng.uniform(-drift_span, drift_span);
    p.drift_y = rng.uniform(-drift_span, drift_span);
    p.link_len = 0.55 / static_cast<double>(spec.num_joints);
    const long links = spec.num_joints - 1;
    for (long j = 0; j < links; ++j) {
        p.amp.push_back(rng.uniform(0.25, 1.0));
        p.omega.push_back(rng.uniform(0.15, 0.7));
        p.phase.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
        p.base.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    }
    return p;
}

inline void eval_chain_pose(const ChainParams& p, long num_joints, double t, double* out_xy) {
    double x = p.root_x + p.drift_x * t;
    double y = p.root_y + p.drift_y * t;
    out_xy[0] = x;
    out_xy[1] = y;
    for (long j = 1; j < num_joints; ++j) {
        const size_t l = static_cast<size_t>(j - 1);
        const double th = p.base[l] + p.amp[l] * std::sin(p.omega[l] * t + p.phase[l]);
        x += p.link_len * std::cos(th);
        y += p.link_len * std::sin(th);
        out_xy[2 * j] = x;
        out_xy[2 * j + 1] = y;
    }
}

template <class T>
MotionSequence<T> generate_motion_from_params(const ChainParams& p, const SceneSpec& spec) {
    spec.validate();
    const long K = spec.seq_len_motion;
    const long P = spec.pose_dim();
    Tensor<T> poses({K, P});
    std::vector<double> row(static_cast<size_t>(P));
    for (long k = 0; k < K; ++k) {
        eval_chain_pose(p, spec.num_joints, static_cast<double>(k), row.data());
        for (long c = 0; c < P; ++c) poses.at2(k, c) = static_cast<T>(row[static_cast<size_t>(c)]);
    }
    return {std::move(poses)};
}

template <class T>
MotionSequence<T> generate_motion(const SceneSpec& spec) {
    spec.validate();
    if (spec.family == MotionFamily::SinusoidalChain)
        return generate_motion_from_params<T>(derive_chain_params(spec), spec);

    // random-walk-chain: seeded angle random walk on the same chain geometry
    Rng rng(spec.seed ^ 0x77aa11ee22ull);
    ChainParams p = derive_chain_params(spec);
    const long K = spec.seq_len_motion;
    const long P = spec.pose_dim();
    const long links = spec.num_joints - 1;
    std::vector<double> theta(p.base);
    Tensor<T> poses({K, P});
    const double step = 0.08;
    for (long k = 0; k < K; ++k) {
        double x = p.root_x + p.drift_x * k;
        double y = p.root_y + p.drift_y * k;
        poses.at2(k, 0) = static_cast<T>(x);
        poses.at2(k, 1) = static_cast<T>(y);
        for (long j = 0; j < links; ++j) {
            x += p.link_len * std::cos(theta[static_cast<size_t>(j)]);
            y += p.link_len * std::sin(theta[static_cast<size_t>(j)]);
            poses.at2(k, 2 * (j + 1)) = static_cast<T>(x);
            poses.at2(k, 2 * (j + 1) + 1) = static_cast<T>(y);
        }
        for (long j = 0; j < links; ++j) theta[static_cast<size_t>(j)] += step * rng.normal();
    }
    return {std::move(poses)};
}

// Fixed per-joint palette; deterministic and channel-diverse so joints stay
// distinguishable to the video encoder.
inline void joint_color(long j, double* rgb) {
    const double h = std::fmod(0.137 + 0.61803398875 * static_cast<double>(j), 1.0) * 6.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double v = 1.0, s = 0.85;
    const double q = v * (1 - s * f), t = v * (1 - s * (1 - f)), lo = v * (1 - s);
    switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = lo; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = lo; break;
        case 2: rgb[0] = lo; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = lo; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = lo; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = lo; rgb[2] = q; break;
    }
}

template <class T>
void render_pose_into(const T* pose, const SceneSpec& spec, T* frame) {
    const long H = spec.image_h, W = spec.image_w;
    const double sig = spec.blob_sigma;
    const double cutoff = 4.0 * sig;
    double rgb[3];
    for (long j = 0; j < spec.num_joints; ++j) {
        joint_color(j, rgb);
        const double px = static_cast<double>(pose[2 * j]) * (W - 1);
        const double py = static_cast<double>(pose[2 * j + 1]) * (H - 1);
        // joints outside the image are clipped silently
        const long x0 = std::max(0L, static_cast<long>(std::floor(px - cutoff)));
        const long x1 = std::min(W - 1, static_cast<long>(std::ceil(px + cutoff)));
        const long y0 = std::max(0L, static_cast<long>(std::floor(py - cutoff)));
        const long y1 = std::min(H - 1, static_cast<long>(std::ceil(py + cutoff)));
        for (long y = y0; y <= y1; ++y)
            for (long x = x0; x <= x1; ++x) {
                const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                if (d2 > cutoff * cutoff) continue;
                const double g = std::exp(-d2 / (2 * sig * sig));
                T* px3 = frame + (y * W + x) * 3;
                for (int c = 0; c < 3; ++c)
                    px3[c] = static_cast<T>(std::min(1.0, static_cast<double>(px3[c]) + g * rgb[c]));
            }
    }
}

// Frame i renders the pose at align(i) = r*i.
template <class T>
VideoClip<T> render_frames(const MotionSequence<T>& motion, const SceneSpec& spec) {
    spec.validate();
    HUMOCON_CHECK(motion.poses.dim(0) == spec.seq_len_motion &&
                      motion.poses.dim(1) == spec.pose_dim(),
                  ConfigError, "motion inconsistent with spec");
    const long T_ = spec.seq_len_video, H = spec.image_h, W = spec.image_w;
    Tensor<T> frames({T_, H, W, 3});
    for (long i = 0; i < T_; ++i) {
        const long k = spec.frame_rate_ratio * i;
        render_pose_into(&motion.poses[k * spec.pose_dim()], spec, &frames[i * H * W * 3]);
    }
    return {std::move(frames)};
}

// delta_motion[k] = poses[k] - poses[k-1] (zero row at k=0). flow[i] assigns
// to each pixel within 3*blob_sigma of a joint (position at video frame i)
// that joint's pixel displacement between frames i-1 and i; nearest joint
// wins, lowest index on ties; flow[0] = 0.
template <class T>
VelocityTarget<T> compute_velocity(const MotionSequence<T>& motion, const SceneSpec& spec) {
    spec.validate();
    const long K = spec.seq_len_motion, P = spec.pose_dim();
    HUMOCON_CHECK(motion.poses.dim(0) == K && motion.poses.dim(1) == P, ConfigError,
                  "motion inconsistent with spec");
    Tensor<T> delta({K, P});
    for (long k = 1; k < K; ++k)
        for (long c = 0; c < P; ++c) delta.at2(k, c) = motion.poses.at2(k, c) - motion.poses.at2(k - 1, c);

    const long T_ = spec.seq_len_video, H = spec.image_h, W = spec.image_w;
    const long r = spec.frame_rate_ratio;
    const double rad = 3.0 * spec.blob_sigma;
    Tensor<T> flow({T_, H, W, 2});
    for (long i = 1; i < T_; ++i) {
        const T* cur = &motion.poses[(r * i) * P];
        const T* prev = &motion.poses[(r * (i - 1)) * P];
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                long best = -1;
                double best_d2 = rad * rad;
                for (long j = 0; j < spec.num_joints; ++j) {
                    const double px = static_cast<double>(cur[2 * j]) * (W - 1);
                    const double py = static_cast<double>(cur[2 * j + 1]) * (H - 1);
                    const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                    if (d2 < best_d2 || (best >= 0 && d2 == best_d2 && j < best)) {
                        best_d2 = d2;
                        best = j;
                    }
                }
                if (best < 0) continue;
                T* f = &flow[((i * H + y) * W + x) * 2];
                f[0] = static_cast<T>((cur[2 * best] - prev[2 * best]) * (W - 1));
                f[1] = static_cast<T>((cur[2 * best + 1] - prev[2 * best + 1]) * (H - 1));
            }
    }
    return {std::move(delta), std::move(flow)};
}

template <class T>
PairedSample<T> make_sample(const SceneSpec& spec) {
    PairedSample<T> s;
    s.motion = generate_motion<T>(spec);
    s.video = render_frames(s.motion, spec);
    s.velocity = compute_velocity(s.motion, spec);
    s.align_map = spec.align_map();
    return s;
}

template <class T>
std::vector<PairedSample<T>> make_dataset(SceneSpec spec, long count) {
    std::vector<PairedSample<T>> out;
    out.reserve(static_cast<size_t>(count));
    for (long i = 0; i < count; ++i) {
        SceneSpec s = spec;
        s.seed = spec.seed + static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ULL;
        out.push_back(make_sample<T>(s));
    }
    return out;
}

}  // namespace humocon::synth
