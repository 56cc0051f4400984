#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "humocon/core/errors.hpp"

namespace humocon::train {

// Per-step named losses. Absent terms (toggled off, or wrong modality) stay
// absent in the serialized record rather than being zero-filled.
struct LossReport {
    long step = 0;
    int stage = 1;
    std::optional<double> rec_motion, rec_video, dis, act, align, commit;
    double total = 0;
    double perp_motion = 0, perp_video = 0;
    double wall_ms = 0;

    nlohmann::ordered_json to_json(bool deterministic) const {
        nlohmann::ordered_json j;
        j["step"] = step;
        j["stage"] = stage;
        auto put = [&](const char* k, const std::optional<double>& v) {
            if (v) j[k] = *v;
        };
        put("rec_motion", rec_motion);
        put("rec_video", rec_video);
        put("dis", dis);
        put("act", act);
        put("align", align);
        put("commit", commit);
        j["total"] = total;
        if (perp_motion > 0) j["perp_motion"] = perp_motion;
        if (perp_video > 0) j["perp_video"] = perp_video;
        j["wall_ms"] = deterministic ? 0.0 : wall_ms;
        return j;
    }

    // Decomposition identity used by trainer asserts and the acceptance
    // suite: total equals the weighted sum of present terms.
    double recomposed_total(double lambda_dis, double lambda_act, double lambda_align,
                            double beta) const {
        double acc = 0;
        if (rec_motion) acc += *rec_motion;
        if (rec_video) acc += *rec_video;
        if (dis) acc += lambda_dis * *dis;
        if (act) acc += lambda_act * *act;
        if (align) acc += lambda_align * *align;
        if (commit) acc += beta * *commit;
        return acc;
    }
};

// Append-only JSON-lines writer, one record per step.
class MetricsWriter {
public:
    MetricsWriter() = default;
    explicit MetricsWriter(const std::string& path, bool append = false) { open(path, append); }

    void open(const std::string& path, bool append = false) {
        f_.open(path, append ? std::ios::app : std::ios::trunc);
        HUMOCON_CHECK(f_.good(), IoError, "cannot open metrics file " + path);
    }

    bool is_open() const { return f_.is_open(); }

    void write(const nlohmann::ordered_json& j) {
        f_ << j.dump() << "\n";
        f_.flush();
    }

private:
    std::ofstream f_;
};

}  // namespace humocon::train
