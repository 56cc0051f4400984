#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "humocon/core/errors.hpp"

// Minimal deterministic SVG plotting: line charts and bar charts with fixed
// formatting, so regenerated reports are byte-identical.

namespace humocon::eval {

struct Series {
    std::string label;
    std::vector<double> y;
};

namespace svg_detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline const char* palette(size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf"};
    return colors[i % 7];
}

}  // namespace svg_detail

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::vector<Series>& series) {
    const double W = 640, H = 360, ml = 60, mr = 20, mt = 40, mb = 30;
    double lo = 0, hi = 1;
    size_t maxn = 1;
    bool any = false;
    for (const auto& s : series)
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            if (!any) {
                lo = hi = v;
                any = true;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (const auto& s : series) maxn = std::max(maxn, s.y.size());
    if (!any || hi == lo) {
        hi = lo + 1;
    }
    std::ofstream f(path);
    HUMOCON_CHECK(f.good(), IoError, "cannot write plot " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"8\" y=\"" << mt + 6 << "\" font-size=\"10\">" << svg_detail::fmt(hi)
      << "</text>\n";
    f << "<text x=\"8\" y=\"" << H - mb << "\" font-size=\"10\">" << svg_detail::fmt(lo)
      << "</text>\n";
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.y.empty()) continue;
        std::ostringstream pts;
        for (size_t i = 0; i < s.y.size(); ++i) {
            double x = ml + (W - ml - mr) * (maxn > 1 ? static_cast<double>(i) / (maxn - 1) : 0.5);
            double yv = std::isfinite(s.y[i]) ? s.y[i] : lo;
            double y = (H - mb) - (H - mb - mt) * ((yv - lo) / (hi - lo));
            pts << (i ? " " : "") << svg_detail::fmt(x) << "," << svg_detail::fmt(y);
        }
        f << "<polyline fill=\"none\" stroke=\"" << svg_detail::palette(si)
          << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        f << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 14 * (si + 1)
          << "\" font-size=\"11\" fill=\"" << svg_detail::palette(si) << "\">" << s.label
          << "</text>\n";
    }
    f << "</svg>\n";
}

inline void write_bar_chart(const std::string& path, const std::string& title,
                            const std::vector<std::pair<std::string, double>>& bars) {
    const double W = 640, H = 360, ml = 60, mr = 20, mt = 40, mb = 60;
    double hi = 0;
    for (const auto& [k, v] : bars)
        if (std::isfinite(v)) hi = std::max(hi, v);
    if (hi <= 0) hi = 1;
    std::ofstream f(path);
    HUMOCON_CHECK(f.good(), IoError, "cannot write plot " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
    const double span = W - ml - mr;
    const double bw = bars.empty() ? span : span / (2.0 * static_cast<double>(bars.size()));
    for (size_t i = 0; i < bars.size(); ++i) {
        double v = std::isfinite(bars[i].second) ? bars[i].second : 0.0;
        double x = ml + span * (static_cast<double>(i) + 0.25) / static_cast<double>(bars.size());
        double h = (H - mb - mt) * (v / hi);
        f << "<rect x=\"" << svg_detail::fmt(x) << "\" y=\"" << svg_detail::fmt(H - mb - h)
          << "\" width=\"" << svg_detail::fmt(bw) << "\" height=\"" << svg_detail::fmt(h)
          << "\" fill=\"" << svg_detail::palette(i) << "\"/>\n";
        f << "<text x=\"" << svg_detail::fmt(x + bw / 2) << "\" y=\"" << H - mb + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << bars[i].first << "</text>\n";
        f << "<text x=\"" << svg_detail::fmt(x + bw / 2) << "\" y=\""
          << svg_detail::fmt(H - mb - h - 4) << "\" text-anchor=\"middle\" font-size=\"10\">"
          << svg_detail::fmt(v) << "</text>\n";
    }
    f << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
    f << "</svg>\n";
}

}  // namespace humocon::eval
