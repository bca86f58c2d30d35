#include "tdp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tdp {

namespace {

constexpr double kPixelsPerMeter = 10.0;
constexpr double kImageSize = 2.0 * kGridHalfExtent * kPixelsPerMeter;  // 640

// world: x forward, y left. image: forward points up.
double px(const Vec2& w) { return (kGridHalfExtent - w.y) * kPixelsPerMeter; }
double py(const Vec2& w) { return (kGridHalfExtent - w.x) * kPixelsPerMeter; }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string rank_color(int rank, int total) {
    // confidence rank 0 = warm, low ranks fade to cool blue
    const double f = total > 1 ? static_cast<double>(rank) / (total - 1) : 0.0;
    const int r = static_cast<int>(std::lround(230.0 - 180.0 * f));
    const int g = static_cast<int>(std::lround(80.0 + 60.0 * f));
    const int b = static_cast<int>(std::lround(60.0 + 170.0 * f));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

void rect_path(std::ostringstream& os, const Vec2& center, const Vec2& half, const char* style) {
    const Vec2 c0{center.x - half.x, center.y - half.y};
    const Vec2 c1{center.x - half.x, center.y + half.y};
    const Vec2 c2{center.x + half.x, center.y + half.y};
    const Vec2 c3{center.x + half.x, center.y - half.y};
    os << "<path d=\"M" << fmt(px(c0)) << " " << fmt(py(c0)) << " L" << fmt(px(c1)) << " "
       << fmt(py(c1)) << " L" << fmt(px(c2)) << " " << fmt(py(c2)) << " L" << fmt(px(c3)) << " "
       << fmt(py(c3)) << " Z\" " << style << "/>\n";
}

}  // namespace

std::string render_scene_svg(const Scene& scene, const PlanResult* plan_result) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << static_cast<int>(kImageSize)
       << "\" height=\"" << static_cast<int>(kImageSize) << "\" viewBox=\"0 0 "
       << static_cast<int>(kImageSize) << " " << static_cast<int>(kImageSize) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"#1c1f26\"/>\n";

    // drivable area as row runs
    const auto& mask = scene.drivable_mask;
    os << "<g fill=\"#3a4150\">\n";
    for (int row = 0; row < mask.height; ++row) {
        int col = 0;
        while (col < mask.width) {
            if (!mask.at(row, col)) {
                ++col;
                continue;
            }
            int run = col;
            while (run < mask.width && mask.at(row, run)) ++run;
            // cell block corners in world coords
            const double x_lo = -kGridHalfExtent + col * kGridCell;
            const double x_hi = -kGridHalfExtent + run * kGridCell;
            const double y_lo = -kGridHalfExtent + row * kGridCell;
            const double y_hi = y_lo + kGridCell;
            const double ix = (kGridHalfExtent - y_hi) * kPixelsPerMeter;
            const double iy = (kGridHalfExtent - x_hi) * kPixelsPerMeter;
            os << "<rect x=\"" << fmt(ix) << "\" y=\"" << fmt(iy) << "\" width=\""
               << fmt((y_hi - y_lo) * kPixelsPerMeter) << "\" height=\""
               << fmt((x_hi - x_lo) * kPixelsPerMeter) << "\"/>\n";
            col = run;
        }
    }
    os << "</g>\n";

    // obstacles: solid now, dashed ghost at the horizon
    const double horizon_t = kWaypointDt * kDefaultHorizon;
    for (const auto& o : scene.obstacles) {
        rect_path(os, o.center, o.half_extent, "fill=\"#c74b3c\" fill-opacity=\"0.9\"");
        if (o.velocity.x != 0.0 || o.velocity.y != 0.0)
            rect_path(os, o.center + o.velocity * horizon_t, o.half_extent,
                      "fill=\"none\" stroke=\"#e6a23c\" stroke-width=\"1.5\" "
                      "stroke-dasharray=\"4 3\"");
    }

    // ego marker
    os << "<circle cx=\"" << fmt(px({0, 0})) << "\" cy=\"" << fmt(py({0, 0}))
       << "\" r=\"5\" fill=\"#f0f0f0\"/>\n";

    // demonstration as a path (candidates are the only polylines)
    if (scene.gt_trajectory.horizon() > 0) {
        os << "<path fill=\"none\" stroke=\"#58d68d\" stroke-width=\"2.5\" d=\"M"
           << fmt(px({0, 0})) << " " << fmt(py({0, 0}));
        for (const auto& w : scene.gt_trajectory.waypoints)
            os << " L" << fmt(px(w)) << " " << fmt(py(w));
        os << "\"/>\n";
    }

    int n_cands = 0;
    if (plan_result != nullptr && !plan_result->candidates.empty()) {
        const auto rows =
            multi_mode_report(*plan_result, static_cast<int>(plan_result->candidates.size()));
        n_cands = static_cast<int>(rows.size());
        for (auto it = rows.rbegin(); it != rows.rend(); ++it) {  // draw best last, on top
            const auto& cand =
                plan_result->candidates[static_cast<std::size_t>(it->candidate_index)];
            os << "<polyline fill=\"none\" stroke=\"" << rank_color(it->rank - 1, n_cands)
               << "\" stroke-width=\"" << (it->rank == 1 ? "2.5" : "1.2") << "\" points=\"";
            bool first = true;
            for (const auto& w : cand.trajectory.waypoints) {
                if (!first) os << " ";
                os << fmt(px(w)) << "," << fmt(py(w));
                first = false;
            }
            os << "\"/>\n";
        }
    }

    // legend
    os << "<g font-family=\"monospace\" font-size=\"12\" fill=\"#e8e8e8\">\n";
    os << "<text x=\"10\" y=\"18\">scene: " << intent_name(scene.intent)
       << " seed=" << scene.seed << "</text>\n";
    os << "<text x=\"10\" y=\"34\" fill=\"#58d68d\">demonstration</text>\n";
    os << "<text x=\"10\" y=\"50\" fill=\"#c74b3c\">obstacle (dashed: +4s ghost)</text>\n";
    if (n_cands > 0)
        os << "<text x=\"10\" y=\"66\" fill=\"#e69a6a\">" << n_cands
           << " candidates, warm = high confidence</text>\n";
    os << "</g>\n";
    os << "</svg>\n";
    return os.str();
}

void write_svg(const std::string& path, const std::string& svg) {
    std::ofstream os(path + ".tmp", std::ios::trunc);
    if (!os) throw IoError("cannot open SVG for writing: " + path);
    os << svg;
    if (!os) throw IoError("SVG write failed: " + path);
    os.close();
    std::filesystem::rename(path + ".tmp", path);
}

}  // namespace tdp
