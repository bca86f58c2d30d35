#include "tdp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tdp {

Polyline Polyline::from_points(std::vector<Vec2> pts) {
    Polyline pl;
    pl.points = std::move(pts);
    pl.cum_length.resize(pl.points.size(), 0.0);
    for (std::size_t i = 1; i < pl.points.size(); ++i)
        pl.cum_length[i] = pl.cum_length[i - 1] + (pl.points[i] - pl.points[i - 1]).norm();
    return pl;
}

Vec2 Polyline::at(double s) const {
    if (points.empty()) return {};
    if (points.size() == 1 || s <= 0.0) return points.front();
    if (s >= length()) return points.back();
    const auto it = std::upper_bound(cum_length.begin(), cum_length.end(), s);
    const std::size_t hi = static_cast<std::size_t>(it - cum_length.begin());
    const std::size_t lo = hi - 1;
    const double seg = cum_length[hi] - cum_length[lo];
    const double f = seg > 0.0 ? (s - cum_length[lo]) / seg : 0.0;
    return points[lo] + (points[hi] - points[lo]) * f;
}

Vec2 Polyline::tangent_at(double s) const {
    if (points.size() < 2) return {1.0, 0.0};
    const double clamped = std::clamp(s, 0.0, length());
    std::size_t hi = 1;
    while (hi + 1 < points.size() && cum_length[hi] <= clamped) ++hi;
    Vec2 d = points[hi] - points[hi - 1];
    const double n = d.norm();
    return n > 0.0 ? d * (1.0 / n) : Vec2{1.0, 0.0};
}

double Polyline::project(const Vec2& p) const {
    if (points.size() < 2) return 0.0;
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const Vec2 a = points[i];
        const Vec2 ab = points[i + 1] - a;
        const double len2 = ab.dot(ab);
        double f = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = a + ab * f;
        const double d2 = (p - q).dot(p - q);
        if (d2 < best_d2) {
            best_d2 = d2;
            best_s = cum_length[i] + std::sqrt(len2) * f;
        }
    }
    return best_s;
}

double point_rect_distance(const Vec2& p, const Vec2& center, const Vec2& half_extent) {
    const double dx = std::max(0.0, std::abs(p.x - center.x) - half_extent.x);
    const double dy = std::max(0.0, std::abs(p.y - center.y) - half_extent.y);
    return std::hypot(dx, dy);
}

Vec2 interpolate_timed_path(const std::vector<Vec2>& positions, double dt, double t) {
    if (positions.empty()) return {};
    if (t <= 0.0) return positions.front();
    const double last = dt * static_cast<double>(positions.size() - 1);
    if (t >= last) return positions.back();
    const double u = t / dt;
    const auto k = static_cast<std::size_t>(u);
    const double f = u - static_cast<double>(k);
    return positions[k] + (positions[k + 1] - positions[k]) * f;
}

bool swept_disc_hits_rects(const std::vector<Vec2>& positions, double dt, double radius,
                           const std::vector<MovingRect>& rects, double horizon,
                           double time_step) {
    if (rects.empty() || positions.empty()) return false;
    const int n = static_cast<int>(std::ceil(horizon / time_step));
    for (int k = 0; k <= n; ++k) {
        const double t = std::min(horizon, k * time_step);
        const Vec2 ego = interpolate_timed_path(positions, dt, t);
        for (const auto& r : rects)
            if (point_rect_distance(ego, r.center_at(t), r.half_extent) <= radius) return true;
    }
    return false;
}

}  // namespace tdp
