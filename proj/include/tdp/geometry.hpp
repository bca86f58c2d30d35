#pragma once

#include <vector>

#include "tdp/types.hpp"

namespace tdp {

// Polyline with cached cumulative arc length, used for route centerlines and
// swept-corridor queries.
struct Polyline {
    std::vector<Vec2> points;
    std::vector<double> cum_length;  // same size as points, cum_length[0] = 0

    static Polyline from_points(std::vector<Vec2> pts);

    double length() const { return cum_length.empty() ? 0.0 : cum_length.back(); }

    // Point at arc-length s (clamped to [0, length]).
    Vec2 at(double s) const;
    // Unit tangent at arc-length s.
    Vec2 tangent_at(double s) const;
    // Arc length of the closest point on the polyline to p.
    double project(const Vec2& p) const;
};

// Axis-aligned rectangle at a moving center; footprint at time t is
// center + velocity * t with the same half extents.
struct MovingRect {
    Vec2 center;
    Vec2 half_extent;
    Vec2 velocity;

    Vec2 center_at(double t) const { return center + velocity * t; }
};

// Euclidean distance from a point to a (stationary) rectangle footprint; zero
// inside the rectangle.
double point_rect_distance(const Vec2& p, const Vec2& center, const Vec2& half_extent);

// Linear interpolation along a timed path: positions[k] is the pose at
// time k * dt, so index 0 is the pose at t = 0.
Vec2 interpolate_timed_path(const std::vector<Vec2>& positions, double dt, double t);

// True if a disc of the given radius swept along the timed path collides with
// any rectangle while both move; sampled every time_step seconds.
bool swept_disc_hits_rects(const std::vector<Vec2>& positions, double dt, double radius,
                           const std::vector<MovingRect>& rects, double horizon,
                           double time_step = 0.1);

}  // namespace tdp
