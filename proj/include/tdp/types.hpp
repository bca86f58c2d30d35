#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

// Ego-frame waypoint sequence at fixed 0.5 s spacing. This is the object
// being diffused, so it is kept as a plain value type.
struct Trajectory {
    std::vector<Vec2> waypoints;

    Trajectory() = default;
    explicit Trajectory(std::size_t horizon) : waypoints(horizon) {}
    Trajectory(std::initializer_list<Vec2> pts) : waypoints(pts) {}

    std::size_t horizon() const { return waypoints.size(); }
    Vec2& operator[](std::size_t i) { return waypoints[i]; }
    const Vec2& operator[](std::size_t i) const { return waypoints[i]; }

    bool all_finite() const {
        for (const auto& w : waypoints)
            if (!std::isfinite(w.x) || !std::isfinite(w.y)) return false;
        return true;
    }
};

// Per-waypoint time spacing in seconds, horizon length, coordinate bound.
inline constexpr double kWaypointDt = 0.5;
inline constexpr int kDefaultHorizon = 8;
inline constexpr double kCoordBound = 64.0;

// ---------------------------------------------------------------------------
// Error taxonomy. Callers are expected to catch by category; messages carry
// the offending value or record index.
// ---------------------------------------------------------------------------

struct BoundsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct CardinalityError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SequencingError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct MissingInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct TruncationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tdp
