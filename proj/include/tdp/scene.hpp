#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdp/geometry.hpp"
#include "tdp/types.hpp"

namespace tdp {

enum class RouteIntent : uint8_t {
    Straight = 0,
    LeftTurn = 1,
    RightTurn = 2,
    LaneChangeLeft = 3,
    LaneChangeRight = 4,
};

const char* intent_name(RouteIntent intent);
RouteIntent intent_from_name(const std::string& name);
inline constexpr int kNumIntents = 5;

struct Obstacle {
    Vec2 center;       // meters, ego frame at t = 0
    Vec2 half_extent;  // meters, axis-aligned
    Vec2 velocity;     // m/s, constant

    MovingRect as_rect() const { return {center, half_extent, velocity}; }
};

// BEV conditioning grid. Channels:
//   0 drivable, 1 obstacle occupancy at t=0, 2 obstacle occupancy at the
//   4 s horizon, 3/4 constant planes (cos, sin) of the route goal direction.
// Values are bilinearly sampled with zero padding outside the grid.
struct BevGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    double cell = 0.5;     // meters per cell
    double origin_x = 0.0; // world coords of the (0,0) cell center
    double origin_y = 0.0;
    std::vector<float> data;  // channel-major, then row-major

    float value(int c, int row, int col) const {
        return data[(static_cast<std::size_t>(c) * height + row) * width + col];
    }
    float& value(int c, int row, int col) {
        return data[(static_cast<std::size_t>(c) * height + row) * width + col];
    }

    // Bilinear sample of channel c at world (x, y); optionally returns the
    // spatial gradient of the sampled value.
    double sample(int c, double x, double y, double* dx = nullptr, double* dy = nullptr) const;
};

inline constexpr int kBevChannels = 5;
inline constexpr int kGridSize = 128;   // 64 m extent at 0.5 m cells
inline constexpr double kGridCell = 0.5;
inline constexpr double kGridHalfExtent = 32.0;

// Boolean drivable-area grid, same extent as the BEV grid.
struct DrivableMask {
    int height = kGridSize;
    int width = kGridSize;
    std::vector<uint8_t> cells;  // row-major, 1 = drivable

    bool at(int row, int col) const {
        if (row < 0 || row >= height || col < 0 || col >= width) return false;
        return cells[static_cast<std::size_t>(row) * width + col] != 0;
    }
    // Cell lookup for a world point; outside the grid counts as non-drivable.
    bool contains(const Vec2& p) const;
};

struct Scene {
    RouteIntent intent = RouteIntent::Straight;
    uint64_t seed = 0;
    DrivableMask drivable_mask;
    std::vector<Obstacle> obstacles;
    Trajectory gt_trajectory;  // T_f waypoints at 0.5 s spacing
    Polyline route;            // centerline the reference planner follows
    double goal_heading = 0.0; // radians, direction from ego to route goal
    BevGrid bev;               // filled by rasterize()

    std::vector<MovingRect> obstacle_rects() const;
};

// Procedural scenario: road geometry per intent, 0-6 obstacles scaled by
// difficulty, and a collision-free kinematic demonstration. Throws
// GenerationError when no feasible demonstration exists after 100 obstacle
// redraws.
Scene generate_scene(RouteIntent intent, double difficulty, uint64_t seed);

// Scene generation stats for CLI summaries.
struct GenStats {
    int obstacle_retries = 0;
};
Scene generate_scene(RouteIntent intent, double difficulty, uint64_t seed, GenStats& stats);

BevGrid rasterize(const Scene& scene);

// True when the swept corridor of the given radius around the timed path
// (positions[0] at t = 0) stays inside the drivable area. Shared between the
// generator's feasibility checks and the evaluation metrics.
bool corridor_in_drivable(const std::vector<Vec2>& positions, const DrivableMask& mask,
                          double radius);

// Length-prefixed little-endian dataset: header "TDPD" + version + count,
// then one record per scene. BEV features and the route are derived state
// and are rebuilt on read.
void write_dataset(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> read_dataset(const std::string& path);

inline constexpr uint16_t kDatasetVersion = 1;

}  // namespace tdp
