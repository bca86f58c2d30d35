#include "tdp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tdp/io_util.hpp"
#include "tdp/rng.hpp"

namespace tdp {

const char* intent_name(RouteIntent intent) {
    switch (intent) {
        case RouteIntent::Straight: return "straight";
        case RouteIntent::LeftTurn: return "left_turn";
        case RouteIntent::RightTurn: return "right_turn";
        case RouteIntent::LaneChangeLeft: return "lane_change_left";
        case RouteIntent::LaneChangeRight: return "lane_change_right";
    }
    return "unknown";
}

RouteIntent intent_from_name(const std::string& name) {
    for (int i = 0; i < kNumIntents; ++i)
        if (name == intent_name(static_cast<RouteIntent>(i))) return static_cast<RouteIntent>(i);
    throw ConfigError("unknown intent: " + name);
}

// ---------------------------------------------------------------------------
// BEV grid
// ---------------------------------------------------------------------------

double BevGrid::sample(int c, double x, double y, double* dx, double* dy) const {
    const double u = (x - origin_x) / cell;
    const double v = (y - origin_y) / cell;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const int c0 = static_cast<int>(fu);
    const int r0 = static_cast<int>(fv);
    const double au = u - fu;
    const double av = v - fv;

    auto cell_val = [&](int row, int col) -> double {
        if (row < 0 || row >= height || col < 0 || col >= width) return 0.0;
        return static_cast<double>(value(c, row, col));
    };
    const double v00 = cell_val(r0, c0);
    const double v01 = cell_val(r0, c0 + 1);
    const double v10 = cell_val(r0 + 1, c0);
    const double v11 = cell_val(r0 + 1, c0 + 1);

    const double top = v00 * (1.0 - au) + v01 * au;
    const double bot = v10 * (1.0 - au) + v11 * au;
    if (dx != nullptr) *dx = ((v01 - v00) * (1.0 - av) + (v11 - v10) * av) / cell;
    if (dy != nullptr) *dy = (bot - top) / cell;
    return top * (1.0 - av) + bot * av;
}

bool DrivableMask::contains(const Vec2& p) const {
    const int col = static_cast<int>(std::floor((p.x + kGridHalfExtent) / kGridCell));
    const int row = static_cast<int>(std::floor((p.y + kGridHalfExtent) / kGridCell));
    return at(row, col);
}

std::vector<MovingRect> Scene::obstacle_rects() const {
    std::vector<MovingRect> rects;
    rects.reserve(obstacles.size());
    for (const auto& o : obstacles) rects.push_back(o.as_rect());
    return rects;
}

// ---------------------------------------------------------------------------
// Road geometry
// ---------------------------------------------------------------------------

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kRoadHalfWidth = 1.5 * kLaneWidth;  // three lanes
constexpr double kCenterlineStep = 0.25;
// waypoint label noise; keeps the action distribution non-degenerate while
// leaving the demonstrations inside the comfort envelope
constexpr double kLabelNoiseSigma = 0.05;
constexpr double kEvalCorridorRadius = 1.0;

constexpr uint64_t kRoadTag = 1;
constexpr uint64_t kObstacleTagBase = 100;
constexpr uint64_t kNoiseTagBase = 10000;

struct Box {
    double x_lo, x_hi, y_lo, y_hi;
    bool contains(const Vec2& p) const {
        return p.x >= x_lo && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi;
    }
};

struct RoadGeometry {
    Polyline centerline;
    std::vector<Box> boxes;  // drivable area = union
    double v_lo = 3.0;       // feasible constant/initial speed window
    double v_hi = 6.0;
    bool constant_speed = false;  // turns use a constant profile
};

double quintic_step(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

RoadGeometry build_road(RouteIntent intent, uint64_t road_seed) {
    Rng rng(road_seed);
    RoadGeometry road;
    std::vector<Vec2> pts;

    switch (intent) {
        case RouteIntent::Straight: {
            for (double s = 0.0; s <= 30.0 + 1e-9; s += kCenterlineStep) pts.push_back({s, 0.0});
            road.boxes.push_back({-6.0, 30.5, -kRoadHalfWidth, kRoadHalfWidth});
            road.v_lo = 4.0;
            road.v_hi = 5.5;
            break;
        }
        case RouteIntent::LaneChangeLeft:
        case RouteIntent::LaneChangeRight: {
            const double sign = intent == RouteIntent::LaneChangeLeft ? 1.0 : -1.0;
            const double x0 = rng.uniform(3.0, 6.0);
            const double len = rng.uniform(10.0, 16.0);
            for (double x = 0.0; x <= 30.0 + 1e-9; x += kCenterlineStep)
                pts.push_back({x, sign * kLaneWidth * quintic_step((x - x0) / len)});
            road.boxes.push_back({-6.0, 30.5, -kRoadHalfWidth, kRoadHalfWidth});
            road.v_lo = 4.0;
            road.v_hi = 5.5;
            break;
        }
        case RouteIntent::LeftTurn:
        case RouteIntent::RightTurn: {
            const double sign = intent == RouteIntent::LeftTurn ? 1.0 : -1.0;
            const double x_turn = rng.uniform(4.0, 7.0);
            const double radius = rng.uniform(5.0, 8.0);
            const double arc_len = 0.5 * M_PI * radius;
            const double exit_len = 8.0;
            for (double s = 0.0; s < x_turn; s += kCenterlineStep) pts.push_back({s, 0.0});
            for (double s = 0.0; s <= arc_len + 1e-9; s += kCenterlineStep) {
                const double phi = s / radius;
                pts.push_back({x_turn + radius * std::sin(phi),
                               sign * radius * (1.0 - std::cos(phi))});
            }
            const double x_cross = x_turn + radius;
            for (double s = kCenterlineStep; s <= exit_len + 1e-9; s += kCenterlineStep)
                pts.push_back({x_cross, sign * (radius + s)});

            road.boxes.push_back(
                {-6.0, x_cross + kRoadHalfWidth, -kRoadHalfWidth, kRoadHalfWidth});
            if (intent == RouteIntent::LeftTurn)
                road.boxes.push_back({x_cross - kRoadHalfWidth, x_cross + kRoadHalfWidth,
                                      -kRoadHalfWidth, radius + exit_len + 2.5});
            else
                road.boxes.push_back({x_cross - kRoadHalfWidth, x_cross + kRoadHalfWidth,
                                      -(radius + exit_len + 2.5), kRoadHalfWidth});

            // keep the quarter arc finishable within the horizon while
            // respecting the lateral-acceleration cap sqrt(4R)
            const double route_len = x_turn + arc_len + exit_len;
            const double v_min = (x_turn + arc_len + 1.0) / 4.0;
            const double v_max =
                std::min(0.95 * std::sqrt(4.0 * radius), (route_len - 1.5) / 4.0);
            road.v_lo = v_min;
            road.v_hi = std::max(v_min + 0.05, v_max);
            road.constant_speed = true;
            break;
        }
    }
    road.centerline = Polyline::from_points(std::move(pts));
    return road;
}

DrivableMask mask_from_boxes(const std::vector<Box>& boxes) {
    DrivableMask mask;
    mask.cells.assign(static_cast<std::size_t>(mask.height) * mask.width, 0);
    for (int row = 0; row < mask.height; ++row) {
        const double y = -kGridHalfExtent + (row + 0.5) * kGridCell;
        for (int col = 0; col < mask.width; ++col) {
            const double x = -kGridHalfExtent + (col + 0.5) * kGridCell;
            for (const auto& b : boxes) {
                if (b.contains({x, y})) {
                    mask.cells[static_cast<std::size_t>(row) * mask.width + col] = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

// Arc-length positions at the 8 waypoint times for a clamped linear speed
// profile starting at the ego origin.
std::vector<double> integrate_profile(double v0, double accel, double cap) {
    std::vector<double> s_at_wp;
    double s = 0.0;
    double t = 0.0;
    const double dt = 0.01;
    for (int k = 1; k <= kDefaultHorizon; ++k) {
        const double t_target = kWaypointDt * k;
        while (t < t_target - 1e-12) {
            const double v = std::clamp(v0 + accel * t, 2.0, 7.5);
            s += v * dt;
            t += dt;
        }
        s_at_wp.push_back(std::min(s, cap));
    }
    return s_at_wp;
}

Vec2 left_normal(const Vec2& tangent) { return {-tangent.y, tangent.x}; }

Trajectory path_with_offset(const Polyline& route, const std::vector<double>& s_at_wp,
                            double offset, double blend_len) {
    Trajectory traj(s_at_wp.size());
    for (std::size_t k = 0; k < s_at_wp.size(); ++k) {
        const double s = s_at_wp[k];
        const double d = offset * quintic_step(blend_len > 0.0 ? s / blend_len : 1.0);
        traj[k] = route.at(s) + d * left_normal(route.tangent_at(s));
    }
    return traj;
}

std::vector<Vec2> with_origin(const Trajectory& traj) {
    std::vector<Vec2> positions;
    positions.reserve(traj.horizon() + 1);
    positions.push_back({0.0, 0.0});
    positions.insert(positions.end(), traj.waypoints.begin(), traj.waypoints.end());
    return positions;
}

}  // namespace

bool corridor_in_drivable(const std::vector<Vec2>& positions, const DrivableMask& mask,
                          double radius) {
    if (positions.size() < 2) return false;
    const Polyline path = Polyline::from_points(positions);
    const double step = 0.2;
    const int n = static_cast<int>(std::ceil(path.length() / step));
    for (int i = 0; i <= n; ++i) {
        const double s = std::min(path.length(), i * step);
        const Vec2 p = path.at(s);
        const Vec2 nrm = left_normal(path.tangent_at(s));
        for (const double off : {0.0, 0.5 * radius, -0.5 * radius, radius, -radius})
            if (!mask.contains(p + off * nrm)) return false;
    }
    return true;
}

Scene generate_scene(RouteIntent intent, double difficulty, uint64_t seed) {
    GenStats stats;
    return generate_scene(intent, difficulty, seed, stats);
}

Scene generate_scene(RouteIntent intent, double difficulty, uint64_t seed, GenStats& stats) {
    if (difficulty < 0.0 || difficulty > 1.0)
        throw BoundsError("difficulty must lie in [0, 1]");

    const RoadGeometry road = build_road(intent, mix_seed(seed, kRoadTag));
    const Polyline& route = road.centerline;
    const double route_cap = std::min(26.0, route.length() - 1.5);

    Scene scene;
    scene.intent = intent;
    scene.seed = seed;
    scene.drivable_mask = mask_from_boxes(road.boxes);
    scene.route = route;
    {
        const Vec2 goal = route.points.back() - route.points.front();
        scene.goal_heading = std::atan2(goal.y, goal.x);
    }

    constexpr int kMaxObstacleAttempts = 100;
    for (int attempt = 0; attempt < kMaxObstacleAttempts; ++attempt) {
        Rng rng(mix_seed(seed, kObstacleTagBase + static_cast<uint64_t>(attempt)));

        // speed profile
        double v0, accel;
        if (road.constant_speed) {
            v0 = rng.uniform(road.v_lo, road.v_hi);
            accel = 0.0;
        } else {
            v0 = rng.uniform(road.v_lo, road.v_hi);
            const double a_hi = std::min(1.5, (route_cap - 4.0 * v0) / 8.0);
            accel = rng.uniform(-1.2, std::max(-1.2, a_hi));
        }
        const std::vector<double> s_at_wp = integrate_profile(v0, accel, route_cap);

        // obstacles
        const int n_obs = std::min(6, static_cast<int>(std::floor(difficulty * 6.0 +
                                                                  rng.uniform())));
        std::vector<Obstacle> obstacles;
        for (int i = 0; i < n_obs; ++i) {
            Obstacle o;
            for (int tries = 0; tries < 20; ++tries) {
                const double s = rng.uniform(5.0, std::max(6.0, route.length() - 2.0));
                const double lat = rng.uniform(-4.5, 4.5);
                o.center = route.at(s) + lat * left_normal(route.tangent_at(s));
                o.half_extent = {rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2)};
                if (rng.uniform() < 0.55) {
                    o.velocity = {0.0, 0.0};
                } else {
                    const double speed = rng.uniform(0.5, 2.5);
                    const Vec2 dir = route.tangent_at(s) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
                    o.velocity = speed * dir;
                }
                const bool clear_of_ego =
                    point_rect_distance({0.0, 0.0}, o.center, o.half_extent) > 2.5;
                const bool in_grid = std::abs(o.center.x) < 30.0 && std::abs(o.center.y) < 30.0;
                if (clear_of_ego && in_grid) break;
            }
            obstacles.push_back(o);
        }
        std::vector<MovingRect> rects;
        for (const auto& o : obstacles) rects.push_back(o.as_rect());

        // lateral offset candidates: centerline first, then swerves with a
        // per-attempt preferred side
        const double flip = rng.uniform() < 0.5 ? 1.0 : -1.0;
        const double offsets[] = {0.0,          0.9 * flip,  -0.9 * flip, 1.8 * flip,
                                  -1.8 * flip,  2.7 * flip,  -2.7 * flip};

        for (const double offset : offsets) {
            Trajectory clean = path_with_offset(route, s_at_wp, offset, 8.0);
            const std::vector<Vec2> clean_path = with_origin(clean);
            if (!corridor_in_drivable(clean_path, scene.drivable_mask,
                                      kEvalCorridorRadius + 0.05))
                continue;
            if (swept_disc_hits_rects(clean_path, kWaypointDt, kEvalCorridorRadius + 0.3, rects,
                                      4.0))
                continue;

            // label noise, re-verified against the exact evaluation predicates
            for (int noise_try = 0; noise_try < 10; ++noise_try) {
                Rng noise_rng(mix_seed(seed, kNoiseTagBase +
                                                 static_cast<uint64_t>(attempt) * 16 +
                                                 static_cast<uint64_t>(noise_try)));
                Trajectory noisy = clean;
                for (auto& w : noisy.waypoints) {
                    w.x += kLabelNoiseSigma * noise_rng.normal();
                    w.y += kLabelNoiseSigma * noise_rng.normal();
                }
                const std::vector<Vec2> noisy_path = with_origin(noisy);
                if (!corridor_in_drivable(noisy_path, scene.drivable_mask, kEvalCorridorRadius))
                    continue;
                if (swept_disc_hits_rects(noisy_path, kWaypointDt, kEvalCorridorRadius, rects,
                                          4.0))
                    continue;

                scene.obstacles = std::move(obstacles);
                scene.gt_trajectory = std::move(noisy);
                scene.bev = rasterize(scene);
                stats.obstacle_retries = attempt;
                return scene;
            }
        }
    }
    throw GenerationError("no feasible demonstration for intent " +
                          std::string(intent_name(intent)) + " seed " + std::to_string(seed) +
                          " after 100 obstacle redraws");
}

BevGrid rasterize(const Scene& scene) {
    BevGrid bev;
    bev.channels = kBevChannels;
    bev.height = kGridSize;
    bev.width = kGridSize;
    bev.cell = kGridCell;
    bev.origin_x = -kGridHalfExtent + 0.5 * kGridCell;
    bev.origin_y = -kGridHalfExtent + 0.5 * kGridCell;
    bev.data.assign(static_cast<std::size_t>(kBevChannels) * kGridSize * kGridSize, 0.0f);

    const auto rects = scene.obstacle_rects();
    const float cg = static_cast<float>(std::cos(scene.goal_heading));
    const float sg = static_cast<float>(std::sin(scene.goal_heading));
    const double horizon_t = kWaypointDt * kDefaultHorizon;

    for (int row = 0; row < kGridSize; ++row) {
        const double y = bev.origin_y + row * kGridCell;
        for (int col = 0; col < kGridSize; ++col) {
            const double x = bev.origin_x + col * kGridCell;
            bev.value(0, row, col) = scene.drivable_mask.at(row, col) ? 1.0f : 0.0f;
            for (const auto& r : rects) {
                if (point_rect_distance({x, y}, r.center, r.half_extent) == 0.0)
                    bev.value(1, row, col) = 1.0f;
                if (point_rect_distance({x, y}, r.center_at(horizon_t), r.half_extent) == 0.0)
                    bev.value(2, row, col) = 1.0f;
            }
            bev.value(3, row, col) = cg;
            bev.value(4, row, col) = sg;
        }
    }
    return bev;
}

// ---------------------------------------------------------------------------
// Dataset persistence
// ---------------------------------------------------------------------------

namespace {

void write_scene_record(std::ostream& os, const Scene& scene) {
    write_le<uint8_t>(os, static_cast<uint8_t>(scene.intent));
    write_le<uint64_t>(os, scene.seed);
    const auto& mask = scene.drivable_mask;
    write_le<uint16_t>(os, static_cast<uint16_t>(mask.height));
    write_le<uint16_t>(os, static_cast<uint16_t>(mask.width));
    const std::size_t nbits = static_cast<std::size_t>(mask.height) * mask.width;
    std::vector<uint8_t> packed((nbits + 7) / 8, 0);
    for (std::size_t i = 0; i < nbits; ++i)
        if (mask.cells[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    os.write(reinterpret_cast<const char*>(packed.data()),
             static_cast<std::streamsize>(packed.size()));
    write_le<uint8_t>(os, static_cast<uint8_t>(scene.obstacles.size()));
    for (const auto& o : scene.obstacles) {
        write_le<double>(os, o.center.x);
        write_le<double>(os, o.center.y);
        write_le<double>(os, o.half_extent.x);
        write_le<double>(os, o.half_extent.y);
        write_le<double>(os, o.velocity.x);
        write_le<double>(os, o.velocity.y);
    }
    write_le<uint16_t>(os, static_cast<uint16_t>(scene.gt_trajectory.horizon()));
    for (const auto& w : scene.gt_trajectory.waypoints) {
        write_le<double>(os, w.x);
        write_le<double>(os, w.y);
    }
}

Scene read_scene_record(std::istream& is, std::size_t record) {
    const std::string tag = "record " + std::to_string(record);
    try {
        Scene scene;
        scene.intent = static_cast<RouteIntent>(read_le<uint8_t>(is, "intent"));
        if (static_cast<int>(scene.intent) >= kNumIntents)
            throw ParseError("invalid intent value");
        scene.seed = read_le<uint64_t>(is, "seed");
        const int height = read_le<uint16_t>(is, "grid height");
        const int width = read_le<uint16_t>(is, "grid width");
        if (height != kGridSize || width != kGridSize)
            throw ParseError("unsupported grid dims " + std::to_string(height) + "x" +
                             std::to_string(width));
        scene.drivable_mask.height = height;
        scene.drivable_mask.width = width;
        const std::size_t nbits = static_cast<std::size_t>(height) * width;
        std::vector<uint8_t> packed((nbits + 7) / 8);
        is.read(reinterpret_cast<char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
        if (!is) throw ParseError("unexpected end of file in drivable mask");
        scene.drivable_mask.cells.resize(nbits);
        for (std::size_t i = 0; i < nbits; ++i)
            scene.drivable_mask.cells[i] = (packed[i / 8] >> (i % 8)) & 1u;

        const int n_obs = read_le<uint8_t>(is, "obstacle count");
        for (int i = 0; i < n_obs; ++i) {
            Obstacle o;
            o.center.x = read_le<double>(is, "obstacle");
            o.center.y = read_le<double>(is, "obstacle");
            o.half_extent.x = read_le<double>(is, "obstacle");
            o.half_extent.y = read_le<double>(is, "obstacle");
            o.velocity.x = read_le<double>(is, "obstacle");
            o.velocity.y = read_le<double>(is, "obstacle");
            scene.obstacles.push_back(o);
        }
        const int n_wp = read_le<uint16_t>(is, "waypoint count");
        for (int i = 0; i < n_wp; ++i) {
            const double x = read_le<double>(is, "waypoint");
            const double y = read_le<double>(is, "waypoint");
            scene.gt_trajectory.waypoints.push_back({x, y});
        }

        // derived state
        const RoadGeometry road = build_road(scene.intent, mix_seed(scene.seed, kRoadTag));
        scene.route = road.centerline;
        const Vec2 goal = scene.route.points.back() - scene.route.points.front();
        scene.goal_heading = std::atan2(goal.y, goal.x);
        scene.bev = rasterize(scene);
        return scene;
    } catch (const ParseError& e) {
        throw ParseError(tag + ": " + e.what());
    }
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<Scene>& scenes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open dataset for writing: " + path);
        write_magic(os, "TDPD");
        write_le<uint16_t>(os, kDatasetVersion);
        write_le<uint32_t>(os, static_cast<uint32_t>(scenes.size()));
        for (const auto& s : scenes) write_scene_record(os, s);
        if (!os) throw IoError("dataset write failed: " + path);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Scene> read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    expect_magic(is, "TDPD", "dataset");
    const uint16_t version = read_le<uint16_t>(is, "dataset version");
    if (version != kDatasetVersion)
        throw VersionError("dataset version " + std::to_string(version) + " unsupported (want " +
                           std::to_string(kDatasetVersion) + ")");
    const uint32_t count = read_le<uint32_t>(is, "scene count");
    std::vector<Scene> scenes;
    scenes.reserve(count);
    for (uint32_t i = 0; i < count; ++i) scenes.push_back(read_scene_record(is, i));
    return scenes;
}

}  // namespace tdp
