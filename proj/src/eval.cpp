#include "tdp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tdp/geometry.hpp"
#include "tdp/plan.hpp"
#include "tdp/rng.hpp"

namespace tdp {

// ---------------------------------------------------------------------------
// Mode-diversity score
// ---------------------------------------------------------------------------

namespace {

// Corridor raster over a grid anchored at the joint bounding box; anchoring
// the grid to the data makes the score exactly invariant under joint rigid
// translation.
struct CorridorRaster {
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0, res = 0.25;

    std::vector<uint8_t> stamp(const Trajectory& traj, double radius) const {
        std::vector<uint8_t> cells(static_cast<std::size_t>(nx) * ny, 0);
        const auto& wp = traj.waypoints;
        const std::size_t n_seg = wp.size() > 1 ? wp.size() - 1 : 1;
        for (std::size_t i = 0; i < n_seg; ++i) {
            const Vec2 a = wp[i];
            const Vec2 b = wp.size() > 1 ? wp[i + 1] : wp[i];
            const double lo_x = std::min(a.x, b.x) - radius - res;
            const double hi_x = std::max(a.x, b.x) + radius + res;
            const double lo_y = std::min(a.y, b.y) - radius - res;
            const double hi_y = std::max(a.y, b.y) + radius + res;
            const int c0 = std::max(0, static_cast<int>(std::floor((lo_x - x0) / res)));
            const int c1 = std::min(nx - 1, static_cast<int>(std::ceil((hi_x - x0) / res)));
            const int r0 = std::max(0, static_cast<int>(std::floor((lo_y - y0) / res)));
            const int r1 = std::min(ny - 1, static_cast<int>(std::ceil((hi_y - y0) / res)));
            const Vec2 ab = b - a;
            const double len2 = ab.dot(ab);
            for (int r = r0; r <= r1; ++r) {
                const double py = y0 + r * res;
                for (int c = c0; c <= c1; ++c) {
                    const Vec2 p{x0 + c * res, py};
                    double f = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
                    const Vec2 q = a + ab * f;
                    if ((p - q).dot(p - q) <= radius * radius)
                        cells[static_cast<std::size_t>(r) * nx + c] = 1;
                }
            }
        }
        return cells;
    }
};

}  // namespace

double diversity_score(const DiversityInput& input) {
    const auto& trajs = input.trajectories;
    if (trajs.empty()) throw CardinalityError("diversity_score needs at least one trajectory");
    if (input.corridor_width <= 0.0 || input.raster_resolution <= 0.0)
        throw BoundsError("corridor width and raster resolution must be positive");

    double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
    double hi_x = -lo_x, hi_y = -lo_y;
    for (const auto& t : trajs) {
        if (t.horizon() < 1) throw DegenerateInputError("empty trajectory");
        for (const auto& w : t.waypoints) {
            lo_x = std::min(lo_x, w.x);
            hi_x = std::max(hi_x, w.x);
            lo_y = std::min(lo_y, w.y);
            hi_y = std::max(hi_y, w.y);
        }
    }

    const double radius = 0.5 * input.corridor_width;
    CorridorRaster raster;
    raster.res = input.raster_resolution;
    raster.x0 = lo_x - radius - raster.res;
    raster.y0 = lo_y - radius - raster.res;
    raster.nx = static_cast<int>(std::ceil((hi_x - lo_x + 2.0 * (radius + raster.res)) /
                                           raster.res)) + 1;
    raster.ny = static_cast<int>(std::ceil((hi_y - lo_y + 2.0 * (radius + raster.res)) /
                                           raster.res)) + 1;

    std::vector<std::vector<uint8_t>> footprints;
    footprints.reserve(trajs.size());
    for (const auto& t : trajs) {
        bool moves = false;
        for (std::size_t i = 1; i < t.waypoints.size(); ++i)
            if ((t.waypoints[i] - t.waypoints[0]).norm() > 1e-12) moves = true;
        if (t.horizon() > 1 && !moves)
            throw DegenerateInputError("degenerate single-point trajectory");
        auto cells = raster.stamp(t, radius);
        if (std::count(cells.begin(), cells.end(), uint8_t{1}) == 0)
            throw DegenerateInputError("trajectory rasterized to zero area");
        footprints.push_back(std::move(cells));
    }

    std::vector<uint8_t> all(footprints.front().size(), 0);
    for (const auto& f : footprints)
        for (std::size_t i = 0; i < all.size(); ++i) all[i] |= f[i];

    double mean_iou = 0.0;
    for (const auto& f : footprints) {
        long inter = 0, uni = 0;
        for (std::size_t i = 0; i < all.size(); ++i) {
            inter += (f[i] & all[i]);
            uni += (f[i] | all[i]);
        }
        mean_iou += static_cast<double>(inter) / static_cast<double>(uni);
    }
    mean_iou /= static_cast<double>(footprints.size());
    return 1.0 - mean_iou;
}

// ---------------------------------------------------------------------------
// Mini planning-quality score
// ---------------------------------------------------------------------------

MiniScore mini_pdm(const Scene& scene, const Trajectory& traj) {
    return mini_pdm(scene, traj, EvalConfig{});
}

MiniScore mini_pdm(const Scene& scene, const Trajectory& traj, const EvalConfig& cfg) {
    if (traj.horizon() < 2) throw ShapeError("trajectory needs at least 2 waypoints");
    if (!traj.all_finite()) throw ShapeError("trajectory has non-finite coordinates");

    const double radius = 0.5 * cfg.corridor_width;
    const double horizon_t = kWaypointDt * static_cast<double>(traj.horizon());

    // ego path including the current position at t = 0
    std::vector<Vec2> positions;
    positions.reserve(traj.horizon() + 1);
    positions.push_back({0.0, 0.0});
    positions.insert(positions.end(), traj.waypoints.begin(), traj.waypoints.end());

    const auto rects = scene.obstacle_rects();

    MiniScore score;
    score.nc = swept_disc_hits_rects(positions, kWaypointDt, radius, rects, horizon_t) ? 0 : 1;
    score.dac = corridor_in_drivable(positions, scene.drivable_mask, radius) ? 1 : 0;

    // time-to-collision: freeze the ego at each instant and let the moving
    // obstacles run forward for the threshold window
    score.ttc = 1;
    for (double t = 0.0; t <= horizon_t + 1e-9 && score.ttc == 1; t += 0.1) {
        const Vec2 ego = interpolate_timed_path(positions, kWaypointDt, t);
        for (const auto& r : rects) {
            if (r.velocity.x == 0.0 && r.velocity.y == 0.0) continue;
            for (double delta = 0.1; delta <= cfg.ttc_threshold + 1e-9; delta += 0.1) {
                if (point_rect_distance(ego, r.center_at(t + delta), r.half_extent) <= radius) {
                    score.ttc = 0;
                    break;
                }
            }
            if (score.ttc == 0) break;
        }
    }

    // comfort from finite differences over the timed positions
    score.comf = 1;
    std::vector<Vec2> vel, acc;
    for (std::size_t i = 0; i + 1 < positions.size(); ++i)
        vel.push_back((positions[i + 1] - positions[i]) * (1.0 / kWaypointDt));
    for (std::size_t i = 0; i + 1 < vel.size(); ++i)
        acc.push_back((vel[i + 1] - vel[i]) * (1.0 / kWaypointDt));
    for (std::size_t i = 0; i + 1 < acc.size(); ++i) {
        const Vec2 jerk = (acc[i + 1] - acc[i]) * (1.0 / kWaypointDt);
        if (jerk.norm() > cfg.max_jerk) score.comf = 0;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double speed = vel[i].norm();
        if (speed < 0.3) continue;
        const Vec2 dir = vel[i] * (1.0 / speed);
        if (std::abs(dir.cross(acc[i])) > cfg.max_lat_accel) score.comf = 0;
    }

    // ego progress along the route relative to the demonstration
    const Polyline& route =
        scene.route.points.size() >= 2
            ? scene.route
            : Polyline::from_points(std::vector<Vec2>{{0.0, 0.0},
                                                      scene.gt_trajectory.waypoints.back()});
    const double s_traj = route.project(traj.waypoints.back());
    const double s_ref = route.project(scene.gt_trajectory.waypoints.back());
    score.ep = s_ref > 0.1 ? std::clamp(s_traj / s_ref, 0.0, 1.0) : 1.0;

    score.pdms_mini = score.nc * score.dac *
                      (5.0 * score.ep + 5.0 * score.ttc + 2.0 * score.comf) / 12.0;
    return score;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

const char* paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::Truncated: return "truncated";
        case Paradigm::VanillaFullSchedule: return "vanilla";
        case Paradigm::SingleModeRegression: return "regression";
        case Paradigm::FixedVocabulary: return "vocabulary";
        case Paradigm::ExtrapolatedPrior: return "extrapolated";
    }
    return "unknown";
}

Paradigm paradigm_from_name(const std::string& name) {
    for (const auto p :
         {Paradigm::Truncated, Paradigm::VanillaFullSchedule, Paradigm::SingleModeRegression,
          Paradigm::FixedVocabulary, Paradigm::ExtrapolatedPrior})
        if (name == paradigm_name(p)) return p;
    throw ConfigError("unknown paradigm: " + name);
}

namespace {

PlanOptions options_for(Paradigm p, const Checkpoint& ckpt, const BenchmarkConfig& cfg) {
    PlanOptions opt;
    opt.n_infer = cfg.n_infer;
    switch (p) {
        case Paradigm::Truncated:
            opt.n_steps = cfg.truncated_steps;
            opt.init = InitMode::Anchored;
            break;
        case Paradigm::VanillaFullSchedule:
            opt.n_steps = cfg.vanilla_steps;
            opt.init = InitMode::PureNoise;
            break;
        case Paradigm::SingleModeRegression:
            if (ckpt.anchors.n_anchor() != 1)
                throw ConfigError("regression checkpoint must carry a single mean anchor");
            opt.n_infer = 1;
            opt.n_steps = 1;
            opt.init = InitMode::CleanAnchors;
            break;
        case Paradigm::FixedVocabulary:
            opt.n_infer = ckpt.anchors.n_anchor();
            opt.n_steps = 1;
            opt.init = InitMode::CleanAnchors;
            opt.vocab_score_only = true;
            break;
        case Paradigm::ExtrapolatedPrior:
            opt.n_steps = cfg.truncated_steps;
            opt.init = InitMode::Extrapolated;
            break;
    }
    return opt;
}

}  // namespace

BenchmarkReport run_benchmark(const std::vector<Scene>& scenes,
                              const std::vector<PlannerSetup>& planners,
                              const BenchmarkConfig& cfg) {
    if (scenes.empty()) throw CardinalityError("benchmark needs at least one scene");
    BenchmarkReport report;

    for (const auto& setup : planners) {
        if (setup.checkpoint == nullptr)
            throw ConfigError(std::string("missing checkpoint for paradigm ") +
                              paradigm_name(setup.paradigm));
        const Checkpoint& ckpt = *setup.checkpoint;

        ParadigmReport row;
        row.paradigm = setup.paradigm;
        row.n_scenes = static_cast<int>(scenes.size());

        double step_ms_acc = 0.0;
        long step_count = 0;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            PlanOptions opt = options_for(setup.paradigm, ckpt, cfg);
            opt.seed = mix_seed(cfg.seed, static_cast<uint64_t>(setup.paradigm) * 1000003ULL + i);
            const PlanResult result = plan(ckpt.params, ckpt.anchors, ckpt.sched, scenes[i], opt);
            row.steps = static_cast<int>(result.step_times_ms.size());

            const auto& top =
                result.candidates[static_cast<std::size_t>(result.top1_index)];
            const MiniScore ms = mini_pdm(scenes[i], top.trajectory, cfg.eval);
            row.pdms += ms.pdms_mini;
            row.nc += ms.nc;
            row.dac += ms.dac;
            row.ttc += ms.ttc;
            row.comf += ms.comf;
            row.ep += ms.ep;

            // diversity over the sampled set (top-k for the vocabulary
            // baseline, everything otherwise)
            DiversityInput div;
            if (setup.paradigm == Paradigm::FixedVocabulary) {
                const auto rows =
                    multi_mode_report(result, std::min<int>(cfg.diversity_samples,
                                                            static_cast<int>(
                                                                result.candidates.size())));
                for (const auto& r : rows)
                    div.trajectories.push_back(
                        result.candidates[static_cast<std::size_t>(r.candidate_index)]
                            .trajectory);
            } else {
                for (const auto& c : result.candidates) div.trajectories.push_back(c.trajectory);
            }
            row.diversity += diversity_score(div);

            for (const double ms_step : result.step_times_ms) {
                step_ms_acc += ms_step;
                row.total_plan_ms += ms_step;
                ++step_count;
            }
        }

        const double inv = 1.0 / static_cast<double>(scenes.size());
        row.pdms *= inv;
        row.nc *= inv;
        row.dac *= inv;
        row.ttc *= inv;
        row.comf *= inv;
        row.ep *= inv;
        row.diversity *= inv;
        row.total_plan_ms *= inv;
        row.mean_step_ms = step_count > 0 ? step_ms_acc / static_cast<double>(step_count) : 0.0;
        report.rows.push_back(row);
    }
    return report;
}

std::string format_report(const BenchmarkReport& report) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-13s %6s %7s %6s %6s %6s %6s %6s %7s %9s %9s\n",
                  "paradigm", "steps", "pdms", "nc", "dac", "ttc", "comf", "ep", "D",
                  "step_ms", "total_ms");
    os << buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf),
                      "%-13s %6d %7.3f %6.3f %6.3f %6.3f %6.3f %6.3f %7.3f %9.3f %9.3f\n",
                      paradigm_name(r.paradigm), r.steps, r.pdms, r.nc, r.dac, r.ttc, r.comf,
                      r.ep, r.diversity, r.mean_step_ms, r.total_plan_ms);
        os << buf;
    }
    return os.str();
}

void write_report_rows(const std::string& path, const BenchmarkReport& report) {
    std::ofstream os(path + ".tmp", std::ios::trunc);
    if (!os) throw IoError("cannot open report file for writing: " + path);
    os << "# paradigm n_scenes steps pdms nc dac ttc comf ep diversity mean_step_ms "
          "total_plan_ms\n";
    char buf[320];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf),
                      "%s %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.6f %.6f\n",
                      paradigm_name(r.paradigm), r.n_scenes, r.steps, r.pdms, r.nc, r.dac, r.ttc,
                      r.comf, r.ep, r.diversity, r.mean_step_ms, r.total_plan_ms);
        os << buf;
    }
    os.close();
    std::filesystem::rename(path + ".tmp", path);
}

}  // namespace tdp
