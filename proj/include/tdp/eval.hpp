#pragma once

#include <string>
#include <vector>

#include "tdp/checkpoint.hpp"
#include "tdp/scene.hpp"
#include "tdp/types.hpp"

namespace tdp {

// Mode-diversity score input: trajectories rasterized as width-inflated
// corridors on a common grid anchored to their joint bounding box.
struct DiversityInput {
    std::vector<Trajectory> trajectories;
    double corridor_width = 2.0;      // meters, approximates the vehicle footprint
    double raster_resolution = 0.25;  // meters per cell
};

// D = 1 - (1/N) sum_i Area(t_i intersect U) / Area(t_i union U), with U the
// union of all corridors and areas measured in cells.
double diversity_score(const DiversityInput& input);

struct MiniScore {
    int nc = 0;    // no at-fault collision
    int dac = 0;   // drivable-area compliance
    int ttc = 0;   // time-to-collision >= threshold
    int comf = 0;  // jerk and lateral-acceleration bounds
    double ep = 0.0;  // ego progress along the route
    double pdms_mini = 0.0;  // nc * dac * (5 ep + 5 ttc + 2 comf) / 12
};

struct EvalConfig {
    double corridor_width = 2.0;
    double ttc_threshold = 1.0;   // seconds
    double max_jerk = 10.0;       // m/s^3
    double max_lat_accel = 4.0;   // m/s^2
};

MiniScore mini_pdm(const Scene& scene, const Trajectory& traj);
MiniScore mini_pdm(const Scene& scene, const Trajectory& traj, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Four-paradigm comparison harness
// ---------------------------------------------------------------------------

enum class Paradigm {
    Truncated = 0,
    VanillaFullSchedule = 1,
    SingleModeRegression = 2,
    FixedVocabulary = 3,
    ExtrapolatedPrior = 4,
};

const char* paradigm_name(Paradigm p);
Paradigm paradigm_from_name(const std::string& name);

struct PlannerSetup {
    Paradigm paradigm;
    const Checkpoint* checkpoint = nullptr;
};

struct BenchmarkConfig {
    int n_infer = 20;
    int truncated_steps = 2;
    int vanilla_steps = 20;
    int diversity_samples = 20;
    uint64_t seed = 0;
    EvalConfig eval;
};

struct ParadigmReport {
    Paradigm paradigm;
    int n_scenes = 0;
    int steps = 0;
    double pdms = 0.0;
    double nc = 0.0;
    double dac = 0.0;
    double ttc = 0.0;
    double comf = 0.0;
    double ep = 0.0;
    double diversity = 0.0;
    double mean_step_ms = 0.0;   // wall time, machine dependent
    double total_plan_ms = 0.0;  // wall time, machine dependent
};

struct BenchmarkReport {
    std::vector<ParadigmReport> rows;
};

BenchmarkReport run_benchmark(const std::vector<Scene>& scenes,
                              const std::vector<PlannerSetup>& planners,
                              const BenchmarkConfig& config);

// Aligned table for stdout.
std::string format_report(const BenchmarkReport& report);
// Machine-readable rows, one paradigm per line, fixed column order.
void write_report_rows(const std::string& path, const BenchmarkReport& report);

}  // namespace tdp
