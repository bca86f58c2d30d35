#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdp/anchors.hpp"
#include "tdp/denoiser.hpp"
#include "tdp/eval.hpp"
#include "tdp/scene.hpp"
#include "tdp/schedule.hpp"

namespace tdp {

// Where the denoising chain starts.
//
//   Anchored     - noisy samples around the clustered anchors (the default)
//   PureNoise    - standard normal trajectories, full-schedule ladder
//   Extrapolated - noisy samples around a constant-velocity extrapolation of
//                  the ego's current motion
//   CleanAnchors - no noise, single decoder pass at step 0 (regression and
//                  fixed-vocabulary baselines)
enum class InitMode { Anchored, PureNoise, Extrapolated, CleanAnchors };

struct PlanOptions {
    int n_infer = 20;
    int n_steps = 2;
    double eta = 0.0;
    InitMode init = InitMode::Anchored;
    bool vocab_score_only = false;  // keep the input anchors as the output
    uint64_t seed = 0;
};

struct PlanCandidate {
    Trajectory trajectory;
    double confidence = 0.0;   // sigmoid of the final-step logit
    int origin_anchor = -1;
};

struct PlanResult {
    std::vector<PlanCandidate> candidates;  // in sample order
    int top1_index = 0;                     // argmax confidence, ties to lowest index
    std::vector<double> step_times_ms;      // wall time per denoising step
};

PlanResult plan(const DenoiserParams& params, const AnchorSet& anchors,
                const NoiseSchedule& sched, const Scene& scene, const PlanOptions& options);

// Anchored-init convenience with eta = 0.
PlanResult plan(const DenoiserParams& params, const AnchorSet& anchors,
                const NoiseSchedule& sched, const Scene& scene, int n_infer, int n_steps,
                uint64_t seed);

struct ReportRow {
    int rank = 0;             // 1-based
    int candidate_index = 0;  // index into PlanResult::candidates
    double confidence = 0.0;
    int origin_anchor = -1;
    bool has_score = false;
    MiniScore score;
};

// Stable top-k by descending confidence; per-candidate mini-PDM subscores are
// attached when a scene is provided.
std::vector<ReportRow> multi_mode_report(const PlanResult& result, int k,
                                         const Scene* scene = nullptr);

// Plain-text plan table: one candidate per row in rank order.
void write_plan_file(const std::string& path, const PlanResult& result);
PlanResult read_plan_file(const std::string& path);

// Constant-velocity extrapolation of the ego's current motion, derived from
// the first demonstrated waypoint (the synthetic stand-in for ego status).
Trajectory extrapolate_current_status(const Scene& scene);

}  // namespace tdp
