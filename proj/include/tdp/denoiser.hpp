#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdp/scene.hpp"
#include "tdp/types.hpp"

namespace tdp {

// Cascade conditional decoder configuration. Per stage the pipeline is:
// bilinear BEV sampling at the waypoint coordinates -> per-waypoint coordinate
// embedding + BEV projection -> flattened trajectory MLP -> single-head
// cross-attention over obstacle tokens -> FiLM timestep modulation -> offset
// and score heads. Stages have distinct parameters; the same parameters serve
// every denoising timestep.
struct DenoiserConfig {
    int d = 64;             // attention / feature width
    int coord_dim = 16;     // per-waypoint coordinate embedding
    int bev_proj_dim = 16;  // per-waypoint BEV feature projection
    int mlp_hidden = 128;   // trajectory MLP hidden width
    int emb_dim = 64;       // sinusoidal timestep embedding
    int horizon = kDefaultHorizon;
    int bev_channels = kBevChannels;
    int n_stages = 2;
    bool deep_supervision = true;  // supervise intermediate cascade stages

    void validate() const;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 1;  // 1 for bias vectors

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Stable name -> range map of the flat parameter vector, stage-major.
std::vector<ParamBlock> param_layout(const DenoiserConfig& config);
std::size_t param_count(const DenoiserConfig& config);

struct DenoiserParams {
    DenoiserConfig config;
    std::vector<double> flat;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per block; the offset head's
// final layer is zero-initialized so a fresh decoder is the identity on its
// input trajectories.
DenoiserParams init_params(uint64_t seed, const DenoiserConfig& config);

struct DenoiserOutput {
    std::vector<Trajectory> trajectories;  // final cascade stage
    std::vector<double> logits;            // pre-sigmoid scores, final stage
    std::vector<std::vector<Trajectory>> stage_trajectories;  // [stage][traj]
    std::vector<std::vector<double>> stage_logits;
};

// Gradients w.r.t. every stage output; shapes mirror DenoiserOutput's
// per-stage fields (Trajectory doubles as a waypoint-gradient container).
struct DenoiserOutputGrads {
    std::vector<std::vector<Trajectory>> d_stage_trajectories;
    std::vector<std::vector<double>> d_stage_logits;

    static DenoiserOutputGrads zeros(const DenoiserConfig& config, int n_traj);
};

// Saved intermediates of one forward pass, consumed by backward().
struct DenoiserTrace;

DenoiserOutput forward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                       const Scene& scene, int step);
DenoiserOutput forward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                       const Scene& scene, int step, DenoiserTrace& trace);

// Exact reverse-mode gradient of the forward computation w.r.t. the flat
// parameter vector.
std::vector<double> backward(const DenoiserParams& params, const DenoiserTrace& trace,
                             const DenoiserOutputGrads& grads);
std::vector<double> backward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                             const Scene& scene, int step, const DenoiserOutputGrads& grads);

std::vector<double> sinusoidal_embedding(int step, int dim);

// Input feature scaling shared by forward/backward and the hand-computed
// oracles in the tests.
inline constexpr double kCoordScale = 0.1;
inline constexpr double kObstaclePosScale = 0.1;
inline constexpr double kObstacleVelScale = 0.2;

// --- trace definition (exposed for the train module and tests) -------------

struct StageTrajTrace {
    std::vector<Vec2> tau_in;
    std::vector<double> samp;     // horizon x C
    std::vector<double> samp_dx;  // spatial gradients of each sample
    std::vector<double> samp_dy;
    std::vector<double> x;    // concat of coord embeddings and BEV projections
    std::vector<double> h1;   // post-ReLU
    std::vector<double> f0;
    std::vector<double> q;
    std::vector<double> alpha;
    std::vector<double> f1;
    std::vector<double> scale;
    std::vector<double> f2;
    std::vector<double> off_h;  // post-ReLU
    std::vector<double> sc_h;   // post-ReLU
};

struct StageTrace {
    std::vector<double> obs_u;  // M x d, post-ReLU
    std::vector<double> tok;    // M x d
    std::vector<double> keys;   // M x d
    std::vector<double> vals;   // M x d
    std::vector<StageTrajTrace> per_traj;
};

struct DenoiserTrace {
    int step = 0;
    int n_traj = 0;
    std::vector<double> emb;
    std::vector<double> obs_raw;  // M x 6 scaled features
    std::vector<StageTrace> stages;
    DenoiserOutput output;
};

}  // namespace tdp
