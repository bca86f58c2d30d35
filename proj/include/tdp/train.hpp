#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdp/anchors.hpp"
#include "tdp/denoiser.hpp"
#include "tdp/scene.hpp"
#include "tdp/schedule.hpp"

namespace tdp {

// Which diffusion regime the decoder trains under.
//
//   Truncated  - per-anchor noisy trajectories, steps in [1, T_trunc]
//   Vanilla    - ground truth diffused over the full [1, T] schedule, N = 1
//   Regression - single mean anchor, no noise, step 0
//   Vocabulary - clean anchors, score-only supervision (no L1)
enum class TrainMode { Truncated, Vanilla, Regression, Vocabulary };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
    double lambda = 1.0;          // BCE weight
    double learning_rate = 6e-4;
    int epochs = 60;
    int batch_size = 8;
    uint64_t seed = 0;
    int threads = 1;
    int eval_every = 0;  // epochs between pdms snapshots; 0 disables
    TrainMode mode = TrainMode::Truncated;

    void validate() const;
};

// One-hot positive labels: the anchor closest to the ground truth (mean L2
// over waypoints, ties to the lowest index).
struct Assignment {
    std::vector<int> labels;
    int positive_index = 0;
};

Assignment assign_targets(const AnchorSet& anchors, const Trajectory& gt);

struct LossBreakdown {
    double total = 0.0;
    double l1 = 0.0;
    double bce = 0.0;
};

// Combined reconstruction + classification loss on a decoder output, with
// analytic gradients w.r.t. the output written into `grads` when non-null.
// L1 is averaged over waypoint coordinates; BCE probabilities are floored at
// 1e-7 inside the log. With deep supervision the per-stage losses are
// averaged; otherwise only the final stage is supervised.
LossBreakdown loss_from_output(const DenoiserOutput& out, const Assignment& assign,
                               const Trajectory& gt, double lambda, bool deep_supervision,
                               bool use_l1, DenoiserOutputGrads* grads);

struct TrainSample {
    const Scene* scene = nullptr;
};

struct BatchResult {
    double loss = 0.0;
    std::vector<double> grad;
};

// Loss and flat parameter gradient over a batch; per-sample noise and
// timestep draws derive from mix_seed(batch_seed, index) so the result is
// independent of thread count.
BatchResult loss_and_grad(const DenoiserParams& params,
                          const std::vector<const Scene*>& batch, const AnchorSet& anchors,
                          const NoiseSchedule& sched, const TrainConfig& config,
                          uint64_t batch_seed);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double eval_pdms = -1.0;  // < 0 when no snapshot was taken
};

struct TrainResult {
    DenoiserParams params;
    std::vector<EpochStats> history;
};

// Adam (beta1 = 0.9, beta2 = 0.999, eps = 1e-8, no weight decay) over the
// dataset; deterministic given config.seed.
TrainResult train_loop(const std::vector<Scene>& dataset, const AnchorSet& anchors,
                       const NoiseSchedule& sched, const DenoiserConfig& dcfg,
                       const TrainConfig& tcfg);

// Append-only metrics table: epoch, loss, pdms snapshot.
void write_metrics(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace tdp
