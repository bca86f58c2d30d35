#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdp/schedule.hpp"
#include "tdp/types.hpp"

namespace tdp {

// Cluster-center trajectories; the centers of the anchored Gaussian mixture
// that seeds the truncated denoising chain.
struct AnchorSet {
    std::vector<Trajectory> anchors;

    int n_anchor() const { return static_cast<int>(anchors.size()); }
    std::size_t horizon() const { return anchors.empty() ? 0 : anchors.front().horizon(); }
};

// Lloyd's algorithm over trajectories flattened to 2*T_f vectors, Euclidean
// metric, k-means++ seeding. Terminates on an assignment fixpoint or after
// max_iters sweeps. Empty clusters are re-seeded to the member farthest from
// its assigned center.
AnchorSet kmeans_cluster(const std::vector<Trajectory>& demos, int k, int max_iters,
                         uint64_t seed);

struct AnchoredSample {
    Trajectory trajectory;
    int anchor_index = 0;
};

// Draw n_infer noisy trajectories from the anchored Gaussian at schedule step
// `step`. Anchors are assigned round-robin: sample m originates from anchor
// m mod N_anchor. The noise_draw overload exists so tests can pin epsilon.
std::vector<AnchoredSample> sample_anchored(const AnchorSet& anchors, const NoiseSchedule& sched,
                                            int n_infer, int step, uint64_t seed);
std::vector<AnchoredSample> sample_anchored(const AnchorSet& anchors, const NoiseSchedule& sched,
                                            int n_infer, int step,
                                            const std::function<Vec2()>& noise_draw);

// Plain-text anchor table: one record per line, index followed by (x, y)
// pairs, full double precision.
void write_anchor_file(const std::string& path, const AnchorSet& anchors);
AnchorSet read_anchor_file(const std::string& path);

// Sum of squared distances to assigned centers; exposed for the objective
// monotonicity property.
double kmeans_objective(const std::vector<Trajectory>& demos, const AnchorSet& centers);

}  // namespace tdp
