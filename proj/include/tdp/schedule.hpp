#pragma once

#include <optional>
#include <vector>

#include "tdp/types.hpp"

namespace tdp {

// Variance schedule for the forward diffusion process plus the truncation
// index that bounds both training noise levels and the inference ladder.
//
// betas[s-1] holds beta^s for s = 1..T. alpha_bars[i] holds the cumulative
// product prod_{s=1..i} (1 - beta^s), with alpha_bars[0] = 1.
struct NoiseSchedule {
    int total_steps = 0;   // T
    int trunc_steps = 0;   // T_trunc
    double beta_start = 0; // kept for checkpoint round-trips
    double beta_end = 0;
    std::vector<double> betas;       // size T
    std::vector<double> alpha_bars;  // size T+1

    double alpha_bar(int step) const {
        if (step < 0 || step > total_steps)
            throw BoundsError("schedule step " + std::to_string(step) + " outside [0, " +
                              std::to_string(total_steps) + "]");
        return alpha_bars[static_cast<std::size_t>(step)];
    }
};

// Linear beta ramp from beta_start to beta_end inclusive.
NoiseSchedule build_linear_schedule(int total_steps, double beta_start, double beta_end,
                                    int trunc_steps);

inline NoiseSchedule default_schedule(int trunc_steps = 50) {
    return build_linear_schedule(1000, 1e-4, 0.02, trunc_steps);
}

// Forward diffusion: sqrt(abar^i) * clean + sqrt(1 - abar^i) * noise.
// step == 0 is the identity and ignores the noise argument.
Trajectory diffuse(const NoiseSchedule& sched, const Trajectory& clean, int step,
                   const Trajectory& noise);

// One DDIM update from step_from to step_to given the model's clean-sample
// prediction. eta == 0 is the deterministic update; step_to == 0 returns the
// prediction exactly. noise is required only when eta > 0 and step_to > 0.
Trajectory ddim_step(const NoiseSchedule& sched, const Trajectory& current,
                     const Trajectory& predicted_clean, int step_from, int step_to, double eta,
                     const Trajectory* noise = nullptr);

// Descending inference ladder: n_steps evenly spaced rungs from start down to
// 0, e.g. n_steps=2 with start=50 gives {50, 25, 0}.
std::vector<int> ddim_ladder(int start, int n_steps);

}  // namespace tdp
