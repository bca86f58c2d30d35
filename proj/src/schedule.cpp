#include "tdp/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace tdp {

NoiseSchedule build_linear_schedule(int total_steps, double beta_start, double beta_end,
                                    int trunc_steps) {
    if (total_steps < 1)
        throw BoundsError("total_steps must be >= 1, got " + std::to_string(total_steps));
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw BoundsError("beta range must satisfy 0 < beta_start <= beta_end < 1");
    if (trunc_steps < 1 || trunc_steps > total_steps)
        throw BoundsError("trunc_steps must lie in [1, total_steps], got " +
                          std::to_string(trunc_steps));

    NoiseSchedule sched;
    sched.total_steps = total_steps;
    sched.trunc_steps = trunc_steps;
    sched.beta_start = beta_start;
    sched.beta_end = beta_end;
    sched.betas.resize(static_cast<std::size_t>(total_steps));
    sched.alpha_bars.resize(static_cast<std::size_t>(total_steps) + 1);
    sched.alpha_bars[0] = 1.0;

    const double span = (total_steps > 1)
                            ? (beta_end - beta_start) / static_cast<double>(total_steps - 1)
                            : 0.0;
    double prod = 1.0;
    for (int s = 1; s <= total_steps; ++s) {
        const double beta = beta_start + span * static_cast<double>(s - 1);
        sched.betas[static_cast<std::size_t>(s - 1)] = beta;
        prod *= (1.0 - beta);
        sched.alpha_bars[static_cast<std::size_t>(s)] = prod;
    }
    return sched;
}

namespace {

void require_same_shape(const Trajectory& a, const Trajectory& b, const char* what) {
    if (a.horizon() != b.horizon())
        throw ShapeError(std::string(what) + ": waypoint counts differ (" +
                         std::to_string(a.horizon()) + " vs " + std::to_string(b.horizon()) + ")");
}

}  // namespace

Trajectory diffuse(const NoiseSchedule& sched, const Trajectory& clean, int step,
                   const Trajectory& noise) {
    if (step == 0) return clean;  // abar^0 == 1, identity path
    if (step < 1 || step > sched.total_steps)
        throw BoundsError("diffuse step " + std::to_string(step) + " outside [1, " +
                          std::to_string(sched.total_steps) + "]");
    require_same_shape(clean, noise, "diffuse");

    const double ab = sched.alpha_bars[static_cast<std::size_t>(step)];
    const double scale_clean = std::sqrt(ab);
    const double scale_noise = std::sqrt(1.0 - ab);

    Trajectory out(clean.horizon());
    for (std::size_t t = 0; t < clean.horizon(); ++t)
        out[t] = scale_clean * clean[t] + scale_noise * noise[t];
    return out;
}

Trajectory ddim_step(const NoiseSchedule& sched, const Trajectory& current,
                     const Trajectory& predicted_clean, int step_from, int step_to, double eta,
                     const Trajectory* noise) {
    if (step_from < 1 || step_from > sched.total_steps || step_to >= step_from || step_to < 0)
        throw SequencingError("ddim_step requires 0 <= step_to < step_from <= T, got " +
                              std::to_string(step_from) + " -> " + std::to_string(step_to));
    if (eta < 0.0 || eta > 1.0) throw BoundsError("eta must lie in [0, 1]");
    require_same_shape(current, predicted_clean, "ddim_step");

    if (step_to == 0) return predicted_clean;  // terminal rung

    const bool stochastic = eta > 0.0;
    if (stochastic && noise == nullptr)
        throw MissingInputError("ddim_step: eta > 0 requires a noise draw");
    if (stochastic) require_same_shape(current, *noise, "ddim_step noise");

    const double ab_i = sched.alpha_bars[static_cast<std::size_t>(step_from)];
    const double ab_j = sched.alpha_bars[static_cast<std::size_t>(step_to)];
    const double sigma =
        eta * std::sqrt((1.0 - ab_j) / (1.0 - ab_i)) * std::sqrt(1.0 - ab_i / ab_j);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_j - sigma * sigma));
    const double sqrt_ab_i = std::sqrt(ab_i);
    const double sqrt_ab_j = std::sqrt(ab_j);
    const double inv_sqrt_one_minus_ab_i = 1.0 / std::sqrt(1.0 - ab_i);

    Trajectory out(current.horizon());
    for (std::size_t t = 0; t < current.horizon(); ++t) {
        const Vec2 implied_noise =
            (current[t] - sqrt_ab_i * predicted_clean[t]) * inv_sqrt_one_minus_ab_i;
        Vec2 next = sqrt_ab_j * predicted_clean[t] + dir * implied_noise;
        if (stochastic) next += sigma * (*noise)[t];
        out[t] = next;
    }
    return out;
}

std::vector<int> ddim_ladder(int start, int n_steps) {
    if (start < 1) throw BoundsError("ladder start must be >= 1");
    if (n_steps < 1) throw BoundsError("ladder needs n_steps >= 1");
    std::vector<int> rungs;
    rungs.reserve(static_cast<std::size_t>(n_steps) + 1);
    for (int m = 0; m <= n_steps; ++m) {
        const double frac = static_cast<double>(n_steps - m) / static_cast<double>(n_steps);
        int rung = static_cast<int>(std::lround(frac * start));
        if (!rungs.empty() && rung >= rungs.back()) rung = rungs.back() - 1;
        rungs.push_back(std::max(rung, 0));
    }
    rungs.front() = start;
    rungs.back() = 0;
    return rungs;
}

}  // namespace tdp
