#include <doctest.h>

#include <cmath>

#include "tdp/rng.hpp"
#include "tdp/schedule.hpp"

using namespace tdp;

namespace {

Trajectory random_traj(Rng& rng, std::size_t horizon, double scale) {
    Trajectory t(horizon);
    for (auto& w : t.waypoints) w = {scale * rng.normal(), scale * rng.normal()};
    return t;
}

double max_abs_diff(const Trajectory& a, const Trajectory& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.horizon(); ++i) {
        m = std::max(m, std::abs(a[i].x - b[i].x));
        m = std::max(m, std::abs(a[i].y - b[i].y));
    }
    return m;
}

// independent brute-force oracle: direct product over the linear beta ramp
double alpha_bar_oracle(int total_steps, double beta_start, double beta_end, int step) {
    double prod = 1.0;
    for (int s = 1; s <= step; ++s) {
        const double beta =
            total_steps > 1
                ? beta_start + (beta_end - beta_start) * (s - 1) / double(total_steps - 1)
                : beta_start;
        prod *= 1.0 - beta;
    }
    return prod;
}

}  // namespace

TEST_CASE("linear schedule: single-step product") {
    const auto sched = build_linear_schedule(1, 0.5, 0.5, 1);
    REQUIRE(sched.alpha_bars.size() == 2);
    CHECK(sched.alpha_bars[0] == 1.0);
    CHECK(sched.alpha_bars[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("linear schedule: two-step product by hand") {
    const auto sched = build_linear_schedule(2, 0.1, 0.3, 2);
    CHECK(sched.alpha_bars[0] == 1.0);
    CHECK(sched.alpha_bars[1] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(sched.alpha_bars[2] == doctest::Approx(0.63).epsilon(1e-15));
}

TEST_CASE("default schedule alpha_bar[50] matches the brute-force product") {
    const auto sched = default_schedule();
    const double oracle = alpha_bar_oracle(1000, 1e-4, 0.02, 50);
    CHECK(sched.alpha_bars[50] == doctest::Approx(oracle).epsilon(1e-14));
    // value frozen from the oracle before the implementation existed
    CHECK(sched.alpha_bars[50] == doctest::Approx(0.9710157229394405).epsilon(1e-12));
    CHECK(sched.alpha_bars[25] == doctest::Approx(0.9915581628787731).epsilon(1e-12));
}

TEST_CASE("schedule invariants: monotonicity and product identity") {
    for (const auto& sched :
         {default_schedule(), build_linear_schedule(37, 1e-3, 0.1, 10),
          build_linear_schedule(500, 2e-4, 0.04, 250)}) {
        CHECK(sched.alpha_bars.front() == 1.0);
        for (std::size_t i = 1; i < sched.alpha_bars.size(); ++i)
            CHECK(sched.alpha_bars[i] < sched.alpha_bars[i - 1]);
        for (std::size_t s = 1; s < sched.betas.size(); ++s) {
            CHECK(sched.betas[s] >= sched.betas[s - 1]);
            CHECK(sched.betas[s] > 0.0);
            CHECK(sched.betas[s] < 1.0);
        }
        for (int i = 0; i <= sched.total_steps; ++i) {
            const double direct =
                alpha_bar_oracle(sched.total_steps, sched.beta_start, sched.beta_end, i);
            CHECK(std::abs(sched.alpha_bars[std::size_t(i)] - direct) < 1e-12);
        }
    }
}

TEST_CASE("schedule rejects out-of-range parameters") {
    CHECK_THROWS_AS(build_linear_schedule(0, 1e-4, 0.02, 1), BoundsError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02, 5), BoundsError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.03, 0.02, 5), BoundsError);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 1.0, 5), BoundsError);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 0.02, 0), BoundsError);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 0.02, 11), BoundsError);
}

TEST_CASE("diffuse: identity at step 0 and pure scaling with zero noise") {
    const auto sched = default_schedule();
    Rng rng(7);
    const Trajectory clean = random_traj(rng, 8, 5.0);
    const Trajectory zero(8);

    const Trajectory same = diffuse(sched, clean, 0, zero);
    CHECK(max_abs_diff(same, clean) == 0.0);

    const Trajectory scaled = diffuse(sched, clean, 50, zero);
    const double expect_scale = std::sqrt(sched.alpha_bars[50]);
    for (std::size_t t = 0; t < clean.horizon(); ++t) {
        CHECK(scaled[t].x == clean[t].x * expect_scale);
        CHECK(scaled[t].y == clean[t].y * expect_scale);
    }
}

TEST_CASE("diffuse matches the one-line formula on the unit square path") {
    const auto sched = default_schedule();
    const Trajectory clean{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    Rng rng(42);
    const Trajectory eps = random_traj(rng, 4, 1.0);
    const Trajectory got = diffuse(sched, clean, 50, eps);
    const double ab = alpha_bar_oracle(1000, 1e-4, 0.02, 50);
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(got[t].x ==
              doctest::Approx(std::sqrt(ab) * clean[t].x + std::sqrt(1 - ab) * eps[t].x)
                  .epsilon(1e-14));
        CHECK(got[t].y ==
              doctest::Approx(std::sqrt(ab) * clean[t].y + std::sqrt(1 - ab) * eps[t].y)
                  .epsilon(1e-14));
    }
}

TEST_CASE("diffuse rejects out-of-range steps and shape mismatches") {
    const auto sched = default_schedule();
    const Trajectory clean(8), noise(8), short_noise(4);
    CHECK_THROWS_AS(diffuse(sched, clean, -1, noise), BoundsError);
    CHECK_THROWS_AS(diffuse(sched, clean, 1001, noise), BoundsError);
    CHECK_THROWS_AS(diffuse(sched, clean, 10, short_noise), ShapeError);
}

TEST_CASE("ddim_step: terminal rung returns the prediction exactly") {
    const auto sched = default_schedule();
    Rng rng(3);
    const Trajectory pred = random_traj(rng, 8, 4.0);
    const Trajectory cur = random_traj(rng, 8, 4.0);
    for (const double eta : {0.0, 0.5, 1.0}) {
        const Trajectory out = ddim_step(sched, cur, pred, 50, 0, eta);
        CHECK(max_abs_diff(out, pred) == 0.0);
    }
}

TEST_CASE("ddim_step sequencing and input errors") {
    const auto sched = default_schedule();
    const Trajectory a(8), b(8);
    CHECK_THROWS_AS(ddim_step(sched, a, b, 0, 0, 0.0), SequencingError);
    CHECK_THROWS_AS(ddim_step(sched, a, b, 10, 10, 0.0), SequencingError);
    CHECK_THROWS_AS(ddim_step(sched, a, b, 10, 20, 0.0), SequencingError);
    CHECK_THROWS_AS(ddim_step(sched, a, b, 10, 5, 1.5), BoundsError);
    CHECK_THROWS_AS(ddim_step(sched, a, b, 10, 5, 0.5), MissingInputError);
}

// deterministic DDIM is consistent with the forward marginal:
// ddim(diffuse(c, i, e), c, i -> j) == diffuse(c, j, e)
TEST_CASE("ddim_step marginal consistency on 100 random tuples") {
    const auto sched = default_schedule();
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const Trajectory clean = random_traj(rng, 8, 8.0);
        const Trajectory eps = random_traj(rng, 8, 1.0);
        const int i = int(rng.uniform_int(2, sched.total_steps));
        const int j = int(rng.uniform_int(1, int64_t(i) - 1));
        const Trajectory noisy = diffuse(sched, clean, i, eps);
        const Trajectory stepped = ddim_step(sched, noisy, clean, i, j, 0.0);
        const Trajectory expect = diffuse(sched, clean, j, eps);
        CHECK(max_abs_diff(stepped, expect) < 1e-9);
    }
}

TEST_CASE("ddim chain i -> j -> 0 with perfect prediction reproduces it") {
    const auto sched = default_schedule();
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const Trajectory clean = random_traj(rng, 8, 8.0);
        const Trajectory eps = random_traj(rng, 8, 1.0);
        const int i = int(rng.uniform_int(2, 50));
        const int j = int(rng.uniform_int(1, int64_t(i) - 1));
        Trajectory cur = diffuse(sched, clean, i, eps);
        cur = ddim_step(sched, cur, clean, i, j, 0.0);
        cur = ddim_step(sched, cur, clean, j, 0, 0.0);
        CHECK(max_abs_diff(cur, clean) < 1e-9);
    }
}

TEST_CASE("stochastic ddim_step matches the update formula at i=50, j=25") {
    const auto sched = default_schedule();
    Rng rng(5);
    const Trajectory cur = random_traj(rng, 8, 3.0);
    const Trajectory pred = random_traj(rng, 8, 3.0);
    const Trajectory z = random_traj(rng, 8, 1.0);
    const Trajectory got = ddim_step(sched, cur, pred, 50, 25, 1.0, &z);

    const double ab_i = alpha_bar_oracle(1000, 1e-4, 0.02, 50);
    const double ab_j = alpha_bar_oracle(1000, 1e-4, 0.02, 25);
    const double sigma = std::sqrt((1 - ab_j) / (1 - ab_i)) * std::sqrt(1 - ab_i / ab_j);
    const double dir = std::sqrt(1 - ab_j - sigma * sigma);
    for (std::size_t t = 0; t < 8; ++t) {
        const double ex = (cur[t].x - std::sqrt(ab_i) * pred[t].x) / std::sqrt(1 - ab_i);
        const double ey = (cur[t].y - std::sqrt(ab_i) * pred[t].y) / std::sqrt(1 - ab_i);
        CHECK(got[t].x ==
              doctest::Approx(std::sqrt(ab_j) * pred[t].x + dir * ex + sigma * z[t].x)
                  .epsilon(1e-12));
        CHECK(got[t].y ==
              doctest::Approx(std::sqrt(ab_j) * pred[t].y + dir * ey + sigma * z[t].y)
                  .epsilon(1e-12));
    }
}

TEST_CASE("ddim ladder placement") {
    CHECK(ddim_ladder(50, 2) == std::vector<int>{50, 25, 0});
    CHECK(ddim_ladder(50, 1) == std::vector<int>{50, 0});
    CHECK(ddim_ladder(1000, 20).size() == 21);
    for (const int n : {1, 2, 3, 5, 20}) {
        const auto rungs = ddim_ladder(50, n);
        CHECK(rungs.front() == 50);
        CHECK(rungs.back() == 0);
        for (std::size_t i = 1; i < rungs.size(); ++i) CHECK(rungs[i] < rungs[i - 1]);
    }
}
