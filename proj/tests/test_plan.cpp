#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tdp/plan.hpp"
#include "tdp/rng.hpp"

using namespace tdp;

namespace {

AnchorSet fan_anchors(int n) {
    AnchorSet anchors;
    for (int i = 0; i < n; ++i) {
        Trajectory t(8);
        const double lateral = (i - (n - 1) / 2.0) * 1.2;
        for (int k = 0; k < 8; ++k) {
            const double frac = (k + 1) / 8.0;
            t[std::size_t(k)] = {3.0 * 0.5 * (k + 1), lateral * frac * frac};
        }
        anchors.anchors.push_back(t);
    }
    return anchors;
}

struct Setup {
    DenoiserParams params;
    AnchorSet anchors;
    NoiseSchedule sched;
    Scene scene;
};

Setup small_setup(uint64_t seed, int n_anchor = 6) {
    Setup s{init_params(seed, DenoiserConfig{.d = 8, .coord_dim = 4, .bev_proj_dim = 4,
                                             .mlp_hidden = 8, .emb_dim = 4, .horizon = 8,
                                             .bev_channels = 5, .n_stages = 2}),
            fan_anchors(n_anchor), default_schedule(),
            generate_scene(RouteIntent::Straight, 0.4, seed)};
    return s;
}

}  // namespace

TEST_CASE("one denoising step returns the decoder's clean prediction directly") {
    Setup s = small_setup(51);
    // make offsets non-trivial so the check is meaningful
    for (const auto& block : param_layout(s.params.config))
        if (block.name.find("offset.W2") != std::string::npos)
            for (std::size_t i = 0; i < block.size(); ++i)
                s.params.flat[block.offset + i] = 0.01 * double((i % 11)) - 0.05;

    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, 6, 1, 99);
    REQUIRE(result.step_times_ms.size() == 1);

    // replay: same init, single forward at T_trunc
    const auto init = sample_anchored(s.anchors, s.sched, 6, s.sched.trunc_steps, uint64_t(99));
    std::vector<Trajectory> trajs;
    for (const auto& smp : init) trajs.push_back(smp.trajectory);
    const DenoiserOutput out = forward(s.params, trajs, s.scene, s.sched.trunc_steps);
    for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(result.candidates[k].trajectory[t].x == out.trajectories[k][t].x);
            CHECK(result.candidates[k].trajectory[t].y == out.trajectories[k][t].y);
        }
}

TEST_CASE("zero-offset decoder propagates the anchored init through DDIM") {
    Setup s = small_setup(52);  // fresh init: offset head is zero

    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, 6, 2, 7);

    // identity decoder: expected = ddim chain applied to the init itself
    const auto init = sample_anchored(s.anchors, s.sched, 6, s.sched.trunc_steps, uint64_t(7));
    const auto rungs = ddim_ladder(s.sched.trunc_steps, 2);
    for (std::size_t k = 0; k < 6; ++k) {
        Trajectory cur = init[k].trajectory;
        for (std::size_t m = 0; m + 1 < rungs.size(); ++m)
            cur = ddim_step(s.sched, cur, cur, rungs[m], rungs[m + 1], 0.0);
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(result.candidates[k].trajectory[t].x == doctest::Approx(cur[t].x).epsilon(1e-12));
            CHECK(result.candidates[k].trajectory[t].y == doctest::Approx(cur[t].y).epsilon(1e-12));
        }
        CHECK(result.candidates[k].origin_anchor == init[k].anchor_index);
    }
}

TEST_CASE("with zero noise the identity chain scales the anchors by a fixed factor") {
    // pure schedule algebra: init = sqrt(ab50) a; one 50->25 identity step
    // multiplies by c1; the terminal rung returns the prediction unchanged
    const NoiseSchedule sched = default_schedule();
    const AnchorSet anchors = fan_anchors(4);
    auto zero = []() -> Vec2 { return {0.0, 0.0}; };
    const auto init = sample_anchored(anchors, sched, 4, 50, zero);

    const double ab50 = sched.alpha_bars[50];
    const double ab25 = sched.alpha_bars[25];
    const double c1 = std::sqrt(ab25) + std::sqrt(1 - ab25) * (1 - std::sqrt(ab50)) /
                                            std::sqrt(1 - ab50);
    for (std::size_t k = 0; k < 4; ++k) {
        Trajectory cur = init[k].trajectory;
        cur = ddim_step(sched, cur, cur, 50, 25, 0.0);
        cur = ddim_step(sched, cur, cur, 25, 0, 0.0);
        const double expect = c1 * std::sqrt(ab50);
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(cur[t].x == doctest::Approx(expect * anchors.anchors[k][t].x).epsilon(1e-12));
            CHECK(cur[t].y == doctest::Approx(expect * anchors.anchors[k][t].y).epsilon(1e-12));
        }
    }
}

TEST_CASE("top-1 is the confidence argmax with ties to the lowest index") {
    Setup s = small_setup(53);
    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, 12, 2, 3);
    double best = -1.0;
    std::size_t want = 0;
    for (std::size_t k = 0; k < result.candidates.size(); ++k)
        if (result.candidates[k].confidence > best) {
            best = result.candidates[k].confidence;
            want = k;
        }
    CHECK(result.top1_index == int(want));

    // round-robin covers anchors twice at n_infer = 12 with 6 anchors
    std::vector<int> counts(6, 0);
    for (const auto& c : result.candidates) ++counts[std::size_t(c.origin_anchor)];
    for (const int c : counts) CHECK(c == 2);
}

TEST_CASE("plan is deterministic given checkpoint, seed, and scene") {
    Setup s = small_setup(54);
    const PlanResult a = plan(s.params, s.anchors, s.sched, s.scene, 8, 2, 42);
    const PlanResult b = plan(s.params, s.anchors, s.sched, s.scene, 8, 2, 42);
    REQUIRE(a.candidates.size() == b.candidates.size());
    CHECK(a.top1_index == b.top1_index);
    for (std::size_t k = 0; k < a.candidates.size(); ++k) {
        CHECK(a.candidates[k].confidence == b.candidates[k].confidence);
        for (std::size_t t = 0; t < 8; ++t)
            CHECK(a.candidates[k].trajectory[t].x == b.candidates[k].trajectory[t].x);
    }

    const PlanResult c = plan(s.params, s.anchors, s.sched, s.scene, 8, 2, 43);
    bool differs = false;
    for (std::size_t k = 0; k < a.candidates.size() && !differs; ++k)
        if (a.candidates[k].trajectory[0].x != c.candidates[k].trajectory[0].x) differs = true;
    CHECK(differs);
}

TEST_CASE("multi_mode_report: k = all preserves a stable confidence order") {
    Setup s = small_setup(55);
    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, 10, 2, 5);

    const auto all = multi_mode_report(result, 10);
    REQUIRE(all.size() == 10);
    for (std::size_t i = 1; i < all.size(); ++i) {
        CHECK(all[i].confidence <= all[i - 1].confidence);
        if (all[i].confidence == all[i - 1].confidence)
            CHECK(all[i].candidate_index > all[i - 1].candidate_index);
    }

    const auto top1 = multi_mode_report(result, 1);
    REQUIRE(top1.size() == 1);
    CHECK(top1[0].candidate_index == result.top1_index);

    const auto scored = multi_mode_report(result, 3, &s.scene);
    for (const auto& row : scored) {
        CHECK(row.has_score);
        CHECK(row.score.pdms_mini >= 0.0);
        CHECK(row.score.pdms_mini <= 1.0);
    }

    CHECK_THROWS_AS(multi_mode_report(result, 11), BoundsError);
}

TEST_CASE("extrapolated seed is the constant-velocity continuation of the ego motion") {
    Setup s = small_setup(56);
    const Trajectory extrap = extrapolate_current_status(s.scene);
    const Vec2 v = s.scene.gt_trajectory[0];
    for (std::size_t t = 0; t < 8; ++t) {
        CHECK(extrap[t].x == doctest::Approx(v.x * double(t + 1)).epsilon(1e-12));
        CHECK(extrap[t].y == doctest::Approx(v.y * double(t + 1)).epsilon(1e-12));
    }

    PlanOptions opt;
    opt.n_infer = 5;
    opt.n_steps = 2;
    opt.init = InitMode::Extrapolated;
    opt.seed = 9;
    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, opt);
    CHECK(result.candidates.size() == 5);
    for (const auto& c : result.candidates) CHECK(c.origin_anchor == -1);
}

TEST_CASE("plan validates its options") {
    Setup s = small_setup(57);
    CHECK_THROWS_AS(plan(s.params, s.anchors, s.sched, s.scene, 0, 2, 1), BoundsError);
    CHECK_THROWS_AS(plan(s.params, s.anchors, s.sched, s.scene, 4, 0, 1), BoundsError);
    PlanOptions opt;
    opt.eta = 1.5;
    CHECK_THROWS_AS(plan(s.params, s.anchors, s.sched, s.scene, opt), BoundsError);
}

TEST_CASE("plan file round trip and byte-identical rewrites") {
    Setup s = small_setup(58);
    const PlanResult result = plan(s.params, s.anchors, s.sched, s.scene, 6, 2, 77);

    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "tdp_plan_a.txt").string();
    const std::string p2 = (dir / "tdp_plan_b.txt").string();
    write_plan_file(p1, result);
    write_plan_file(p2, result);

    std::ifstream f1(p1), f2(p2);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    const PlanResult back = read_plan_file(p1);
    REQUIRE(back.candidates.size() == result.candidates.size());
    const auto ranked = multi_mode_report(result, 6);
    for (std::size_t i = 0; i < back.candidates.size(); ++i) {
        const auto& orig = result.candidates[std::size_t(ranked[i].candidate_index)];
        CHECK(back.candidates[i].confidence == orig.confidence);
        CHECK(back.candidates[i].origin_anchor == orig.origin_anchor);
        for (std::size_t t = 0; t < 8; ++t)
            CHECK(back.candidates[i].trajectory[t].x == orig.trajectory[t].x);
    }
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}
