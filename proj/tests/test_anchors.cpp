#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tdp/anchors.hpp"
#include "tdp/rng.hpp"
#include "tdp/schedule.hpp"

using namespace tdp;

namespace {

Trajectory straight_demo(double vx, double y) {
    Trajectory t(8);
    for (int k = 0; k < 8; ++k) t[std::size_t(k)] = {vx * 0.5 * (k + 1), y};
    return t;
}

double sq_dist(const Trajectory& a, const Trajectory& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.horizon(); ++i) {
        const Vec2 d = a[i] - b[i];
        acc += d.dot(d);
    }
    return acc;
}

// exhaustive assignment enumeration: optimal k-means centers on a tiny set
struct BruteForceResult {
    std::vector<Trajectory> centers;
    double objective;
};

BruteForceResult kmeans_brute_force(const std::vector<Trajectory>& demos, int k) {
    const std::size_t n = demos.size();
    const std::size_t horizon = demos.front().horizon();
    std::vector<int> assign(n, 0);
    BruteForceResult best;
    best.objective = std::numeric_limits<double>::infinity();

    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= std::size_t(k);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = int(c % std::size_t(k));
            c /= std::size_t(k);
        }
        std::vector<Trajectory> centers(static_cast<std::size_t>(k), Trajectory(horizon));
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t t = 0; t < horizon; ++t) centers[std::size_t(assign[i])][t] += demos[i][t];
            ++counts[std::size_t(assign[i])];
        }
        bool empty = false;
        for (int cc = 0; cc < k; ++cc) {
            if (counts[std::size_t(cc)] == 0) {
                empty = true;
                break;
            }
            for (std::size_t t = 0; t < horizon; ++t)
                centers[std::size_t(cc)][t] = centers[std::size_t(cc)][t] * (1.0 / counts[std::size_t(cc)]);
        }
        if (empty) continue;
        double obj = 0;
        for (std::size_t i = 0; i < n; ++i) obj += sq_dist(demos[i], centers[std::size_t(assign[i])]);
        if (obj < best.objective) {
            best.objective = obj;
            best.centers = centers;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("kmeans with k distinct demos returns them exactly") {
    std::vector<Trajectory> demos = {straight_demo(2, 0), straight_demo(4, 1),
                                     straight_demo(6, -2)};
    const AnchorSet anchors = kmeans_cluster(demos, 3, 50, 1);
    REQUIRE(anchors.n_anchor() == 3);
    for (const auto& d : demos) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : anchors.anchors) best = std::min(best, sq_dist(d, a));
        CHECK(best < 1e-20);
    }
}

TEST_CASE("kmeans recovers well-separated bundle means (brute-force oracle)") {
    Rng rng(11);
    std::vector<Trajectory> demos;
    // three bundles: straight, veering left, veering right
    for (int b = 0; b < 3; ++b) {
        const double lateral = b == 0 ? 0.0 : (b == 1 ? 8.0 : -8.0);
        for (int i = 0; i < 4; ++i) {
            Trajectory t(8);
            for (int k = 0; k < 8; ++k) {
                const double frac = (k + 1) / 8.0;
                t[std::size_t(k)] = {3.0 * (k + 1) * 0.5 + 0.05 * rng.normal(),
                                     lateral * frac * frac + 0.05 * rng.normal()};
            }
            demos.push_back(t);
        }
    }

    const BruteForceResult oracle = kmeans_brute_force(demos, 3);
    const AnchorSet anchors = kmeans_cluster(demos, 3, 100, 5);

    // match each oracle center to the nearest recovered anchor
    for (const auto& c : oracle.centers) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : anchors.anchors) best = std::min(best, sq_dist(c, a));
        CHECK(std::sqrt(best) < 1e-6);
    }
    CHECK(kmeans_objective(demos, anchors) == doctest::Approx(oracle.objective).epsilon(1e-9));
}

TEST_CASE("kmeans with identical demos and k=2 terminates, one anchor equals the demo") {
    std::vector<Trajectory> demos(5, straight_demo(3, 0));
    const AnchorSet anchors = kmeans_cluster(demos, 2, 50, 9);
    REQUIRE(anchors.n_anchor() == 2);
    bool found = false;
    for (const auto& a : anchors.anchors)
        if (sq_dist(a, demos[0]) < 1e-20) found = true;
    CHECK(found);
}

TEST_CASE("kmeans objective is non-increasing across iteration budgets") {
    Rng rng(17);
    std::vector<Trajectory> demos;
    for (int i = 0; i < 40; ++i) {
        Trajectory t(8);
        for (auto& w : t.waypoints) w = {rng.uniform(0, 20), rng.uniform(-5, 5)};
        demos.push_back(t);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (const int iters : {1, 2, 3, 5, 8, 13, 40}) {
        const double obj = kmeans_objective(demos, kmeans_cluster(demos, 5, iters, 123));
        CHECK(obj <= prev + 1e-9);
        prev = obj;
    }
}

TEST_CASE("kmeans cardinality and shape errors") {
    std::vector<Trajectory> demos = {straight_demo(2, 0), straight_demo(4, 0)};
    CHECK_THROWS_AS(kmeans_cluster(demos, 3, 10, 0), CardinalityError);
    CHECK_THROWS_AS(kmeans_cluster(demos, 0, 10, 0), CardinalityError);
    demos.push_back(Trajectory(4));
    CHECK_THROWS_AS(kmeans_cluster(demos, 2, 10, 0), ShapeError);
}

TEST_CASE("sample_anchored: zero noise scales anchors, round-robin covers them") {
    const auto sched = default_schedule();
    AnchorSet anchors;
    for (int i = 0; i < 20; ++i) anchors.anchors.push_back(straight_demo(2 + 0.2 * i, i - 10));

    auto zero_noise = []() -> Vec2 { return {0.0, 0.0}; };
    const auto samples = sample_anchored(anchors, sched, 20, 50, zero_noise);
    REQUIRE(samples.size() == 20);
    const double s = std::sqrt(sched.alpha_bars[50]);
    for (int m = 0; m < 20; ++m) {
        CHECK(samples[std::size_t(m)].anchor_index == m);
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(samples[std::size_t(m)].trajectory[t].x ==
                  doctest::Approx(s * anchors.anchors[std::size_t(m)][t].x).epsilon(1e-14));
            CHECK(samples[std::size_t(m)].trajectory[t].y ==
                  doctest::Approx(s * anchors.anchors[std::size_t(m)][t].y).epsilon(1e-14));
        }
    }

    const auto forty = sample_anchored(anchors, sched, 40, 50, uint64_t(3));
    std::vector<int> counts(20, 0);
    for (const auto& smp : forty) ++counts[std::size_t(smp.anchor_index)];
    for (const int c : counts) CHECK(c == 2);
}

TEST_CASE("sample_anchored rejects steps beyond the truncation index") {
    const auto sched = default_schedule(50);
    AnchorSet anchors;
    anchors.anchors.push_back(straight_demo(3, 0));
    CHECK_THROWS_AS(sample_anchored(anchors, sched, 1, 51, uint64_t(0)), TruncationError);
    CHECK_NOTHROW(sample_anchored(anchors, sched, 1, 50, uint64_t(0)));
}

TEST_CASE("sample_anchored is bit-identical for equal seeds") {
    const auto sched = default_schedule();
    AnchorSet anchors;
    for (int i = 0; i < 3; ++i) anchors.anchors.push_back(straight_demo(2 + i, 0));
    const auto a = sample_anchored(anchors, sched, 7, 50, uint64_t(77));
    const auto b = sample_anchored(anchors, sched, 7, 50, uint64_t(77));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(a[i].trajectory[t].x == b[i].trajectory[t].x);
            CHECK(a[i].trajectory[t].y == b[i].trajectory[t].y);
        }
}

// Monte-Carlo oracle: the anchored Gaussian has mean sqrt(abar^i) a_k and
// per-coordinate variance 1 - abar^i.
TEST_CASE("sample_anchored statistics at step 50 over 10k draws") {
    const auto sched = default_schedule();
    AnchorSet anchors;
    anchors.anchors.push_back(straight_demo(4, 1.5));
    const int n = 10000;
    const auto samples = sample_anchored(anchors, sched, n, 50, uint64_t(102));

    const double ab = sched.alpha_bars[50];
    const double want_var = 1.0 - ab;
    const double se_mean = std::sqrt(want_var / n);

    for (std::size_t t = 0; t < 8; ++t) {
        double mean_x = 0, mean_y = 0;
        for (const auto& smp : samples) {
            mean_x += smp.trajectory[t].x;
            mean_y += smp.trajectory[t].y;
        }
        mean_x /= n;
        mean_y /= n;
        CHECK(std::abs(mean_x - std::sqrt(ab) * anchors.anchors[0][t].x) < 3 * se_mean);
        CHECK(std::abs(mean_y - std::sqrt(ab) * anchors.anchors[0][t].y) < 3 * se_mean);

        double var_x = 0, var_y = 0;
        for (const auto& smp : samples) {
            var_x += (smp.trajectory[t].x - mean_x) * (smp.trajectory[t].x - mean_x);
            var_y += (smp.trajectory[t].y - mean_y) * (smp.trajectory[t].y - mean_y);
        }
        var_x /= n - 1;
        var_y /= n - 1;
        CHECK(var_x == doctest::Approx(want_var).epsilon(0.05));
        CHECK(var_y == doctest::Approx(want_var).epsilon(0.05));
    }
}

TEST_CASE("anchor file round trip") {
    AnchorSet anchors;
    Rng rng(31);
    for (int i = 0; i < 6; ++i) {
        Trajectory t(8);
        for (auto& w : t.waypoints) w = {rng.normal() * 10, rng.normal() * 3};
        anchors.anchors.push_back(t);
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "tdp_anchor_test.txt").string();
    write_anchor_file(path, anchors);
    const AnchorSet back = read_anchor_file(path);
    REQUIRE(back.n_anchor() == anchors.n_anchor());
    for (int i = 0; i < anchors.n_anchor(); ++i)
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(back.anchors[std::size_t(i)][t].x == anchors.anchors[std::size_t(i)][t].x);
            CHECK(back.anchors[std::size_t(i)][t].y == anchors.anchors[std::size_t(i)][t].y);
        }
    std::filesystem::remove(path);
}
