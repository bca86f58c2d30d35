#include "tdp/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "tdp/rng.hpp"

namespace tdp {

namespace {

double sq_dist(const Trajectory& a, const Trajectory& b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < a.horizon(); ++t) {
        const double dx = a[t].x - b[t].x;
        const double dy = a[t].y - b[t].y;
        acc += dx * dx + dy * dy;
    }
    return acc;
}

void check_demo_shapes(const std::vector<Trajectory>& demos) {
    const std::size_t horizon = demos.front().horizon();
    for (std::size_t i = 1; i < demos.size(); ++i)
        if (demos[i].horizon() != horizon)
            throw ShapeError("demo " + std::to_string(i) + " has " +
                             std::to_string(demos[i].horizon()) + " waypoints, expected " +
                             std::to_string(horizon));
}

// k-means++: first center uniform, then distance-squared weighted picks.
std::vector<Trajectory> seed_centers(const std::vector<Trajectory>& demos, int k, Rng& rng) {
    std::vector<Trajectory> centers;
    centers.reserve(static_cast<std::size_t>(k));
    centers.push_back(demos[rng.uniform_index(demos.size())]);

    std::vector<double> best(demos.size());
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < demos.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) d = std::min(d, sq_dist(demos[i], c));
            best[i] = d;
            total += d;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = demos.size() - 1;
            for (std::size_t i = 0; i < demos.size(); ++i) {
                acc += best[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all points coincide with existing centers; any pick works
            pick = rng.uniform_index(demos.size());
        }
        centers.push_back(demos[pick]);
    }
    return centers;
}

}  // namespace

AnchorSet kmeans_cluster(const std::vector<Trajectory>& demos, int k, int max_iters,
                         uint64_t seed) {
    if (k < 1) throw CardinalityError("k must be >= 1");
    if (static_cast<int>(demos.size()) < k)
        throw CardinalityError("need at least k=" + std::to_string(k) + " demos, got " +
                               std::to_string(demos.size()));
    check_demo_shapes(demos);
    const std::size_t horizon = demos.front().horizon();

    Rng rng(seed);
    std::vector<Trajectory> centers = seed_centers(demos, k, rng);
    std::vector<int> assign(demos.size(), -1);

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < demos.size(); ++i) {
            int best_c = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = sq_dist(demos[i], centers[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best_c = c;
                }
            }
            if (assign[i] != best_c) {
                assign[i] = best_c;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<Trajectory> sums(static_cast<std::size_t>(k), Trajectory(horizon));
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < demos.size(); ++i) {
            const auto c = static_cast<std::size_t>(assign[i]);
            for (std::size_t t = 0; t < horizon; ++t) sums[c][t] += demos[i][t];
            ++counts[c];
        }
        for (int c = 0; c < k; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            if (counts[cu] == 0) {
                // re-seed to the member farthest from its assigned center
                double far_d = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < demos.size(); ++i) {
                    const double d =
                        sq_dist(demos[i], centers[static_cast<std::size_t>(assign[i])]);
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                centers[cu] = demos[far_i];
                assign[far_i] = c;
            } else {
                for (std::size_t t = 0; t < horizon; ++t)
                    centers[cu][t] = sums[cu][t] * (1.0 / counts[cu]);
            }
        }
    }

    AnchorSet out;
    out.anchors = std::move(centers);
    return out;
}

double kmeans_objective(const std::vector<Trajectory>& demos, const AnchorSet& centers) {
    double total = 0.0;
    for (const auto& d : demos) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers.anchors) best = std::min(best, sq_dist(d, c));
        total += best;
    }
    return total;
}

std::vector<AnchoredSample> sample_anchored(const AnchorSet& anchors, const NoiseSchedule& sched,
                                            int n_infer, int step,
                                            const std::function<Vec2()>& noise_draw) {
    if (anchors.n_anchor() < 1) throw CardinalityError("anchor set is empty");
    if (n_infer < 1) throw BoundsError("n_infer must be >= 1");
    if (step < 0) throw BoundsError("sample step must be >= 0");
    if (step > sched.trunc_steps)
        throw TruncationError("step " + std::to_string(step) +
                              " exceeds trunc_steps=" + std::to_string(sched.trunc_steps));

    const std::size_t horizon = anchors.horizon();
    std::vector<AnchoredSample> out;
    out.reserve(static_cast<std::size_t>(n_infer));
    for (int m = 0; m < n_infer; ++m) {
        const int a = m % anchors.n_anchor();
        Trajectory eps(horizon);
        for (std::size_t t = 0; t < horizon; ++t) eps[t] = noise_draw();
        out.push_back({diffuse(sched, anchors.anchors[static_cast<std::size_t>(a)], step, eps), a});
    }
    return out;
}

std::vector<AnchoredSample> sample_anchored(const AnchorSet& anchors, const NoiseSchedule& sched,
                                            int n_infer, int step, uint64_t seed) {
    Rng rng(seed);
    return sample_anchored(anchors, sched, n_infer, step,
                           [&rng]() -> Vec2 { return {rng.normal(), rng.normal()}; });
}

void write_anchor_file(const std::string& path, const AnchorSet& anchors) {
    const std::string tmp = path + ".tmp";
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot open anchor file for writing: " + path);
    os << "# tdp-anchors v1 n=" << anchors.n_anchor() << " horizon=" << anchors.horizon() << "\n";
    char buf[32];
    for (int a = 0; a < anchors.n_anchor(); ++a) {
        os << a;
        for (const auto& w : anchors.anchors[static_cast<std::size_t>(a)].waypoints) {
            std::snprintf(buf, sizeof(buf), " %.17g", w.x);
            os << buf;
            std::snprintf(buf, sizeof(buf), " %.17g", w.y);
            os << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
    os.close();
    std::filesystem::rename(tmp, path);
}

AnchorSet read_anchor_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open anchor file: " + path);
    std::string header;
    std::getline(is, header);
    if (header.rfind("# tdp-anchors v1", 0) != 0)
        throw ParseError("anchor file header not recognized: " + path);

    AnchorSet out;
    std::string line;
    std::size_t record = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int index = 0;
        if (!(ls >> index))
            throw ParseError("anchor record " + std::to_string(record) + ": bad index");
        Trajectory traj;
        double x, y;
        while (ls >> x >> y) traj.waypoints.push_back({x, y});
        if (traj.horizon() < 2)
            throw ParseError("anchor record " + std::to_string(record) + ": too few waypoints");
        if (!out.anchors.empty() && traj.horizon() != out.horizon())
            throw ParseError("anchor record " + std::to_string(record) + ": horizon mismatch");
        out.anchors.push_back(std::move(traj));
        ++record;
    }
    if (out.anchors.empty()) throw ParseError("anchor file has no records: " + path);
    return out;
}

}  // namespace tdp
