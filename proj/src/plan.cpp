#include "tdp/plan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tdp/rng.hpp"

namespace tdp {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

Trajectory extrapolate_current_status(const Scene& scene) {
    if (scene.gt_trajectory.horizon() < 1)
        throw ShapeError("scene has no demonstration to derive ego status from");
    const Vec2 step = scene.gt_trajectory[0];  // displacement over the first 0.5 s
    Trajectory out(scene.gt_trajectory.horizon());
    for (std::size_t t = 0; t < out.horizon(); ++t)
        out[t] = step * static_cast<double>(t + 1);
    return out;
}

PlanResult plan(const DenoiserParams& params, const AnchorSet& anchors,
                const NoiseSchedule& sched, const Scene& scene, const PlanOptions& options) {
    if (options.n_infer < 1) throw BoundsError("n_infer must be >= 1");
    if (options.n_steps < 1) throw BoundsError("n_steps must be >= 1");
    if (options.eta < 0.0 || options.eta > 1.0) throw BoundsError("eta must lie in [0, 1]");

    const int horizon = params.config.horizon;
    Rng rng(mix_seed(options.seed, 0x9A715));  // eta > 0 noise stream

    PlanResult result;

    // ----- initialization -----
    std::vector<Trajectory> current;
    std::vector<int> origins;
    int ladder_start = sched.trunc_steps;

    switch (options.init) {
        case InitMode::Anchored: {
            const auto samples =
                sample_anchored(anchors, sched, options.n_infer, sched.trunc_steps, options.seed);
            for (const auto& s : samples) {
                current.push_back(s.trajectory);
                origins.push_back(s.anchor_index);
            }
            break;
        }
        case InitMode::PureNoise: {
            ladder_start = sched.total_steps;
            Rng noise_rng(mix_seed(options.seed, 0x90153));
            for (int k = 0; k < options.n_infer; ++k) {
                Trajectory t(static_cast<std::size_t>(horizon));
                for (auto& w : t.waypoints) w = {noise_rng.normal(), noise_rng.normal()};
                current.push_back(std::move(t));
                origins.push_back(-1);
            }
            break;
        }
        case InitMode::Extrapolated: {
            const Trajectory seed_traj = extrapolate_current_status(scene);
            Rng noise_rng(mix_seed(options.seed, 0xE87A4));
            for (int k = 0; k < options.n_infer; ++k) {
                Trajectory eps(static_cast<std::size_t>(horizon));
                for (auto& w : eps.waypoints) w = {noise_rng.normal(), noise_rng.normal()};
                current.push_back(diffuse(sched, seed_traj, sched.trunc_steps, eps));
                origins.push_back(-1);
            }
            break;
        }
        case InitMode::CleanAnchors: {
            if (anchors.n_anchor() < 1) throw CardinalityError("anchor set is empty");
            for (int k = 0; k < options.n_infer; ++k) {
                const int a = k % anchors.n_anchor();
                current.push_back(anchors.anchors[static_cast<std::size_t>(a)]);
                origins.push_back(a);
            }
            break;
        }
    }

    // ----- denoising chain -----
    std::vector<double> final_logits;
    if (options.init == InitMode::CleanAnchors) {
        const double t0 = now_ms();
        const DenoiserOutput out = forward(params, current, scene, 0);
        result.step_times_ms.push_back(now_ms() - t0);
        final_logits = out.logits;
        if (!options.vocab_score_only) current = out.trajectories;
    } else {
        const std::vector<int> rungs = ddim_ladder(ladder_start, options.n_steps);
        for (int m = 0; m < options.n_steps; ++m) {
            const double t0 = now_ms();
            DenoiserOutput out;
            try {
                out = forward(params, current, scene, rungs[static_cast<std::size_t>(m)]);
            } catch (const NumericError& e) {
                throw NumericError("denoising step " + std::to_string(m) + ": " + e.what());
            }
            for (std::size_t k = 0; k < current.size(); ++k) {
                Trajectory noise;
                const Trajectory* noise_ptr = nullptr;
                if (options.eta > 0.0 && rungs[static_cast<std::size_t>(m) + 1] > 0) {
                    noise = Trajectory(static_cast<std::size_t>(horizon));
                    for (auto& w : noise.waypoints) w = {rng.normal(), rng.normal()};
                    noise_ptr = &noise;
                }
                current[k] = ddim_step(sched, current[k], out.trajectories[k],
                                       rungs[static_cast<std::size_t>(m)],
                                       rungs[static_cast<std::size_t>(m) + 1], options.eta,
                                       noise_ptr);
            }
            result.step_times_ms.push_back(now_ms() - t0);
            if (m == options.n_steps - 1) final_logits = out.logits;
        }
    }

    // ----- selection -----
    result.candidates.resize(current.size());
    for (std::size_t k = 0; k < current.size(); ++k) {
        result.candidates[k].trajectory = std::move(current[k]);
        result.candidates[k].confidence = sigmoid(final_logits[k]);
        result.candidates[k].origin_anchor = origins[k];
    }
    result.top1_index = 0;
    for (std::size_t k = 1; k < result.candidates.size(); ++k)
        if (result.candidates[k].confidence >
            result.candidates[static_cast<std::size_t>(result.top1_index)].confidence)
            result.top1_index = static_cast<int>(k);
    return result;
}

PlanResult plan(const DenoiserParams& params, const AnchorSet& anchors,
                const NoiseSchedule& sched, const Scene& scene, int n_infer, int n_steps,
                uint64_t seed) {
    PlanOptions options;
    options.n_infer = n_infer;
    options.n_steps = n_steps;
    options.seed = seed;
    return plan(params, anchors, sched, scene, options);
}

std::vector<ReportRow> multi_mode_report(const PlanResult& result, int k, const Scene* scene) {
    if (k < 0 || k > static_cast<int>(result.candidates.size()))
        throw BoundsError("top-k request exceeds candidate count");

    std::vector<std::size_t> order(result.candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return result.candidates[a].confidence > result.candidates[b].confidence;
    });

    std::vector<ReportRow> rows;
    rows.reserve(static_cast<std::size_t>(k));
    for (int r = 0; r < k; ++r) {
        const std::size_t idx = order[static_cast<std::size_t>(r)];
        ReportRow row;
        row.rank = r + 1;
        row.candidate_index = static_cast<int>(idx);
        row.confidence = result.candidates[idx].confidence;
        row.origin_anchor = result.candidates[idx].origin_anchor;
        if (scene != nullptr) {
            row.has_score = true;
            row.score = mini_pdm(*scene, result.candidates[idx].trajectory);
        }
        rows.push_back(row);
    }
    return rows;
}

void write_plan_file(const std::string& path, const PlanResult& result) {
    const auto rows = multi_mode_report(result, static_cast<int>(result.candidates.size()));
    std::ofstream os(path + ".tmp", std::ios::trunc);
    if (!os) throw IoError("cannot open plan file for writing: " + path);
    os << "# tdp-plan v1 candidates=" << result.candidates.size() << "\n";
    os << "# rank confidence origin_anchor waypoints...\n";
    char buf[32];
    for (const auto& row : rows) {
        const auto& cand = result.candidates[static_cast<std::size_t>(row.candidate_index)];
        os << row.rank;
        std::snprintf(buf, sizeof(buf), " %.17g", row.confidence);
        os << buf << " " << row.origin_anchor;
        for (const auto& w : cand.trajectory.waypoints) {
            std::snprintf(buf, sizeof(buf), " %.17g", w.x);
            os << buf;
            std::snprintf(buf, sizeof(buf), " %.17g", w.y);
            os << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("plan file write failed: " + path);
    os.close();
    std::filesystem::rename(path + ".tmp", path);
}

PlanResult read_plan_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open plan file: " + path);
    std::string header;
    std::getline(is, header);
    if (header.rfind("# tdp-plan v1", 0) != 0)
        throw ParseError("plan file header not recognized: " + path);

    PlanResult result;
    std::string line;
    std::size_t record = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int rank = 0;
        PlanCandidate cand;
        if (!(ls >> rank >> cand.confidence >> cand.origin_anchor))
            throw ParseError("plan record " + std::to_string(record) + ": bad row");
        double x, y;
        while (ls >> x >> y) cand.trajectory.waypoints.push_back({x, y});
        if (cand.trajectory.horizon() < 2)
            throw ParseError("plan record " + std::to_string(record) + ": too few waypoints");
        result.candidates.push_back(std::move(cand));
        ++record;
    }
    result.top1_index = 0;  // rows are rank-ordered
    return result;
}

}  // namespace tdp
