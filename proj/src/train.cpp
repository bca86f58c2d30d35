#include "tdp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "tdp/eval.hpp"
#include "tdp/log.hpp"
#include "tdp/plan.hpp"
#include "tdp/rng.hpp"

namespace tdp {

const char* train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::Truncated: return "truncated";
        case TrainMode::Vanilla: return "vanilla";
        case TrainMode::Regression: return "regression";
        case TrainMode::Vocabulary: return "vocabulary";
    }
    return "unknown";
}

TrainMode train_mode_from_name(const std::string& name) {
    for (const auto m : {TrainMode::Truncated, TrainMode::Vanilla, TrainMode::Regression,
                         TrainMode::Vocabulary})
        if (name == train_mode_name(m)) return m;
    throw ConfigError("unknown train mode: " + name);
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

Assignment assign_targets(const AnchorSet& anchors, const Trajectory& gt) {
    if (anchors.n_anchor() < 1) throw CardinalityError("anchor set is empty");
    if (anchors.horizon() != gt.horizon())
        throw ShapeError("anchor horizon " + std::to_string(anchors.horizon()) +
                         " does not match ground truth horizon " + std::to_string(gt.horizon()));
    Assignment out;
    out.labels.assign(static_cast<std::size_t>(anchors.n_anchor()), 0);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < anchors.n_anchor(); ++k) {
        const auto& a = anchors.anchors[static_cast<std::size_t>(k)];
        double mean_l2 = 0.0;
        for (std::size_t t = 0; t < gt.horizon(); ++t) mean_l2 += (a[t] - gt[t]).norm();
        mean_l2 /= static_cast<double>(gt.horizon());
        if (mean_l2 < best) {
            best = mean_l2;
            out.positive_index = k;
        }
    }
    out.labels[static_cast<std::size_t>(out.positive_index)] = 1;
    return out;
}

namespace {

constexpr double kBceFloor = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// BCE with the log argument floored; gradient is exactly consistent with the
// computed value (zero where the floor is active).
double bce_and_grad(double logit, int y, double* dlogit) {
    const double p = sigmoid(logit);
    const double u = y == 1 ? p : 1.0 - p;
    if (u < kBceFloor) {
        if (dlogit != nullptr) *dlogit = 0.0;
        return -std::log(kBceFloor);
    }
    if (dlogit != nullptr) *dlogit = p - static_cast<double>(y);
    return -std::log(u);
}

}  // namespace

LossBreakdown loss_from_output(const DenoiserOutput& out, const Assignment& assign,
                               const Trajectory& gt, double lambda, bool deep_supervision,
                               bool use_l1, DenoiserOutputGrads* grads) {
    const int n_stages = static_cast<int>(out.stage_trajectories.size());
    const int n_traj = static_cast<int>(out.trajectories.size());
    if (static_cast<int>(assign.labels.size()) != n_traj)
        throw ShapeError("assignment covers " + std::to_string(assign.labels.size()) +
                         " trajectories, output has " + std::to_string(n_traj));

    const int first_stage = deep_supervision ? 0 : n_stages - 1;
    const double stage_w = 1.0 / static_cast<double>(n_stages - first_stage);
    const double coord_count = static_cast<double>(gt.horizon() * 2);

    LossBreakdown loss;
    for (int s = first_stage; s < n_stages; ++s) {
        const auto su = static_cast<std::size_t>(s);
        for (int k = 0; k < n_traj; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const int y = assign.labels[ku];
            if (y == 1 && use_l1) {
                const auto& pred = out.stage_trajectories[su][ku];
                if (pred.horizon() != gt.horizon())
                    throw ShapeError("prediction horizon does not match ground truth");
                double l1 = 0.0;
                for (std::size_t t = 0; t < gt.horizon(); ++t) {
                    l1 += std::abs(pred[t].x - gt[t].x) + std::abs(pred[t].y - gt[t].y);
                    if (grads != nullptr) {
                        auto& g = grads->d_stage_trajectories[su][ku][t];
                        const double w = stage_w / coord_count;
                        g.x += w * (pred[t].x > gt[t].x ? 1.0 : (pred[t].x < gt[t].x ? -1.0 : 0.0));
                        g.y += w * (pred[t].y > gt[t].y ? 1.0 : (pred[t].y < gt[t].y ? -1.0 : 0.0));
                    }
                }
                loss.l1 += stage_w * l1 / coord_count;
            }
            if (lambda > 0.0) {
                double dlogit = 0.0;
                const double b = bce_and_grad(out.stage_logits[su][ku], y,
                                              grads != nullptr ? &dlogit : nullptr);
                loss.bce += stage_w * lambda * b;
                if (grads != nullptr)
                    grads->d_stage_logits[su][ku] += stage_w * lambda * dlogit;
            }
        }
    }
    loss.total = loss.l1 + loss.bce;
    return loss;
}

namespace {

struct SampleWork {
    double loss = 0.0;
    std::vector<double> grad;
};

SampleWork sample_loss_and_grad(const DenoiserParams& params, const Scene& scene,
                                const AnchorSet& anchors, const NoiseSchedule& sched,
                                const TrainConfig& config, uint64_t sample_seed) {
    Rng rng(sample_seed);
    const auto& gt = scene.gt_trajectory;
    const std::size_t horizon = gt.horizon();

    std::vector<Trajectory> noisy;
    Assignment assign;
    int step = 0;
    bool use_l1 = true;

    switch (config.mode) {
        case TrainMode::Truncated: {
            step = static_cast<int>(rng.uniform_int(1, sched.trunc_steps));
            assign = assign_targets(anchors, gt);
            noisy.reserve(static_cast<std::size_t>(anchors.n_anchor()));
            for (const auto& anchor : anchors.anchors) {
                Trajectory eps(horizon);
                for (auto& w : eps.waypoints) w = {rng.normal(), rng.normal()};
                noisy.push_back(diffuse(sched, anchor, step, eps));
            }
            break;
        }
        case TrainMode::Vocabulary: {
            step = 0;
            assign = assign_targets(anchors, gt);
            noisy = anchors.anchors;
            use_l1 = false;
            break;
        }
        case TrainMode::Regression: {
            if (anchors.n_anchor() != 1)
                throw ConfigError("regression mode expects a single mean anchor");
            step = 0;
            assign.labels = {1};
            assign.positive_index = 0;
            noisy = anchors.anchors;
            break;
        }
        case TrainMode::Vanilla: {
            step = static_cast<int>(rng.uniform_int(1, sched.total_steps));
            Trajectory eps(horizon);
            for (auto& w : eps.waypoints) w = {rng.normal(), rng.normal()};
            noisy.push_back(diffuse(sched, gt, step, eps));
            assign.labels = {1};
            assign.positive_index = 0;
            break;
        }
    }

    DenoiserTrace trace;
    const DenoiserOutput out = forward(params, noisy, scene, step, trace);
    auto grads = DenoiserOutputGrads::zeros(params.config, static_cast<int>(noisy.size()));
    const LossBreakdown loss = loss_from_output(out, assign, gt, config.lambda,
                                                params.config.deep_supervision, use_l1, &grads);
    SampleWork work;
    work.loss = loss.total;
    work.grad = backward(params, trace, grads);
    return work;
}

}  // namespace

BatchResult loss_and_grad(const DenoiserParams& params, const std::vector<const Scene*>& batch,
                          const AnchorSet& anchors, const NoiseSchedule& sched,
                          const TrainConfig& config, uint64_t batch_seed) {
    if (batch.empty()) throw CardinalityError("batch must be nonempty");
    config.validate();

    std::vector<SampleWork> works(batch.size());
    const int n_threads =
        std::max(1, std::min<int>(config.threads, static_cast<int>(batch.size())));
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            works[i] = sample_loss_and_grad(params, *batch[i], anchors, sched, config,
                                            mix_seed(batch_seed, i));
    };
    if (n_threads == 1) {
        run_range(0, batch.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (batch.size() + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * chunk;
            const std::size_t hi = std::min(batch.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }

    // reduce in index order so results do not depend on the thread count
    BatchResult result;
    result.grad.assign(params.flat.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < works.size(); ++i) {
        if (!std::isfinite(works[i].loss))
            throw NumericError("non-finite loss at batch sample " + std::to_string(i));
        result.loss += inv * works[i].loss;
        for (std::size_t p = 0; p < result.grad.size(); ++p)
            result.grad[p] += inv * works[i].grad[p];
    }
    return result;
}

TrainResult train_loop(const std::vector<Scene>& dataset, const AnchorSet& anchors,
                       const NoiseSchedule& sched, const DenoiserConfig& dcfg,
                       const TrainConfig& tcfg) {
    if (dataset.empty()) throw CardinalityError("training dataset is empty");
    tcfg.validate();

    TrainResult result;
    result.params = init_params(mix_seed(tcfg.seed, 0xA11CE), dcfg);

    const std::size_t n_params = result.params.flat.size();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t adam_t = 0;

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        // Fisher-Yates with the artifact RNG, reseeded per epoch
        Rng shuffle_rng(mix_seed(tcfg.seed, 0x5F0000 + static_cast<uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        int n_batches = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch_size));
            std::vector<const Scene*> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset[order[i]]);

            const uint64_t batch_seed =
                mix_seed(tcfg.seed, 0xBA7C000000ULL + static_cast<uint64_t>(epoch) * 1000000ULL +
                                        static_cast<uint64_t>(n_batches));
            BatchResult br;
            try {
                br = loss_and_grad(result.params, batch, anchors, sched, tcfg, batch_seed);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(n_batches) + ": " + e.what());
            }

            double grad_sq = 0.0;
            for (const double g : br.grad) grad_sq += g * g;
            if (!std::isfinite(grad_sq))
                throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(n_batches));

            ++adam_t;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
            for (std::size_t p = 0; p < n_params; ++p) {
                m[p] = beta1 * m[p] + (1.0 - beta1) * br.grad[p];
                v[p] = beta2 * v[p] + (1.0 - beta2) * br.grad[p] * br.grad[p];
                result.params.flat[p] -=
                    tcfg.learning_rate * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + eps);
            }

            epoch_loss += br.loss;
            ++n_batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = epoch_loss / std::max(1, n_batches);
        if (tcfg.eval_every > 0 && (epoch + 1) % tcfg.eval_every == 0) {
            const std::size_t probe = std::min<std::size_t>(dataset.size(), 16);
            double pdms = 0.0;
            for (std::size_t i = 0; i < probe; ++i) {
                const PlanResult plan_result =
                    plan(result.params, anchors, sched, dataset[i], anchors.n_anchor(),
                         tcfg.mode == TrainMode::Truncated ? 2 : 1,
                         mix_seed(tcfg.seed, 0xE7A1 + i));
                const auto& top =
                    plan_result.candidates[static_cast<std::size_t>(plan_result.top1_index)];
                pdms += mini_pdm(dataset[i], top.trajectory).pdms_mini;
            }
            stats.eval_pdms = pdms / static_cast<double>(probe);
        }
        result.history.push_back(stats);
        log_debug("epoch %d loss %.6f", epoch, stats.loss);
    }
    return result;
}

void write_metrics(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path + ".tmp", std::ios::trunc);
    if (!os) throw IoError("cannot open metrics file for writing: " + path);
    os << "# epoch loss eval_pdms\n";
    char buf[96];
    for (const auto& h : history) {
        if (h.eval_pdms >= 0.0)
            std::snprintf(buf, sizeof(buf), "%d %.17g %.17g\n", h.epoch, h.loss, h.eval_pdms);
        else
            std::snprintf(buf, sizeof(buf), "%d %.17g -\n", h.epoch, h.loss);
        os << buf;
    }
    os.close();
    std::filesystem::rename(path + ".tmp", path);
}

}  // namespace tdp
