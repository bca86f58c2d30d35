// tdp: truncated-diffusion trajectory planner CLI.
// Subcommands cover the full pipeline: gen-data -> cluster -> train -> plan,
// plus eval, compare, and SVG plotting.

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "tdp/checkpoint.hpp"
#include "tdp/eval.hpp"
#include "tdp/log.hpp"
#include "tdp/plan.hpp"
#include "tdp/rng.hpp"
#include "tdp/scene.hpp"
#include "tdp/svg.hpp"
#include "tdp/train.hpp"

namespace {

using namespace tdp;

struct GenDataArgs {
    std::string out;
    int count = 100;
    uint64_t seed = 0;
    double difficulty = 0.5;
    std::string intent;  // empty = round-robin mixture
};

int cmd_gen_data(const GenDataArgs& args) {
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(args.count));
    int total_retries = 0;
    int reseeds = 0;
    for (int i = 0; i < args.count; ++i) {
        const RouteIntent intent = args.intent.empty()
                                       ? static_cast<RouteIntent>(i % kNumIntents)
                                       : intent_from_name(args.intent);
        uint64_t scene_seed = mix_seed(args.seed, static_cast<uint64_t>(i));
        for (int attempt = 0;; ++attempt) {
            try {
                GenStats stats;
                scenes.push_back(generate_scene(intent, args.difficulty, scene_seed, stats));
                total_retries += stats.obstacle_retries;
                break;
            } catch (const GenerationError&) {
                if (attempt >= 8) throw;
                ++reseeds;
                scene_seed = mix_seed(scene_seed, 0xDEAD + static_cast<uint64_t>(attempt));
            }
        }
    }
    write_dataset(args.out, scenes);
    std::printf("wrote %zu scenes to %s (%d obstacle retries, %d generation failures)\n",
                scenes.size(), args.out.c_str(), total_retries, reseeds);
    return 0;
}

struct ClusterArgs {
    std::string dataset;
    std::string out;
    int k = 20;
    int iters = 100;
    uint64_t seed = 0;
};

int cmd_cluster(const ClusterArgs& args) {
    const auto scenes = read_dataset(args.dataset);
    std::vector<Trajectory> demos;
    demos.reserve(scenes.size());
    for (const auto& s : scenes) demos.push_back(s.gt_trajectory);
    const AnchorSet anchors = kmeans_cluster(demos, args.k, args.iters, args.seed);
    write_anchor_file(args.out, anchors);
    std::printf("clustered %zu demonstrations into %d anchors -> %s\n", demos.size(), args.k,
                args.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string dataset;
    std::string anchors;
    std::string out;
    std::string metrics;
    std::string mode = "truncated";
    double lr = 6e-4;
    double lambda = 1.0;
    int epochs = 60;
    int batch = 8;
    int threads = 1;
    int cascade = 2;
    int trunc = 50;
    int eval_every = 0;
    uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args) {
    const auto scenes = read_dataset(args.dataset);
    if (scenes.empty()) throw CardinalityError("training dataset is empty");

    const TrainMode mode = train_mode_from_name(args.mode);
    const NoiseSchedule sched = default_schedule(args.trunc);

    AnchorSet anchors;
    if (!args.anchors.empty()) {
        anchors = read_anchor_file(args.anchors);
    } else if (mode == TrainMode::Regression || mode == TrainMode::Vanilla) {
        // single mean anchor
        std::vector<Trajectory> demos;
        for (const auto& s : scenes) demos.push_back(s.gt_trajectory);
        anchors = kmeans_cluster(demos, 1, 50, args.seed);
    } else {
        throw ConfigError("--anchors is required for mode " + args.mode);
    }
    if (mode == TrainMode::Regression && anchors.n_anchor() != 1)
        throw ConfigError("regression mode expects a single anchor (k = 1)");

    DenoiserConfig dcfg;
    dcfg.horizon = static_cast<int>(scenes.front().gt_trajectory.horizon());
    dcfg.n_stages = args.cascade;

    TrainConfig tcfg;
    tcfg.lambda = args.lambda;
    tcfg.learning_rate = args.lr;
    tcfg.epochs = args.epochs;
    tcfg.batch_size = args.batch;
    tcfg.seed = args.seed;
    tcfg.threads = args.threads;
    tcfg.eval_every = args.eval_every;
    tcfg.mode = mode;
    tcfg.validate();

    log_info("training %s: %zu scenes, %d epochs, %d anchors", args.mode.c_str(), scenes.size(),
             args.epochs, anchors.n_anchor());
    const TrainResult result = train_loop(scenes, anchors, sched, dcfg, tcfg);

    Checkpoint ckpt{result.params, sched, anchors};
    write_checkpoint(args.out, ckpt);
    if (!args.metrics.empty()) write_metrics(args.metrics, result.history);

    std::printf("trained %s for %d epochs: loss %.6f -> %.6f, checkpoint %s\n",
                args.mode.c_str(), args.epochs, result.history.front().loss,
                result.history.back().loss, args.out.c_str());
    return 0;
}

struct PlanArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::string init = "anchored";
    int index = 0;
    int n_infer = 20;
    int steps = 2;
    double eta = 0.0;
    uint64_t seed = 0;
};

InitMode init_from_name(const std::string& name) {
    if (name == "anchored") return InitMode::Anchored;
    if (name == "noise") return InitMode::PureNoise;
    if (name == "extrapolated") return InitMode::Extrapolated;
    if (name == "clean") return InitMode::CleanAnchors;
    throw ConfigError("unknown init mode: " + name);
}

int cmd_plan(const PlanArgs& args) {
    const Checkpoint ckpt = read_checkpoint(args.checkpoint);
    const auto scenes = read_dataset(args.dataset);
    if (args.index < 0 || args.index >= static_cast<int>(scenes.size()))
        throw BoundsError("scene index " + std::to_string(args.index) + " outside dataset of " +
                          std::to_string(scenes.size()));
    const Scene& scene = scenes[static_cast<std::size_t>(args.index)];

    PlanOptions options;
    options.n_infer = args.n_infer;
    options.n_steps = args.steps;
    options.eta = args.eta;
    options.init = init_from_name(args.init);
    options.seed = args.seed;
    const PlanResult result = plan(ckpt.params, ckpt.anchors, ckpt.sched, scene, options);

    if (!args.out.empty()) write_plan_file(args.out, result);
    const auto& top = result.candidates[static_cast<std::size_t>(result.top1_index)];
    const MiniScore ms = mini_pdm(scene, top.trajectory);
    std::printf("scene %d (%s): %zu candidates, top-1 confidence %.3f, pdms_mini %.3f "
                "(nc=%d dac=%d ttc=%d comf=%d ep=%.2f)\n",
                args.index, intent_name(scene.intent), result.candidates.size(), top.confidence,
                ms.pdms_mini, ms.nc, ms.dac, ms.ttc, ms.comf, ms.ep);
    return 0;
}

struct EvalArgs {
    std::string dataset;
    std::string plan_file;
    std::string checkpoint;
    int index = 0;
    int top_k = 10;
    int n_infer = 20;
    int steps = 2;
    uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& args) {
    const auto scenes = read_dataset(args.dataset);
    if (scenes.empty()) throw CardinalityError("dataset is empty");

    if (!args.plan_file.empty()) {
        if (args.index < 0 || args.index >= static_cast<int>(scenes.size()))
            throw BoundsError("scene index outside dataset");
        const Scene& scene = scenes[static_cast<std::size_t>(args.index)];
        const PlanResult result = read_plan_file(args.plan_file);
        const int k = std::min<int>(args.top_k, static_cast<int>(result.candidates.size()));
        const auto rows = multi_mode_report(result, k, &scene);
        std::printf("%-5s %-6s %-10s %-6s %4s %4s %4s %5s %6s %6s\n", "rank", "cand", "conf",
                    "anchor", "nc", "dac", "ttc", "comf", "ep", "pdms");
        for (const auto& r : rows)
            std::printf("%-5d %-6d %-10.4f %-6d %4d %4d %4d %5d %6.3f %6.3f\n", r.rank,
                        r.candidate_index, r.confidence, r.origin_anchor, r.score.nc, r.score.dac,
                        r.score.ttc, r.score.comf, r.score.ep, r.score.pdms_mini);
        return 0;
    }

    if (!args.checkpoint.empty()) {
        const Checkpoint ckpt = read_checkpoint(args.checkpoint);
        double pdms = 0.0, nc = 0.0, dac = 0.0;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            const PlanResult result = plan(ckpt.params, ckpt.anchors, ckpt.sched, scenes[i],
                                           args.n_infer, args.steps,
                                           mix_seed(args.seed, i));
            const auto& top = result.candidates[static_cast<std::size_t>(result.top1_index)];
            const MiniScore ms = mini_pdm(scenes[i], top.trajectory);
            pdms += ms.pdms_mini;
            nc += ms.nc;
            dac += ms.dac;
        }
        const double inv = 1.0 / static_cast<double>(scenes.size());
        std::printf("top-1 over %zu scenes: pdms_mini %.4f, nc %.3f, dac %.3f\n", scenes.size(),
                    pdms * inv, nc * inv, dac * inv);
        return 0;
    }

    // no plan or checkpoint: score the demonstrations themselves
    double pdms = 0.0;
    int nc_pass = 0, dac_pass = 0;
    for (const auto& s : scenes) {
        const MiniScore ms = mini_pdm(s, s.gt_trajectory);
        pdms += ms.pdms_mini;
        nc_pass += ms.nc;
        dac_pass += ms.dac;
    }
    std::printf("demonstrations over %zu scenes: pdms_mini %.4f, nc %d/%zu, dac %d/%zu\n",
                scenes.size(), pdms / static_cast<double>(scenes.size()), nc_pass, scenes.size(),
                dac_pass, scenes.size());
    return 0;
}

struct CompareArgs {
    std::string dataset;
    std::string out;
    std::string paradigms = "truncated,vanilla,regression,extrapolated";
    std::map<std::string, std::string> ckpts;  // paradigm -> path
    int n_infer = 20;
    int steps = 2;
    int vanilla_steps = 20;
    uint64_t seed = 0;
};

int cmd_compare(const CompareArgs& args) {
    const auto scenes = read_dataset(args.dataset);

    std::vector<std::string> names;
    std::string token;
    for (const char c : args.paradigms + ",") {
        if (c == ',') {
            if (!token.empty()) names.push_back(token);
            token.clear();
        } else {
            token += c;
        }
    }

    std::map<std::string, Checkpoint> loaded;
    auto lookup = [&](const std::string& key) -> std::string {
        const auto it = args.ckpts.find(key);
        return it == args.ckpts.end() ? std::string() : it->second;
    };
    auto checkpoint_for = [&](const std::string& name) -> const Checkpoint* {
        std::string path = lookup(name);
        // the extrapolated-prior baseline reuses the truncated checkpoint
        if (path.empty() && name == "extrapolated") path = lookup("truncated");
        if (path.empty()) throw ConfigError("missing checkpoint for paradigm " + name);
        auto found = loaded.find(path);
        if (found == loaded.end()) found = loaded.emplace(path, read_checkpoint(path)).first;
        return &found->second;
    };

    std::vector<PlannerSetup> setups;
    for (const auto& name : names)
        setups.push_back({paradigm_from_name(name), checkpoint_for(name)});

    BenchmarkConfig cfg;
    cfg.n_infer = args.n_infer;
    cfg.truncated_steps = args.steps;
    cfg.vanilla_steps = args.vanilla_steps;
    cfg.seed = args.seed;

    const BenchmarkReport report = run_benchmark(scenes, setups, cfg);
    std::fputs(format_report(report).c_str(), stdout);
    if (!args.out.empty()) write_report_rows(args.out, report);
    return 0;
}

struct PlotArgs {
    std::string dataset;
    std::string plan_file;
    std::string out;
    int index = 0;
};

int cmd_plot(const PlotArgs& args) {
    const auto scenes = read_dataset(args.dataset);
    if (args.index < 0 || args.index >= static_cast<int>(scenes.size()))
        throw BoundsError("scene index outside dataset");
    const Scene& scene = scenes[static_cast<std::size_t>(args.index)];

    PlanResult result;
    const PlanResult* result_ptr = nullptr;
    if (!args.plan_file.empty()) {
        result = read_plan_file(args.plan_file);
        for (const auto& c : result.candidates)
            if (c.trajectory.horizon() != scene.gt_trajectory.horizon())
                throw ShapeError("plan horizon " + std::to_string(c.trajectory.horizon()) +
                                 " does not match scene horizon " +
                                 std::to_string(scene.gt_trajectory.horizon()));
        result_ptr = &result;
    }
    write_svg(args.out, render_scene_svg(scene, result_ptr));
    std::printf("wrote %s\n", args.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"truncated diffusion trajectory planner"};
    app.set_config("--config", "", "plain key = value config file ([subcommand] sections)");
    app.require_subcommand(1);
    app.fallthrough();

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic scenario dataset");
    gen->add_option("--out", gen_args.out, "dataset output path")->required();
    gen->add_option("--count", gen_args.count, "number of scenes")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_args.seed, "base seed");
    gen->add_option("--difficulty", gen_args.difficulty, "obstacle density in [0,1]")
        ->check(CLI::Range(0.0, 1.0));
    gen->add_option("--intent", gen_args.intent,
                    "fix a single route intent (default: mixture)");

    ClusterArgs cluster_args;
    auto* cluster = app.add_subcommand("cluster", "k-means anchors from demonstrations");
    cluster->add_option("--dataset", cluster_args.dataset, "input dataset")->required();
    cluster->add_option("--out", cluster_args.out, "anchor file output path")->required();
    cluster->add_option("--k", cluster_args.k, "anchor count")->check(CLI::PositiveNumber);
    cluster->add_option("--iters", cluster_args.iters, "max Lloyd iterations");
    cluster->add_option("--seed", cluster_args.seed, "seeding RNG");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train the cascade diffusion decoder");
    train->add_option("--dataset", train_args.dataset, "training dataset")->required();
    train->add_option("--anchors", train_args.anchors, "anchor file");
    train->add_option("--out", train_args.out, "checkpoint output path")->required();
    train->add_option("--metrics", train_args.metrics, "metrics history output path");
    train->add_option("--mode", train_args.mode,
                      "truncated | vanilla | regression | vocabulary");
    train->add_option("--lr", train_args.lr, "learning rate")->check(CLI::PositiveNumber);
    train->add_option("--lambda", train_args.lambda, "BCE weight");
    train->add_option("--epochs", train_args.epochs, "epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch", train_args.batch, "batch size")->check(CLI::PositiveNumber);
    train->add_option("--threads", train_args.threads, "worker cap")->check(CLI::PositiveNumber);
    train->add_option("--cascade", train_args.cascade, "cascade decoder stages")
        ->check(CLI::PositiveNumber);
    train->add_option("--trunc", train_args.trunc, "truncation index T_trunc")
        ->check(CLI::PositiveNumber);
    train->add_option("--eval-every", train_args.eval_every, "pdms snapshot cadence (epochs)");
    train->add_option("--seed", train_args.seed, "training seed");

    PlanArgs plan_args;
    auto* plan_cmd = app.add_subcommand("plan", "denoise trajectory candidates for one scene");
    plan_cmd->add_option("--checkpoint", plan_args.checkpoint, "model checkpoint")->required();
    plan_cmd->add_option("--dataset", plan_args.dataset, "scene dataset")->required();
    plan_cmd->add_option("--index", plan_args.index, "scene index");
    plan_cmd->add_option("--n-infer", plan_args.n_infer, "number of samples")
        ->check(CLI::PositiveNumber);
    plan_cmd->add_option("--steps", plan_args.steps, "denoising steps")
        ->check(CLI::PositiveNumber);
    plan_cmd->add_option("--eta", plan_args.eta, "DDIM eta")->check(CLI::Range(0.0, 1.0));
    plan_cmd->add_option("--init", plan_args.init, "anchored | noise | extrapolated | clean");
    plan_cmd->add_option("--seed", plan_args.seed, "sampling seed");
    plan_cmd->add_option("--out", plan_args.out, "plan file output path");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score plans or demonstrations");
    eval_cmd->add_option("--dataset", eval_args.dataset, "scene dataset")->required();
    eval_cmd->add_option("--plan", eval_args.plan_file, "plan file to score");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "score top-1 over the dataset");
    eval_cmd->add_option("--index", eval_args.index, "scene index for --plan");
    eval_cmd->add_option("--k", eval_args.top_k, "top-k rows for --plan");
    eval_cmd->add_option("--n-infer", eval_args.n_infer, "samples for --checkpoint");
    eval_cmd->add_option("--steps", eval_args.steps, "denoising steps for --checkpoint");
    eval_cmd->add_option("--seed", eval_args.seed, "sampling seed");

    CompareArgs compare_args;
    auto* compare = app.add_subcommand("compare", "four-paradigm benchmark");
    compare->add_option("--dataset", compare_args.dataset, "held-out dataset")->required();
    compare->add_option("--paradigms", compare_args.paradigms,
                        "comma list: truncated,vanilla,regression,vocabulary,extrapolated");
    compare->add_option("--ckpt-truncated", compare_args.ckpts["truncated"],
                        "truncated checkpoint");
    compare->add_option("--ckpt-vanilla", compare_args.ckpts["vanilla"], "vanilla checkpoint");
    compare->add_option("--ckpt-regression", compare_args.ckpts["regression"],
                        "regression checkpoint");
    compare->add_option("--ckpt-vocabulary", compare_args.ckpts["vocabulary"],
                        "vocabulary checkpoint");
    compare->add_option("--ckpt-extrapolated", compare_args.ckpts["extrapolated"],
                        "extrapolated-prior checkpoint (defaults to truncated)");
    compare->add_option("--n-infer", compare_args.n_infer, "samples per scene");
    compare->add_option("--steps", compare_args.steps, "truncated denoising steps");
    compare->add_option("--vanilla-steps", compare_args.vanilla_steps,
                        "vanilla denoising steps");
    compare->add_option("--seed", compare_args.seed, "sampling seed");
    compare->add_option("--out", compare_args.out, "machine-readable report path");

    PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "render a scene (and plan) to SVG");
    plot->add_option("--dataset", plot_args.dataset, "scene dataset")->required();
    plot->add_option("--index", plot_args.index, "scene index");
    plot->add_option("--plan", plot_args.plan_file, "plan file to overlay");
    plot->add_option("--out", plot_args.out, "SVG output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (cluster->parsed()) return cmd_cluster(cluster_args);
        if (train->parsed()) return cmd_train(train_args);
        if (plan_cmd->parsed()) return cmd_plan(plan_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (compare->parsed()) return cmd_compare(compare_args);
        if (plot->parsed()) return cmd_plot(plot_args);
    } catch (const std::invalid_argument& e) {
        tdp::log_error("%s", e.what());
        return 2;
    } catch (const std::exception& e) {
        tdp::log_error("%s", e.what());
        return 1;
    }
    return 0;
}
