#include "tdp/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tdp/rng.hpp"

namespace tdp {

void DenoiserConfig::validate() const {
    if (d < 1 || coord_dim < 1 || bev_proj_dim < 1 || mlp_hidden < 1 || emb_dim < 1 ||
        bev_channels < 1 || n_stages < 1)
        throw ConfigError("denoiser dims must be >= 1");
    if (horizon < 2) throw ConfigError("horizon must be >= 2");
    if (emb_dim % 2 != 0) throw ConfigError("emb_dim must be even");
}

std::vector<ParamBlock> param_layout(const DenoiserConfig& cfg) {
    cfg.validate();
    std::vector<ParamBlock> layout;
    std::size_t offset = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        layout.push_back({name, offset, rows, cols});
        offset += static_cast<std::size_t>(rows) * cols;
    };
    const int mlp_in = cfg.horizon * (cfg.coord_dim + cfg.bev_proj_dim);
    for (int s = 0; s < cfg.n_stages; ++s) {
        const std::string p = "stage" + std::to_string(s) + ".";
        add(p + "coord_embed.W", cfg.coord_dim, 2);
        add(p + "bev_proj.W", cfg.bev_proj_dim, cfg.bev_channels);
        add(p + "bev_proj.b", cfg.bev_proj_dim, 1);
        add(p + "obs_enc.W1", cfg.d, 6);
        add(p + "obs_enc.b1", cfg.d, 1);
        add(p + "obs_enc.W2", cfg.d, cfg.d);
        add(p + "obs_enc.b2", cfg.d, 1);
        add(p + "attn.Wq", cfg.d, cfg.d);
        add(p + "attn.bq", cfg.d, 1);
        add(p + "attn.Wk", cfg.d, cfg.d);
        add(p + "attn.bk", cfg.d, 1);
        add(p + "attn.Wv", cfg.d, cfg.d);
        add(p + "attn.bv", cfg.d, 1);
        add(p + "mlp.W1", cfg.mlp_hidden, mlp_in);
        add(p + "mlp.b1", cfg.mlp_hidden, 1);
        add(p + "mlp.W2", cfg.d, cfg.mlp_hidden);
        add(p + "mlp.b2", cfg.d, 1);
        add(p + "film.Ws", cfg.d, cfg.emb_dim);
        add(p + "film.bs", cfg.d, 1);
        add(p + "film.Wh", cfg.d, cfg.emb_dim);
        add(p + "film.bh", cfg.d, 1);
        add(p + "offset.W1", cfg.d, cfg.d);
        add(p + "offset.b1", cfg.d, 1);
        add(p + "offset.W2", 2 * cfg.horizon, cfg.d);
        add(p + "offset.b2", 2 * cfg.horizon, 1);
        add(p + "score.W1", cfg.d, cfg.d);
        add(p + "score.b1", cfg.d, 1);
        add(p + "score.W2", 1, cfg.d);
        add(p + "score.b2", 1, 1);
    }
    return layout;
}

std::size_t param_count(const DenoiserConfig& cfg) {
    const auto layout = param_layout(cfg);
    return layout.back().offset + layout.back().size();
}

DenoiserParams init_params(uint64_t seed, const DenoiserConfig& cfg) {
    const auto layout = param_layout(cfg);
    DenoiserParams params;
    params.config = cfg;
    params.flat.assign(layout.back().offset + layout.back().size(), 0.0);

    Rng rng(seed);
    for (const auto& block : layout) {
        const bool zero_init = block.name.find("offset.W2") != std::string::npos ||
                               block.name.find("offset.b2") != std::string::npos;
        // biases draw from the bound of their weight matrix (previous block)
        int fan_in = block.cols;
        if (block.cols == 1) {
            const auto& prev = layout[static_cast<std::size_t>(&block - layout.data()) - 1];
            fan_in = prev.cols;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < block.size(); ++i)
            params.flat[block.offset + i] = zero_init ? 0.0 : rng.uniform(-bound, bound);
    }
    return params;
}

std::vector<double> sinusoidal_embedding(int step, int dim) {
    const int half = dim / 2;
    std::vector<double> emb(static_cast<std::size_t>(dim));
    for (int m = 0; m < half; ++m) {
        const double freq =
            half > 1 ? std::exp(-std::log(10000.0) * m / static_cast<double>(half - 1)) : 1.0;
        emb[static_cast<std::size_t>(m)] = std::sin(step * freq);
        emb[static_cast<std::size_t>(half + m)] = std::cos(step * freq);
    }
    return emb;
}

DenoiserOutputGrads DenoiserOutputGrads::zeros(const DenoiserConfig& cfg, int n_traj) {
    DenoiserOutputGrads g;
    g.d_stage_trajectories.assign(
        static_cast<std::size_t>(cfg.n_stages),
        std::vector<Trajectory>(static_cast<std::size_t>(n_traj),
                                Trajectory(static_cast<std::size_t>(cfg.horizon))));
    g.d_stage_logits.assign(static_cast<std::size_t>(cfg.n_stages),
                            std::vector<double>(static_cast<std::size_t>(n_traj), 0.0));
    return g;
}

// ---------------------------------------------------------------------------
// dense kernels
// ---------------------------------------------------------------------------

namespace {

// y = W x + b, row-major W of shape rows x cols
void affine(const double* W, const double* b, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double acc = b != nullptr ? b[r] : 0.0;
        const double* row = W + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

void relu_inplace(double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
}

// backward through y = W x + b given gy; accumulates gW, gb, and gx
void affine_backward(const double* W, const double* x, const double* gy, double* gW, double* gb,
                     double* gx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double g = gy[r];
        if (g == 0.0) continue;
        double* gw_row = gW + static_cast<std::size_t>(r) * cols;
        const double* w_row = W + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) gw_row[c] += g * x[c];
        if (gb != nullptr) gb[r] += g;
        if (gx != nullptr)
            for (int c = 0; c < cols; ++c) gx[c] += g * w_row[c];
    }
}

// gradient through relu stored as post-activation values
void relu_backward_inplace(double* gy, const double* post, int n) {
    for (int i = 0; i < n; ++i)
        if (post[i] <= 0.0) gy[i] = 0.0;
}

// resolved per-stage parameter pointers, in layout order
template <typename Ptr>
struct StageView {
    Ptr Wce, Wbp, bbp;
    Ptr Wo1, bo1, Wo2, bo2;
    Ptr Wq, bq, Wk, bk, Wv, bv;
    Ptr W1, b1, W2, b2;
    Ptr Ws, bs, Wh, bh;
    Ptr Wof1, bof1, Wof2, bof2;
    Ptr Wsc1, bsc1, Wsc2, bsc2;
};

constexpr int kBlocksPerStage = 29;

template <typename Ptr, typename Vec>
StageView<Ptr> stage_view(Vec& flat, const std::vector<ParamBlock>& layout, int stage) {
    const std::size_t base = static_cast<std::size_t>(stage) * kBlocksPerStage;
    auto at = [&](std::size_t i) -> Ptr { return flat.data() + layout[base + i].offset; };
    StageView<Ptr> v;
    v.Wce = at(0);
    v.Wbp = at(1);
    v.bbp = at(2);
    v.Wo1 = at(3);
    v.bo1 = at(4);
    v.Wo2 = at(5);
    v.bo2 = at(6);
    v.Wq = at(7);
    v.bq = at(8);
    v.Wk = at(9);
    v.bk = at(10);
    v.Wv = at(11);
    v.bv = at(12);
    v.W1 = at(13);
    v.b1 = at(14);
    v.W2 = at(15);
    v.b2 = at(16);
    v.Ws = at(17);
    v.bs = at(18);
    v.Wh = at(19);
    v.bh = at(20);
    v.Wof1 = at(21);
    v.bof1 = at(22);
    v.Wof2 = at(23);
    v.bof2 = at(24);
    v.Wsc1 = at(25);
    v.bsc1 = at(26);
    v.Wsc2 = at(27);
    v.bsc2 = at(28);
    return v;
}

std::vector<double> obstacle_features(const Scene& scene) {
    std::vector<double> raw;
    raw.reserve(scene.obstacles.size() * 6);
    for (const auto& o : scene.obstacles) {
        raw.push_back(o.center.x * kObstaclePosScale);
        raw.push_back(o.center.y * kObstaclePosScale);
        raw.push_back(o.half_extent.x);
        raw.push_back(o.half_extent.y);
        raw.push_back(o.velocity.x * kObstacleVelScale);
        raw.push_back(o.velocity.y * kObstacleVelScale);
    }
    return raw;
}

void validate_forward_inputs(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                             const Scene& scene, int step) {
    const auto& cfg = params.config;
    cfg.validate();
    if (params.flat.size() != param_count(cfg))
        throw ShapeError("parameter vector size does not match config layout");
    if (noisy.empty()) throw BoundsError("forward requires at least one trajectory");
    if (step < 0) throw BoundsError("denoising step must be >= 0");
    for (std::size_t n = 0; n < noisy.size(); ++n) {
        if (static_cast<int>(noisy[n].horizon()) != cfg.horizon)
            throw ShapeError("trajectory " + std::to_string(n) + " has " +
                             std::to_string(noisy[n].horizon()) + " waypoints, config expects " +
                             std::to_string(cfg.horizon));
        if (!noisy[n].all_finite())
            throw NumericError("trajectory " + std::to_string(n) + " has non-finite coordinates");
    }
    if (scene.bev.channels != cfg.bev_channels || scene.bev.data.empty())
        throw ShapeError("scene BEV features missing or channel count mismatch (have " +
                         std::to_string(scene.bev.channels) + ", config expects " +
                         std::to_string(cfg.bev_channels) + ")");
}

}  // namespace

DenoiserOutput forward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                       const Scene& scene, int step, DenoiserTrace& trace) {
    validate_forward_inputs(params, noisy, scene, step);
    const auto& cfg = params.config;
    const auto layout = param_layout(cfg);
    const int n_traj = static_cast<int>(noisy.size());
    const int M = static_cast<int>(scene.obstacles.size());
    const int Tf = cfg.horizon;
    const int C = cfg.bev_channels;
    const int seg = cfg.coord_dim + cfg.bev_proj_dim;
    const int mlp_in = Tf * seg;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));

    trace = DenoiserTrace{};
    trace.step = step;
    trace.n_traj = n_traj;
    trace.emb = sinusoidal_embedding(step, cfg.emb_dim);
    trace.obs_raw = obstacle_features(scene);
    trace.stages.resize(static_cast<std::size_t>(cfg.n_stages));

    auto& out = trace.output;
    out.stage_trajectories.assign(static_cast<std::size_t>(cfg.n_stages), {});
    out.stage_logits.assign(static_cast<std::size_t>(cfg.n_stages), {});

    std::vector<Trajectory> current = noisy;

    for (int s = 0; s < cfg.n_stages; ++s) {
        const auto view = stage_view<const double*>(params.flat, layout, s);
        auto& st = trace.stages[static_cast<std::size_t>(s)];
        st.per_traj.resize(static_cast<std::size_t>(n_traj));

        // obstacle tokens (shared across trajectories within the stage)
        if (M > 0) {
            st.obs_u.resize(static_cast<std::size_t>(M) * cfg.d);
            st.tok.resize(static_cast<std::size_t>(M) * cfg.d);
            st.keys.resize(static_cast<std::size_t>(M) * cfg.d);
            st.vals.resize(static_cast<std::size_t>(M) * cfg.d);
            for (int m = 0; m < M; ++m) {
                const double* raw = trace.obs_raw.data() + static_cast<std::size_t>(m) * 6;
                double* u = st.obs_u.data() + static_cast<std::size_t>(m) * cfg.d;
                double* tok = st.tok.data() + static_cast<std::size_t>(m) * cfg.d;
                affine(view.Wo1, view.bo1, raw, u, cfg.d, 6);
                relu_inplace(u, cfg.d);
                affine(view.Wo2, view.bo2, u, tok, cfg.d, cfg.d);
                affine(view.Wk, view.bk, tok, st.keys.data() + static_cast<std::size_t>(m) * cfg.d,
                       cfg.d, cfg.d);
                affine(view.Wv, view.bv, tok, st.vals.data() + static_cast<std::size_t>(m) * cfg.d,
                       cfg.d, cfg.d);
            }
        }

        std::vector<Trajectory> next(static_cast<std::size_t>(n_traj),
                                     Trajectory(static_cast<std::size_t>(Tf)));
        std::vector<double> logits(static_cast<std::size_t>(n_traj), 0.0);

        for (int n = 0; n < n_traj; ++n) {
            auto& tt = st.per_traj[static_cast<std::size_t>(n)];
            tt.tau_in = current[static_cast<std::size_t>(n)].waypoints;

            // spatial sampling + per-waypoint embeddings
            tt.samp.resize(static_cast<std::size_t>(Tf) * C);
            tt.samp_dx.resize(static_cast<std::size_t>(Tf) * C);
            tt.samp_dy.resize(static_cast<std::size_t>(Tf) * C);
            tt.x.resize(static_cast<std::size_t>(mlp_in));
            for (int t = 0; t < Tf; ++t) {
                const Vec2 w = tt.tau_in[static_cast<std::size_t>(t)];
                for (int c = 0; c < C; ++c) {
                    double dx = 0.0, dy = 0.0;
                    const double v = scene.bev.sample(c, w.x, w.y, &dx, &dy);
                    tt.samp[static_cast<std::size_t>(t) * C + c] = v;
                    tt.samp_dx[static_cast<std::size_t>(t) * C + c] = dx;
                    tt.samp_dy[static_cast<std::size_t>(t) * C + c] = dy;
                }
                const double xy[2] = {w.x * kCoordScale, w.y * kCoordScale};
                double* xseg = tt.x.data() + static_cast<std::size_t>(t) * seg;
                affine(view.Wce, nullptr, xy, xseg, cfg.coord_dim, 2);
                affine(view.Wbp, view.bbp, tt.samp.data() + static_cast<std::size_t>(t) * C,
                       xseg + cfg.coord_dim, cfg.bev_proj_dim, C);
            }

            // trajectory MLP
            tt.h1.resize(static_cast<std::size_t>(cfg.mlp_hidden));
            affine(view.W1, view.b1, tt.x.data(), tt.h1.data(), cfg.mlp_hidden, mlp_in);
            relu_inplace(tt.h1.data(), cfg.mlp_hidden);
            tt.f0.resize(static_cast<std::size_t>(cfg.d));
            affine(view.W2, view.b2, tt.h1.data(), tt.f0.data(), cfg.d, cfg.mlp_hidden);

            // cross-attention over obstacle tokens
            tt.f1 = tt.f0;
            if (M > 0) {
                tt.q.resize(static_cast<std::size_t>(cfg.d));
                affine(view.Wq, view.bq, tt.f0.data(), tt.q.data(), cfg.d, cfg.d);
                tt.alpha.resize(static_cast<std::size_t>(M));
                double max_score = -std::numeric_limits<double>::infinity();
                for (int m = 0; m < M; ++m) {
                    const double* key = st.keys.data() + static_cast<std::size_t>(m) * cfg.d;
                    double score = 0.0;
                    for (int i = 0; i < cfg.d; ++i) score += tt.q[static_cast<std::size_t>(i)] * key[i];
                    tt.alpha[static_cast<std::size_t>(m)] = score * attn_scale;
                    max_score = std::max(max_score, tt.alpha[static_cast<std::size_t>(m)]);
                }
                double z = 0.0;
                for (int m = 0; m < M; ++m) {
                    auto& a = tt.alpha[static_cast<std::size_t>(m)];
                    a = std::exp(a - max_score);
                    z += a;
                }
                for (int m = 0; m < M; ++m) tt.alpha[static_cast<std::size_t>(m)] /= z;
                for (int m = 0; m < M; ++m) {
                    const double a = tt.alpha[static_cast<std::size_t>(m)];
                    const double* val = st.vals.data() + static_cast<std::size_t>(m) * cfg.d;
                    for (int i = 0; i < cfg.d; ++i) tt.f1[static_cast<std::size_t>(i)] += a * val[i];
                }
            }

            // FiLM timestep modulation
            tt.scale.resize(static_cast<std::size_t>(cfg.d));
            std::vector<double> shift(static_cast<std::size_t>(cfg.d));
            affine(view.Ws, view.bs, trace.emb.data(), tt.scale.data(), cfg.d, cfg.emb_dim);
            affine(view.Wh, view.bh, trace.emb.data(), shift.data(), cfg.d, cfg.emb_dim);
            tt.f2.resize(static_cast<std::size_t>(cfg.d));
            for (int i = 0; i < cfg.d; ++i)
                tt.f2[static_cast<std::size_t>(i)] =
                    tt.f1[static_cast<std::size_t>(i)] * (1.0 + tt.scale[static_cast<std::size_t>(i)]) +
                    shift[static_cast<std::size_t>(i)];

            // heads
            tt.off_h.resize(static_cast<std::size_t>(cfg.d));
            affine(view.Wof1, view.bof1, tt.f2.data(), tt.off_h.data(), cfg.d, cfg.d);
            relu_inplace(tt.off_h.data(), cfg.d);
            std::vector<double> delta(static_cast<std::size_t>(2 * Tf));
            affine(view.Wof2, view.bof2, tt.off_h.data(), delta.data(), 2 * Tf, cfg.d);

            tt.sc_h.resize(static_cast<std::size_t>(cfg.d));
            affine(view.Wsc1, view.bsc1, tt.f2.data(), tt.sc_h.data(), cfg.d, cfg.d);
            relu_inplace(tt.sc_h.data(), cfg.d);
            double logit = 0.0;
            affine(view.Wsc2, view.bsc2, tt.sc_h.data(), &logit, 1, cfg.d);
            logits[static_cast<std::size_t>(n)] = logit;

            auto& out_traj = next[static_cast<std::size_t>(n)];
            for (int t = 0; t < Tf; ++t)
                out_traj[static_cast<std::size_t>(t)] =
                    tt.tau_in[static_cast<std::size_t>(t)] +
                    Vec2{delta[static_cast<std::size_t>(2 * t)],
                         delta[static_cast<std::size_t>(2 * t + 1)]};
        }

        out.stage_trajectories[static_cast<std::size_t>(s)] = next;
        out.stage_logits[static_cast<std::size_t>(s)] = logits;
        current = std::move(next);
    }

    out.trajectories = out.stage_trajectories.back();
    out.logits = out.stage_logits.back();
    for (const auto& traj : out.trajectories)
        if (!traj.all_finite()) throw NumericError("forward produced non-finite trajectory");
    for (const double l : out.logits)
        if (!std::isfinite(l)) throw NumericError("forward produced non-finite logit");
    return out;
}

DenoiserOutput forward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                       const Scene& scene, int step) {
    DenoiserTrace trace;
    return forward(params, noisy, scene, step, trace);
}

std::vector<double> backward(const DenoiserParams& params, const DenoiserTrace& trace,
                             const DenoiserOutputGrads& grads) {
    const auto& cfg = params.config;
    const auto layout = param_layout(cfg);
    const int n_traj = trace.n_traj;
    const int M = static_cast<int>(trace.obs_raw.size() / 6);
    const int Tf = cfg.horizon;
    const int C = cfg.bev_channels;
    const int seg = cfg.coord_dim + cfg.bev_proj_dim;
    const int mlp_in = Tf * seg;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));

    if (static_cast<int>(grads.d_stage_trajectories.size()) != cfg.n_stages ||
        static_cast<int>(grads.d_stage_logits.size()) != cfg.n_stages)
        throw ShapeError("output grads must cover every cascade stage");
    for (int s = 0; s < cfg.n_stages; ++s) {
        if (static_cast<int>(grads.d_stage_trajectories[static_cast<std::size_t>(s)].size()) !=
                n_traj ||
            static_cast<int>(grads.d_stage_logits[static_cast<std::size_t>(s)].size()) != n_traj)
            throw ShapeError("output grads trajectory count mismatch at stage " +
                             std::to_string(s));
        for (const auto& t : grads.d_stage_trajectories[static_cast<std::size_t>(s)])
            if (static_cast<int>(t.horizon()) != Tf)
                throw ShapeError("output grads horizon mismatch at stage " + std::to_string(s));
    }

    std::vector<double> grad(params.flat.size(), 0.0);

    // gradient flowing into each trajectory's stage output from the stage above
    std::vector<std::vector<Vec2>> g_from_above(
        static_cast<std::size_t>(n_traj),
        std::vector<Vec2>(static_cast<std::size_t>(Tf), Vec2{0.0, 0.0}));

    std::vector<double> g_f2(static_cast<std::size_t>(cfg.d));
    std::vector<double> g_f1(static_cast<std::size_t>(cfg.d));
    std::vector<double> g_f0(static_cast<std::size_t>(cfg.d));
    std::vector<double> g_h1(static_cast<std::size_t>(cfg.mlp_hidden));
    std::vector<double> g_x(static_cast<std::size_t>(mlp_in));
    std::vector<double> g_vec(static_cast<std::size_t>(cfg.d));
    std::vector<double> g_delta(static_cast<std::size_t>(2 * Tf));
    std::vector<double> g_q(static_cast<std::size_t>(cfg.d));

    for (int s = cfg.n_stages - 1; s >= 0; --s) {
        const auto view = stage_view<const double*>(params.flat, layout, s);
        const auto gview = stage_view<double*>(grad, layout, s);
        const auto& st = trace.stages[static_cast<std::size_t>(s)];

        std::vector<double> g_keys(static_cast<std::size_t>(M) * cfg.d, 0.0);
        std::vector<double> g_vals(static_cast<std::size_t>(M) * cfg.d, 0.0);

        for (int n = 0; n < n_traj; ++n) {
            const auto& tt = st.per_traj[static_cast<std::size_t>(n)];
            auto& g_tau = g_from_above[static_cast<std::size_t>(n)];

            // combine user-supplied stage grads with the cascade path
            const auto& g_user =
                grads.d_stage_trajectories[static_cast<std::size_t>(s)][static_cast<std::size_t>(n)];
            for (int t = 0; t < Tf; ++t) g_tau[static_cast<std::size_t>(t)] += g_user[static_cast<std::size_t>(t)];
            const double g_logit =
                grads.d_stage_logits[static_cast<std::size_t>(s)][static_cast<std::size_t>(n)];

            // score head
            std::fill(g_f2.begin(), g_f2.end(), 0.0);
            if (g_logit != 0.0) {
                for (int i = 0; i < cfg.d; ++i) g_vec[static_cast<std::size_t>(i)] = g_logit * view.Wsc2[i];
                relu_backward_inplace(g_vec.data(), tt.sc_h.data(), cfg.d);
                affine_backward(view.Wsc2, tt.sc_h.data(), &g_logit, gview.Wsc2, gview.bsc2,
                                nullptr, 1, cfg.d);
                affine_backward(view.Wsc1, tt.f2.data(), g_vec.data(), gview.Wsc1, gview.bsc1,
                                g_f2.data(), cfg.d, cfg.d);
            }

            // offset head
            for (int t = 0; t < Tf; ++t) {
                g_delta[static_cast<std::size_t>(2 * t)] = g_tau[static_cast<std::size_t>(t)].x;
                g_delta[static_cast<std::size_t>(2 * t + 1)] = g_tau[static_cast<std::size_t>(t)].y;
            }
            std::fill(g_vec.begin(), g_vec.end(), 0.0);
            affine_backward(view.Wof2, tt.off_h.data(), g_delta.data(), gview.Wof2, gview.bof2,
                            g_vec.data(), 2 * Tf, cfg.d);
            relu_backward_inplace(g_vec.data(), tt.off_h.data(), cfg.d);
            affine_backward(view.Wof1, tt.f2.data(), g_vec.data(), gview.Wof1, gview.bof1,
                            g_f2.data(), cfg.d, cfg.d);

            // FiLM: f2 = f1 * (1 + scale) + shift
            for (int i = 0; i < cfg.d; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                g_f1[iu] = g_f2[iu] * (1.0 + tt.scale[iu]);
            }
            {
                // g_scale = g_f2 .* f1, g_shift = g_f2
                for (int i = 0; i < cfg.d; ++i)
                    g_vec[static_cast<std::size_t>(i)] =
                        g_f2[static_cast<std::size_t>(i)] * tt.f1[static_cast<std::size_t>(i)];
                affine_backward(view.Ws, trace.emb.data(), g_vec.data(), gview.Ws, gview.bs,
                                nullptr, cfg.d, cfg.emb_dim);
                affine_backward(view.Wh, trace.emb.data(), g_f2.data(), gview.Wh, gview.bh,
                                nullptr, cfg.d, cfg.emb_dim);
            }

            // attention (residual): f1 = f0 + sum_m alpha_m v_m
            std::copy(g_f1.begin(), g_f1.end(), g_f0.begin());
            if (M > 0) {
                const double* g_attn = g_f1.data();
                std::vector<double> g_alpha(static_cast<std::size_t>(M), 0.0);
                for (int m = 0; m < M; ++m) {
                    const double a = tt.alpha[static_cast<std::size_t>(m)];
                    const double* val = st.vals.data() + static_cast<std::size_t>(m) * cfg.d;
                    double* gv = g_vals.data() + static_cast<std::size_t>(m) * cfg.d;
                    double dot = 0.0;
                    for (int i = 0; i < cfg.d; ++i) {
                        gv[i] += a * g_attn[i];
                        dot += val[i] * g_attn[i];
                    }
                    g_alpha[static_cast<std::size_t>(m)] = dot;
                }
                double mix = 0.0;
                for (int m = 0; m < M; ++m)
                    mix += tt.alpha[static_cast<std::size_t>(m)] * g_alpha[static_cast<std::size_t>(m)];
                std::fill(g_q.begin(), g_q.end(), 0.0);
                for (int m = 0; m < M; ++m) {
                    const double g_score = tt.alpha[static_cast<std::size_t>(m)] *
                                           (g_alpha[static_cast<std::size_t>(m)] - mix) * attn_scale;
                    const double* key = st.keys.data() + static_cast<std::size_t>(m) * cfg.d;
                    double* gk = g_keys.data() + static_cast<std::size_t>(m) * cfg.d;
                    for (int i = 0; i < cfg.d; ++i) {
                        g_q[static_cast<std::size_t>(i)] += g_score * key[i];
                        gk[i] += g_score * tt.q[static_cast<std::size_t>(i)];
                    }
                }
                affine_backward(view.Wq, tt.f0.data(), g_q.data(), gview.Wq, gview.bq, g_f0.data(),
                                cfg.d, cfg.d);
            }

            // trajectory MLP
            std::fill(g_h1.begin(), g_h1.end(), 0.0);
            affine_backward(view.W2, tt.h1.data(), g_f0.data(), gview.W2, gview.b2, g_h1.data(),
                            cfg.d, cfg.mlp_hidden);
            relu_backward_inplace(g_h1.data(), tt.h1.data(), cfg.mlp_hidden);
            std::fill(g_x.begin(), g_x.end(), 0.0);
            affine_backward(view.W1, tt.x.data(), g_h1.data(), gview.W1, gview.b1, g_x.data(),
                            cfg.mlp_hidden, mlp_in);

            // per-waypoint embeddings; gradient reaches the stage input both
            // through the coordinate embedding and the bilinear sample
            for (int t = 0; t < Tf; ++t) {
                const auto tu = static_cast<std::size_t>(t);
                const Vec2 w = tt.tau_in[tu];
                const double* g_seg = g_x.data() + tu * seg;
                const double xy[2] = {w.x * kCoordScale, w.y * kCoordScale};
                double g_xy[2] = {0.0, 0.0};
                affine_backward(view.Wce, xy, g_seg, gview.Wce, nullptr, g_xy, cfg.coord_dim, 2);

                const double* g_bp = g_seg + cfg.coord_dim;
                double g_samp_c;
                Vec2 g_w{g_xy[0] * kCoordScale, g_xy[1] * kCoordScale};
                // bev_proj backward: gW += g_bp samp^T, g_samp = Wbp^T g_bp
                for (int c = 0; c < C; ++c) {
                    g_samp_c = 0.0;
                    for (int r = 0; r < cfg.bev_proj_dim; ++r)
                        g_samp_c += view.Wbp[static_cast<std::size_t>(r) * C + c] * g_bp[r];
                    g_w.x += g_samp_c * tt.samp_dx[tu * C + c];
                    g_w.y += g_samp_c * tt.samp_dy[tu * C + c];
                }
                for (int r = 0; r < cfg.bev_proj_dim; ++r) {
                    const double g = g_bp[r];
                    if (g == 0.0) continue;
                    gview.bbp[r] += g;
                    double* gw_row = gview.Wbp + static_cast<std::size_t>(r) * C;
                    const double* samp_row = tt.samp.data() + tu * C;
                    for (int c = 0; c < C; ++c) gw_row[c] += g * samp_row[c];
                }
                // identity branch plus the feature path; becomes the grad on
                // stage s-1's output
                g_tau[tu] += g_w;
            }
        }

        // obstacle token encoder, once per stage
        if (M > 0) {
            std::vector<double> g_tok(static_cast<std::size_t>(cfg.d));
            std::vector<double> g_u(static_cast<std::size_t>(cfg.d));
            for (int m = 0; m < M; ++m) {
                const auto mu = static_cast<std::size_t>(m);
                const double* tok = st.tok.data() + mu * cfg.d;
                const double* u = st.obs_u.data() + mu * cfg.d;
                const double* raw = trace.obs_raw.data() + mu * 6;
                std::fill(g_tok.begin(), g_tok.end(), 0.0);
                affine_backward(view.Wk, tok, g_keys.data() + mu * cfg.d, gview.Wk, gview.bk,
                                g_tok.data(), cfg.d, cfg.d);
                affine_backward(view.Wv, tok, g_vals.data() + mu * cfg.d, gview.Wv, gview.bv,
                                g_tok.data(), cfg.d, cfg.d);
                std::fill(g_u.begin(), g_u.end(), 0.0);
                affine_backward(view.Wo2, u, g_tok.data(), gview.Wo2, gview.bo2, g_u.data(), cfg.d,
                                cfg.d);
                relu_backward_inplace(g_u.data(), u, cfg.d);
                affine_backward(view.Wo1, raw, g_u.data(), gview.Wo1, gview.bo1, nullptr, cfg.d,
                                6);
            }
        }
    }

    return grad;
}

std::vector<double> backward(const DenoiserParams& params, const std::vector<Trajectory>& noisy,
                             const Scene& scene, int step, const DenoiserOutputGrads& grads) {
    DenoiserTrace trace;
    forward(params, noisy, scene, step, trace);
    return backward(params, trace, grads);
}

}  // namespace tdp
