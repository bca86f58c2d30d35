#include "tdp/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "tdp/io_util.hpp"

namespace tdp {

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (ckpt.params.flat.size() != param_count(ckpt.params.config))
        throw ShapeError("checkpoint parameter vector does not match its config");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open checkpoint for writing: " + path);
        write_magic(os, "TDPW");
        write_le<uint16_t>(os, kCheckpointVersion);

        const auto& cfg = ckpt.params.config;
        write_le<int32_t>(os, cfg.d);
        write_le<int32_t>(os, cfg.coord_dim);
        write_le<int32_t>(os, cfg.bev_proj_dim);
        write_le<int32_t>(os, cfg.mlp_hidden);
        write_le<int32_t>(os, cfg.emb_dim);
        write_le<int32_t>(os, cfg.horizon);
        write_le<int32_t>(os, cfg.bev_channels);
        write_le<int32_t>(os, cfg.n_stages);
        write_le<uint8_t>(os, cfg.deep_supervision ? 1 : 0);

        write_le<int32_t>(os, ckpt.sched.total_steps);
        write_le<int32_t>(os, ckpt.sched.trunc_steps);
        write_le<double>(os, ckpt.sched.beta_start);
        write_le<double>(os, ckpt.sched.beta_end);

        write_le<uint32_t>(os, static_cast<uint32_t>(ckpt.anchors.n_anchor()));
        write_le<uint32_t>(os, static_cast<uint32_t>(ckpt.anchors.horizon()));

        write_le<uint64_t>(os, static_cast<uint64_t>(ckpt.params.flat.size()));
        os.write(reinterpret_cast<const char*>(ckpt.params.flat.data()),
                 static_cast<std::streamsize>(ckpt.params.flat.size() * sizeof(double)));

        for (const auto& anchor : ckpt.anchors.anchors)
            for (const auto& w : anchor.waypoints) {
                write_le<double>(os, w.x);
                write_le<double>(os, w.y);
            }
        if (!os) throw IoError("checkpoint write failed: " + path);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    expect_magic(is, "TDPW", "checkpoint");
    const uint16_t version = read_le<uint16_t>(is, "checkpoint version");
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint version " + std::to_string(version) +
                           " unsupported (want " + std::to_string(kCheckpointVersion) + ")");

    Checkpoint ckpt;
    auto& cfg = ckpt.params.config;
    cfg.d = read_le<int32_t>(is, "config.d");
    cfg.coord_dim = read_le<int32_t>(is, "config.coord_dim");
    cfg.bev_proj_dim = read_le<int32_t>(is, "config.bev_proj_dim");
    cfg.mlp_hidden = read_le<int32_t>(is, "config.mlp_hidden");
    cfg.emb_dim = read_le<int32_t>(is, "config.emb_dim");
    cfg.horizon = read_le<int32_t>(is, "config.horizon");
    cfg.bev_channels = read_le<int32_t>(is, "config.bev_channels");
    cfg.n_stages = read_le<int32_t>(is, "config.n_stages");
    cfg.deep_supervision = read_le<uint8_t>(is, "config.deep_supervision") != 0;
    cfg.validate();

    const int total = read_le<int32_t>(is, "schedule.total_steps");
    const int trunc = read_le<int32_t>(is, "schedule.trunc_steps");
    const double beta_start = read_le<double>(is, "schedule.beta_start");
    const double beta_end = read_le<double>(is, "schedule.beta_end");
    ckpt.sched = build_linear_schedule(total, beta_start, beta_end, trunc);

    const uint32_t n_anchor = read_le<uint32_t>(is, "anchor count");
    const uint32_t anchor_horizon = read_le<uint32_t>(is, "anchor horizon");

    const uint64_t n_params = read_le<uint64_t>(is, "parameter count");
    if (n_params != param_count(cfg))
        throw ParseError("checkpoint holds " + std::to_string(n_params) +
                         " parameters, config expects " + std::to_string(param_count(cfg)));
    ckpt.params.flat.resize(n_params);
    is.read(reinterpret_cast<char*>(ckpt.params.flat.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
    if (!is) throw ParseError("unexpected end of file in parameter vector");

    ckpt.anchors.anchors.resize(n_anchor, Trajectory(anchor_horizon));
    for (auto& anchor : ckpt.anchors.anchors)
        for (auto& w : anchor.waypoints) {
            w.x = read_le<double>(is, "anchor waypoint");
            w.y = read_le<double>(is, "anchor waypoint");
        }
    return ckpt;
}

}  // namespace tdp
