#pragma once

#include <string>

#include "tdp/anchors.hpp"
#include "tdp/denoiser.hpp"
#include "tdp/schedule.hpp"

namespace tdp {

// Everything required to plan: decoder weights, the noise schedule they were
// trained under, and the anchor set.
struct Checkpoint {
    DenoiserParams params;
    NoiseSchedule sched;
    AnchorSet anchors;
};

inline constexpr uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace tdp
