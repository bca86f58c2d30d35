#pragma once

#include <string>

#include "tdp/plan.hpp"
#include "tdp/scene.hpp"

namespace tdp {

// Deterministic SVG rendering of a scene with optional plan candidates:
// drivable area, obstacles (current footprint plus horizon ghost), the
// demonstration, and candidates colored by confidence rank. Candidates are
// the only <polyline> elements in the document.
std::string render_scene_svg(const Scene& scene, const PlanResult* plan_result);

void write_svg(const std::string& path, const std::string& svg);

}  // namespace tdp
