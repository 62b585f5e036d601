#pragma once

#include <span>
#include <vector>

#include "cadseq/seqmodel/command.hpp"
#include "cadseq/seqmodel/sketch.hpp"

namespace cadseq::geom {

using seq::Point2;
using seq::SketchPlane;
using seq::Vec3;

inline constexpr double kMinLoopArea = 1e-6;

// Closed planar loops (each polyline repeats its first vertex) placed on a sketch plane.
struct Profile {
  std::vector<std::vector<Point2>> loops;
  SketchPlane plane;

  // Even-odd containment in sketch coordinates.
  bool contains(Point2 p) const;
};

// Evaluates the sketch commands preceding one extrude (a run of SOL-led loops)
// on that extrude's plane. Throws OpenLoop or DegenerateLoop.
Profile evaluate_profile(std::span<const seq::CadCommand> sketch, const seq::CadCommand& extrude);

// Same, with an explicit plane (tests build analytic frames this way).
Profile evaluate_profile(std::span<const seq::CadCommand> sketch, const SketchPlane& plane);

double loop_area(const std::vector<Point2>& closed);

}  // namespace cadseq::geom
