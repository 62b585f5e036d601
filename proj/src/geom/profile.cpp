#include "cadseq/geom/profile.hpp"

#include <cmath>
#include <string>

#include "cadseq/error.hpp"

namespace cadseq::geom {

using seq::CadCommand;
using seq::CommandType;

bool Profile::contains(Point2 p) const {
  bool in = false;
  for (const auto& loop : loops) {
    for (std::size_t i = 0; i + 1 < loop.size(); ++i) {
      const Point2 a = loop[i], b = loop[i + 1];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
        if (p.x < x) in = !in;
      }
    }
  }
  return in;
}

double loop_area(const std::vector<Point2>& closed) { return std::abs(seq::signed_area(closed)); }

Profile evaluate_profile(std::span<const CadCommand> sketch, const SketchPlane& plane) {
  if (!(plane.scale > 1e-12)) throw Error(ErrorCode::DegenerateLoop, "sketch scale is zero");
  Profile profile;
  profile.plane = plane;
  std::size_t i = 0;
  while (i < sketch.size()) {
    if (sketch[i].type != CommandType::SOL) {
      throw Error(ErrorCode::OpenLoop, "sketch command " + std::to_string(i) + " is not inside a loop");
    }
    std::size_t j = i + 1;
    while (j < sketch.size() && sketch[j].type != CommandType::SOL) ++j;
    auto loop = seq::trace_loop(sketch.subspan(i + 1, j - i - 1));
    if (loop_area(loop) < kMinLoopArea) throw Error(ErrorCode::DegenerateLoop, "loop area below 1e-6");
    if (!seq::is_simple(loop)) throw Error(ErrorCode::DegenerateLoop, "self-intersecting loop");
    profile.loops.push_back(std::move(loop));
    i = j;
  }
  if (profile.loops.empty()) throw Error(ErrorCode::OpenLoop, "extrude has no profile");
  return profile;
}

Profile evaluate_profile(std::span<const CadCommand> sketch, const CadCommand& extrude) {
  return evaluate_profile(sketch, SketchPlane::from_extrude(extrude));
}

}  // namespace cadseq::geom
