#pragma once

#include <span>
#include <vector>

#include "cadseq/seqmodel/command.hpp"

namespace cadseq::seq {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Every line/arc loop starts at the quantized image of (0.5, 0.5).
inline constexpr int kLoopStartLevel = 128;
double loop_start_coordinate();

inline constexpr int kCircleSegments = 64;
// Arcs are split into steps of at most this many degrees.
inline constexpr double kArcStepDegrees = 6.0;

// Traces the curves of one loop (the commands after its SOL) into a polyline in
// sketch coordinates. The returned polyline repeats its first vertex at the end
// when the loop closes. Throws OpenLoop when a line/arc chain does not return to
// its start or when a circle is mixed into a chain.
std::vector<Point2> trace_loop(std::span<const CadCommand> curves);

// Shoelace area, positive for counterclockwise loops. Expects a closed polyline.
double signed_area(std::span<const Point2> closed);

// True when no two non-adjacent edges of the closed polyline intersect.
bool is_simple(std::span<const Point2> closed);

}  // namespace cadseq::seq

namespace cadseq::seq {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Sketch plane of an extrude: world = origin + scale * ((u - 0.5) * x_axis + (v - 0.5) * y_axis)
// for sketch point (u, v); the extrusion runs along normal.
struct SketchPlane {
  Vec3 origin;
  Vec3 x_axis{1, 0, 0};
  Vec3 y_axis{0, 1, 0};
  Vec3 normal{0, 0, 1};
  double scale = 1.0;

  // Orientation R = Rz(theta) * Ry(phi) * Rx(gamma); the axes are the columns of R.
  static SketchPlane from_angles(double theta, double phi, double gamma, Vec3 origin, double scale);
  static SketchPlane from_extrude(const CadCommand& extrude);

  Vec3 to_world(Point2 sketch, double height) const;
  // Inverse of to_world: sketch coordinates plus height along the normal.
  Point2 to_sketch(Vec3 world, double* height) const;
};

struct ExtentInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// One-sided: [min(0,e1), max(0,e1)]; symmetric: [-|e1|, |e1|]; two-sided: [-|e2|, |e1|].
ExtentInterval extent_interval(double e1, double e2, ExtentType type);
ExtentInterval extent_interval(const CadCommand& extrude);

}  // namespace cadseq::seq
