#include "cadseq/seqmodel/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/quantize.hpp"

namespace cadseq::seq {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCloseTolerance = 1e-9;

double value_of(const CadCommand& c, Slot s) { return level_value(c.param(s), param_range(slot_index(s))); }

bool same_point(Point2 a, Point2 b) {
  return std::abs(a.x - b.x) <= kCloseTolerance && std::abs(a.y - b.y) <= kCloseTolerance;
}

void append_distinct(std::vector<Point2>& pts, Point2 p) {
  if (pts.empty() || !same_point(pts.back(), p)) pts.push_back(p);
}

void append_arc(std::vector<Point2>& pts, Point2 from, Point2 to, double sweep, ArcDirection dir) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double chord = std::hypot(dx, dy);
  if (chord <= kCloseTolerance || sweep <= 1e-12 || sweep >= 2.0 * kPi - 1e-12) {
    // Degenerate arcs (zero sweep, full turn, or coincident ends) collapse to the chord.
    append_distinct(pts, to);
    return;
  }
  const double sign = dir == ArcDirection::CounterClockwise ? 1.0 : -1.0;
  const Point2 mid{0.5 * (from.x + to.x), 0.5 * (from.y + to.y)};
  const Point2 left{-dy / chord, dx / chord};
  const double offset = 0.5 * chord / std::tan(0.5 * sweep);
  const Point2 center{mid.x + sign * offset * left.x, mid.y + sign * offset * left.y};
  const double radius = std::hypot(from.x - center.x, from.y - center.y);
  const double start = std::atan2(from.y - center.y, from.x - center.x);
  const int steps = std::max(1, static_cast<int>(std::ceil(sweep / (kArcStepDegrees * kPi / 180.0) - 1e-9)));
  for (int k = 1; k < steps; ++k) {
    const double a = start + sign * sweep * static_cast<double>(k) / steps;
    append_distinct(pts, {center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  append_distinct(pts, to);
}

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point2 p, Point2 a, Point2 b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

Vec3 rotate(const double (&r)[3][3], Vec3 v) {
  return {r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z, r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
          r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z};
}

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

}  // namespace

double loop_start_coordinate() { return level_value(kLoopStartLevel, param_range(slot_index(Slot::X))); }

std::vector<Point2> trace_loop(std::span<const CadCommand> curves) {
  std::vector<Point2> pts;
  if (curves.empty()) throw Error(ErrorCode::OpenLoop, "loop has no curves");

  if (curves.front().type == CommandType::Circle) {
    if (curves.size() != 1) throw Error(ErrorCode::OpenLoop, "circle mixed into a curve chain");
    const CadCommand& c = curves.front();
    const double cx = value_of(c, Slot::X);
    const double cy = value_of(c, Slot::Y);
    const double r = value_of(c, Slot::Radius);
    pts.reserve(kCircleSegments + 1);
    for (int k = 0; k < kCircleSegments; ++k) {
      const double a = 2.0 * kPi * k / kCircleSegments;
      pts.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    pts.push_back(pts.front());
    return pts;
  }

  const double s = loop_start_coordinate();
  const Point2 start{s, s};
  pts.push_back(start);
  Point2 cur = start;
  for (const CadCommand& c : curves) {
    const Point2 end{value_of(c, Slot::X), value_of(c, Slot::Y)};
    switch (c.type) {
      case CommandType::Line:
        append_distinct(pts, end);
        break;
      case CommandType::Arc:
        append_arc(pts, cur, end, value_of(c, Slot::Alpha),
                   static_cast<ArcDirection>(c.param(Slot::Flag)));
        break;
      case CommandType::Circle:
        throw Error(ErrorCode::OpenLoop, "circle mixed into a curve chain");
      default:
        throw Error(ErrorCode::OpenLoop, "non-curve command inside a loop");
    }
    cur = end;
  }
  if (!same_point(cur, start)) throw Error(ErrorCode::OpenLoop, "loop does not return to its start point");
  pts.back() = start;
  if (pts.size() < 4) throw Error(ErrorCode::DegenerateLoop, "loop has fewer than 3 distinct vertices");
  return pts;
}

double signed_area(std::span<const Point2> closed) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < closed.size(); ++i) {
    acc += closed[i].x * closed[i + 1].y - closed[i + 1].x * closed[i].y;
  }
  return 0.5 * acc;
}

bool is_simple(std::span<const Point2> closed) {
  const std::size_t edges = closed.size() < 2 ? 0 : closed.size() - 1;
  if (edges < 3) return false;
  for (std::size_t i = 0; i < edges; ++i) {
    for (std::size_t j = i + 1; j < edges; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == edges - 1);
      if (adjacent) continue;
      if (segments_intersect(closed[i], closed[i + 1], closed[j], closed[j + 1])) return false;
    }
  }
  return true;
}

SketchPlane SketchPlane::from_angles(double theta, double phi, double gamma, Vec3 origin, double scale) {
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(phi), sp = std::sin(phi);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  // Rz(theta) * Ry(phi) * Rx(gamma)
  const double r[3][3] = {
      {ct * cp, ct * sp * sg - st * cg, ct * sp * cg + st * sg},
      {st * cp, st * sp * sg + ct * cg, st * sp * cg - ct * sg},
      {-sp, cp * sg, cp * cg},
  };
  SketchPlane plane;
  plane.origin = origin;
  plane.x_axis = rotate(r, {1, 0, 0});
  plane.y_axis = rotate(r, {0, 1, 0});
  plane.normal = rotate(r, {0, 0, 1});
  plane.scale = scale;
  return plane;
}

SketchPlane SketchPlane::from_extrude(const CadCommand& e) {
  return from_angles(value_of(e, Slot::Theta), value_of(e, Slot::Phi), value_of(e, Slot::Gamma),
                     {value_of(e, Slot::Px), value_of(e, Slot::Py), value_of(e, Slot::Pz)},
                     value_of(e, Slot::Scale));
}

Vec3 SketchPlane::to_world(Point2 p, double height) const {
  const double u = scale * (p.x - 0.5);
  const double v = scale * (p.y - 0.5);
  return {origin.x + u * x_axis.x + v * y_axis.x + height * normal.x,
          origin.y + u * x_axis.y + v * y_axis.y + height * normal.y,
          origin.z + u * x_axis.z + v * y_axis.z + height * normal.z};
}

Point2 SketchPlane::to_sketch(Vec3 w, double* height) const {
  const Vec3 d{w.x - origin.x, w.y - origin.y, w.z - origin.z};
  if (height) *height = dot(d, normal);
  return {dot(d, x_axis) / scale + 0.5, dot(d, y_axis) / scale + 0.5};
}

ExtentInterval extent_interval(double e1, double e2, ExtentType type) {
  switch (type) {
    case ExtentType::OneSided: return {std::min(0.0, e1), std::max(0.0, e1)};
    case ExtentType::Symmetric: return {-std::abs(e1), std::abs(e1)};
    case ExtentType::TwoSided: return {-std::abs(e2), std::abs(e1)};
  }
  return {0.0, 0.0};
}

ExtentInterval extent_interval(const CadCommand& e) {
  return extent_interval(value_of(e, Slot::E1), value_of(e, Slot::E2),
                         static_cast<ExtentType>(e.param(Slot::Extent)));
}

}  // namespace cadseq::seq
