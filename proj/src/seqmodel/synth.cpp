#include "cadseq/seqmodel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/quantize.hpp"
#include "cadseq/seqmodel/sketch.hpp"
#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::seq {
namespace {

constexpr double kPi = std::numbers::pi;
// The first body always contains this ball around the world origin.
constexpr double kCoreRadius = 0.08;
constexpr double kCoreMargin = 0.02;
constexpr int kMaxCurves = 12;
constexpr int kMaxHoles = 2;
constexpr int kMaxPairSize = 2 + kMaxCurves + 2 * kMaxHoles;
constexpr int kMaxFirstPairSize = 2 + kMaxCurves;

int q(Slot s, double v) { return quantize_param(v, param_range(slot_index(s))); }
double dq(Slot s, int level) { return level_value(level, param_range(slot_index(s))); }

// Pair sizes that a single sketch+extrude can take: a lone circle (3) or 5..18.
bool pair_size_ok(int s, bool first) {
  if (s == 3) return true;
  // The first outer loop needs at least four vertices and carries no holes.
  return first ? (s >= 6 && s <= kMaxFirstPairSize) : (s >= 5 && s <= kMaxPairSize);
}

bool remainder_ok(int r) { return r == 0 || r == 3 || r >= 5; }

std::vector<int> decompose(int content, Rng& rng) {
  std::vector<int> sizes;
  int remaining = content;
  while (remaining > 0) {
    const bool first = sizes.empty();
    if (!first && pair_size_ok(remaining, false) && remaining <= 8) {
      sizes.push_back(remaining);
      break;
    }
    for (;;) {
      const int s = static_cast<int>(rng.uniform_int(3, first ? kMaxFirstPairSize : kMaxPairSize));
      if (pair_size_ok(s, first) && s <= remaining && remainder_ok(remaining - s)) {
        sizes.push_back(s);
        remaining -= s;
        break;
      }
    }
  }
  return sizes;
}

double distance_to_segment(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double distance_to_polyline(Point2 p, const std::vector<Point2>& closed) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < closed.size(); ++i) {
    best = std::min(best, distance_to_segment(p, closed[i], closed[i + 1]));
  }
  return best;
}

bool inside(Point2 p, const std::vector<Point2>& closed) {
  bool in = false;
  for (std::size_t i = 0; i + 1 < closed.size(); ++i) {
    const Point2 a = closed[i], b = closed[i + 1];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x) in = !in;
    }
  }
  return in;
}

struct Loop {
  std::vector<CadCommand> curves;
  std::vector<Point2> polyline;
};

struct Sketch {
  std::vector<Loop> loops;
  Point2 center;        // interior reference point of the outer loop
  double inradius = 0;  // distance from center to the outer loop
};

std::optional<Loop> make_polygon(Rng& rng, int k, bool first, Point2* center) {
  const double s0 = loop_start_coordinate();
  const Point2 start{s0, s0};
  const double rho = first ? rng.uniform(0.25, 0.32) : rng.uniform(0.15, 0.3);
  Point2 c;
  for (int tries = 0;; ++tries) {
    if (tries > 50) return std::nullopt;
    const double w = rng.uniform(0.0, 2.0 * kPi);
    c = {start.x + rho * std::cos(w), start.y + rho * std::sin(w)};
    if (c.x > 0.1 && c.x < 0.9 && c.y > 0.1 && c.y < 0.9) break;
  }
  const double max_gap = (first ? 0.6 : 0.75) * kPi;
  const double min_gap = 0.2;
  std::vector<double> gaps(k);
  for (int tries = 0;; ++tries) {
    if (tries > 50) return std::nullopt;
    double total = 0.0;
    for (auto& g : gaps) total += (g = rng.uniform(0.5, 1.5));
    const double free = 2.0 * kPi - min_gap * k;
    bool ok = true;
    for (auto& g : gaps) {
      g = min_gap + g / total * free;
      ok = ok && g <= max_gap;
    }
    if (ok) break;
  }

  const double theta0 = std::atan2(start.y - c.y, start.x - c.x);
  std::vector<std::pair<int, int>> verts{{kLoopStartLevel, kLoopStartLevel}};
  double theta = theta0;
  for (int i = 1; i < k; ++i) {
    theta += gaps[i - 1];
    const double ux = std::cos(theta), uy = std::sin(theta);
    // Distance along the ray before leaving [0.02, 0.98]^2.
    double exit = std::numeric_limits<double>::infinity();
    if (ux > 1e-12) exit = std::min(exit, (0.98 - c.x) / ux);
    if (ux < -1e-12) exit = std::min(exit, (0.02 - c.x) / ux);
    if (uy > 1e-12) exit = std::min(exit, (0.98 - c.y) / uy);
    if (uy < -1e-12) exit = std::min(exit, (0.02 - c.y) / uy);
    const double lo = 0.7 * rho;
    const double hi = std::min(1.3 * rho, 0.95 * exit);
    const double r = hi > lo ? rng.uniform(lo, hi) : hi;
    const std::pair<int, int> v{q(Slot::X, c.x + r * ux), q(Slot::Y, c.y + r * uy)};
    if (v == verts.back()) return std::nullopt;
    verts.push_back(v);
  }

  Loop loop;
  for (int i = 0; i < k; ++i) {
    const auto& to = verts[(i + 1) % k];
    if (rng.bernoulli(0.3)) {
      const double sweep = rng.uniform(15.0, 75.0) * kPi / 180.0;
      loop.curves.push_back(
          CadCommand::arc(to.first, to.second, q(Slot::Alpha, sweep), ArcDirection::CounterClockwise));
    } else {
      loop.curves.push_back(CadCommand::line(to.first, to.second));
    }
  }
  try {
    loop.polyline = trace_loop(loop.curves);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!is_simple(loop.polyline) || signed_area(loop.polyline) < 1e-3) return std::nullopt;
  if (!inside(c, loop.polyline)) return std::nullopt;
  *center = c;
  return loop;
}

Loop make_circle(int x, int y, int r) {
  Loop loop;
  loop.curves.push_back(CadCommand::circle(x, y, r));
  loop.polyline = trace_loop(loop.curves);
  return loop;
}

std::optional<Sketch> make_sketch(Rng& rng, int size, bool first) {
  Sketch sk;
  if (size == 3 || (size == 5 && !first && rng.bernoulli(0.3))) {
    const double cx = rng.uniform(0.35, 0.65), cy = rng.uniform(0.35, 0.65);
    const double r = first ? rng.uniform(0.2, 0.3) : rng.uniform(0.1, 0.3);
    sk.loops.push_back(make_circle(q(Slot::X, cx), q(Slot::Y, cy), q(Slot::Radius, r)));
    sk.center = {dq(Slot::X, q(Slot::X, cx)), dq(Slot::Y, q(Slot::Y, cy))};
    sk.inradius = distance_to_polyline(sk.center, sk.loops.front().polyline);
    if (size == 5) {
      const double rh = dq(Slot::Radius, q(Slot::Radius, r)) * rng.uniform(0.3, 0.6);
      sk.loops.push_back(make_circle(q(Slot::X, cx), q(Slot::Y, cy), q(Slot::Radius, rh)));
    }
    return sk;
  }

  std::vector<int> hole_options;
  for (int h = 0; h <= (first ? 0 : kMaxHoles); ++h) {
    const int k = size - 2 - 2 * h;
    if (k >= (first ? 4 : 3) && k <= kMaxCurves) hole_options.push_back(h);
  }
  if (hole_options.empty()) return std::nullopt;
  const int holes = hole_options[rng.uniform_int(0, static_cast<std::int64_t>(hole_options.size()) - 1)];
  const int k = size - 2 - 2 * holes;

  auto outer = make_polygon(rng, k, first, &sk.center);
  if (!outer) return std::nullopt;
  sk.inradius = distance_to_polyline(sk.center, outer->polyline);
  sk.loops.push_back(std::move(*outer));

  std::vector<std::pair<Point2, double>> placed;
  for (int h = 0; h < holes; ++h) {
    const double offset = holes == 1 ? 0.0 : (h == 0 ? -0.45 : 0.45) * sk.inradius;
    const double radius = (holes == 1 ? 0.6 : 0.3) * sk.inradius;
    const int x = q(Slot::X, sk.center.x + offset), y = q(Slot::Y, sk.center.y);
    const int r = q(Slot::Radius, radius);
    if (r < 1) return std::nullopt;
    const Point2 hc{dq(Slot::X, x), dq(Slot::Y, y)};
    const double hr = dq(Slot::Radius, r);
    if (distance_to_polyline(hc, sk.loops.front().polyline) < hr + 0.005) return std::nullopt;
    for (const auto& [pc, pr] : placed) {
      if (std::hypot(pc.x - hc.x, pc.y - hc.y) < pr + hr + 0.005) return std::nullopt;
    }
    placed.emplace_back(hc, hr);
    sk.loops.push_back(make_circle(x, y, r));
  }
  return sk;
}

struct Orientation {
  int theta, phi, gamma;
};

Orientation draw_orientation(Rng& rng) {
  if (rng.bernoulli(0.5)) {
    // Closest representable levels to multiples of a quarter turn.
    static constexpr double kQuarter[] = {-kPi, -0.5 * kPi, 0.0, 0.5 * kPi, kPi};
    auto pick = [&](Slot s) { return q(s, kQuarter[rng.uniform_int(0, 4)]); };
    return {pick(Slot::Theta), pick(Slot::Phi), pick(Slot::Gamma)};
  }
  auto lvl = [&]() { return static_cast<int>(rng.uniform_int(0, kNumLevels - 1)); };
  return {lvl(), lvl(), lvl()};
}

SketchPlane plane_of(const Orientation& o, Vec3 origin, double scale) {
  return SketchPlane::from_angles(dq(Slot::Theta, o.theta), dq(Slot::Phi, o.phi), dq(Slot::Gamma, o.gamma),
                                  origin, scale);
}

std::optional<CadCommand> make_extrude(Rng& rng, const Sketch& sk, bool first) {
  const Orientation o = draw_orientation(rng);
  const int e2_random = static_cast<int>(rng.uniform_int(0, kNumLevels - 1));
  try {
    if (first) {
      const int s_level = q(Slot::Scale, rng.uniform(1.5, 1.95));
      const double s = dq(Slot::Scale, s_level);
      const SketchPlane axes = plane_of(o, {0, 0, 0}, s);
      // Put the sketch center on the world origin.
      const Vec3 at = axes.to_world(sk.center, 0.0);
      const int px = q(Slot::Px, -at.x), py = q(Slot::Py, -at.y), pz = q(Slot::Pz, -at.z);
      const int e1 = q(Slot::E1, rng.uniform(0.3, 0.8));
      CadCommand e = CadCommand::extrude(o.theta, o.phi, o.gamma, px, py, pz, s_level, e1, e2_random,
                                         BooleanOp::NewBody, ExtentType::Symmetric);
      const SketchPlane plane = SketchPlane::from_extrude(e);
      double h = 0.0;
      const Point2 core = plane.to_sketch({0, 0, 0}, &h);
      const ExtentInterval ext = extent_interval(e);
      const double need = kCoreRadius + kCoreMargin;
      if (h - ext.lo < need || ext.hi - h < need) return std::nullopt;
      if (!inside(core, sk.loops.front().polyline)) return std::nullopt;
      if (distance_to_polyline(core, sk.loops.front().polyline) * s < need) return std::nullopt;
      return e;
    }

    const auto op = static_cast<BooleanOp>(rng.uniform_int(0, 2));
    if (op != BooleanOp::Cut) {
      const int s_level = q(Slot::Scale, rng.uniform(0.5, 1.4));
      const int px = q(Slot::Px, rng.uniform(-0.6, 0.6));
      const int py = q(Slot::Py, rng.uniform(-0.6, 0.6));
      const int pz = q(Slot::Pz, rng.uniform(-0.6, 0.6));
      const auto ext = static_cast<ExtentType>(rng.uniform_int(0, 2));
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const int e1 = ext == ExtentType::OneSided ? q(Slot::E1, sign * rng.uniform(0.15, 0.7))
                                                 : q(Slot::E1, sign * rng.uniform(0.1, 0.5));
      const int e2 = ext == ExtentType::TwoSided ? q(Slot::E2, rng.uniform(0.1, 0.5)) : e2_random;
      return CadCommand::extrude(o.theta, o.phi, o.gamma, px, py, pz, s_level, e1, e2, op, ext);
    }

    // Cuts sit on a plane offset from the origin and extrude away from it.
    const int s_level = q(Slot::Scale, rng.uniform(0.3, 1.0));
    const double s = dq(Slot::Scale, s_level);
    const SketchPlane axes = plane_of(o, {0, 0, 0}, s);
    const double d = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 0.6);
    const double t1 = rng.uniform(-0.4, 0.4), t2 = rng.uniform(-0.4, 0.4);
    const Vec3 p{d * axes.normal.x + t1 * axes.x_axis.x + t2 * axes.y_axis.x,
                 d * axes.normal.y + t1 * axes.x_axis.y + t2 * axes.y_axis.y,
                 d * axes.normal.z + t1 * axes.x_axis.z + t2 * axes.y_axis.z};
    const int e1 = q(Slot::E1, (d > 0 ? 1.0 : -1.0) * rng.uniform(0.1, 0.6));
    CadCommand e = CadCommand::extrude(o.theta, o.phi, o.gamma, q(Slot::Px, p.x), q(Slot::Py, p.y),
                                       q(Slot::Pz, p.z), s_level, e1, e2_random, BooleanOp::Cut,
                                       ExtentType::OneSided);
    double h = 0.0;
    SketchPlane::from_extrude(e).to_sketch({0, 0, 0}, &h);
    const ExtentInterval ext = extent_interval(e);
    const double need = kCoreRadius + kCoreMargin;
    if (h > ext.lo - need && h < ext.hi + need) return std::nullopt;
    return e;
  } catch (const Error&) {
    return std::nullopt;  // a drawn position fell outside its parameter range
  }
}

}  // namespace

CadSequence synthesize_sequence(std::uint64_t seed, std::size_t length_target) {
  if (length_target < kMinTargetLength || length_target > kMaxTargetLength) {
    throw Error(ErrorCode::OutOfRange, "length target " + std::to_string(length_target) + " outside 60..256");
  }
  Rng rng(seed);
  const int content = static_cast<int>(length_target) - 1;

  for (;;) {
    const std::vector<int> sizes = decompose(content, rng);
    std::vector<CadCommand> commands;
    commands.reserve(content);
    bool ok = true;
    for (std::size_t pair = 0; pair < sizes.size() && ok; ++pair) {
      const bool first = pair == 0;
      ok = false;
      for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
        auto sketch = make_sketch(rng, sizes[pair], first);
        if (!sketch) continue;
        auto extrude = make_extrude(rng, *sketch, first);
        if (!extrude) continue;
        for (const Loop& loop : sketch->loops) {
          commands.push_back(CadCommand::sol());
          commands.insert(commands.end(), loop.curves.begin(), loop.curves.end());
        }
        commands.push_back(*extrude);
        ok = true;
      }
    }
    if (!ok) continue;
    CadSequence seq = CadSequence::from_content(commands);
    if (validate_sequence(seq).ok) return seq;
  }
}

std::size_t sample_length_target(Rng& rng) {
  const double u = rng.uniform();
  if (rng.bernoulli(0.8289)) return 61 + static_cast<std::size_t>(68.0 * u * u);
  return 129 + static_cast<std::size_t>(128.0 * u * u);
}

std::vector<SequenceRecord> synthesize_records(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t target = sample_length_target(rng);
    std::string id = std::to_string(i);
    id = "synth-" + std::string(6 - std::min<std::size_t>(6, id.size()), '0') + id;
    out.push_back({std::move(id), synthesize_sequence(rng.next_u64(), target)});
  }
  return out;
}

}  // namespace cadseq::seq
