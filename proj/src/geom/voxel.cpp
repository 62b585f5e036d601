#include "cadseq/geom/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::geom {

using seq::BooleanOp;
using seq::CadCommand;
using seq::CommandType;

VoxelSolid::VoxelSolid(int resolution)
    : resolution_(resolution),
      occ_(static_cast<std::size_t>(resolution) * resolution * resolution, 0) {
  if (resolution < 1) throw Error(ErrorCode::ConfigError, "voxel resolution must be positive");
}

std::size_t VoxelSolid::count() const {
  return static_cast<std::size_t>(std::count(occ_.begin(), occ_.end(), std::uint8_t{1}));
}

VoxelSolid combine(const VoxelSolid& acc, const VoxelSolid& tool, BooleanOp op) {
  if (acc.resolution() != tool.resolution()) throw Error(ErrorCode::ShapeMismatch, "voxel resolutions differ");
  VoxelSolid out(acc.resolution());
  const int r = acc.resolution();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      for (int k = 0; k < r; ++k) {
        const bool a = acc.at(i, j, k), t = tool.at(i, j, k);
        bool v = false;
        switch (op) {
          case BooleanOp::NewBody:
          case BooleanOp::Union: v = a || t; break;
          case BooleanOp::Cut: v = a && !t; break;
          case BooleanOp::Intersect: v = a && t; break;
        }
        out.set(i, j, k, v);
      }
    }
  }
  return out;
}

VoxelSolid rasterize_prism(const Profile& profile, seq::ExtentInterval extent, int resolution) {
  VoxelSolid out(resolution);
  // World bounding box of the prism restricts the voxels to test.
  double lo[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()};
  double hi[3] = {-lo[0], -lo[1], -lo[2]};
  for (const auto& loop : profile.loops) {
    for (const Point2& p : loop) {
      for (double h : {extent.lo, extent.hi}) {
        const Vec3 w = profile.plane.to_world(p, h);
        const double c[3] = {w.x, w.y, w.z};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], c[a]);
          hi[a] = std::max(hi[a], c[a]);
        }
      }
    }
  }
  int first[3], last[3];
  const double pitch = out.pitch();
  for (int a = 0; a < 3; ++a) {
    first[a] = std::max(0, static_cast<int>(std::floor((lo[a] + 1.0) / pitch - 0.5)));
    last[a] = std::min(resolution - 1, static_cast<int>(std::ceil((hi[a] + 1.0) / pitch - 0.5)));
  }
  for (int i = first[0]; i <= last[0]; ++i) {
    for (int j = first[1]; j <= last[1]; ++j) {
      for (int k = first[2]; k <= last[2]; ++k) {
        double h = 0.0;
        const Point2 s = profile.plane.to_sketch({out.center(i), out.center(j), out.center(k)}, &h);
        if (h < extent.lo || h > extent.hi) continue;
        if (profile.contains(s)) out.set(i, j, k, true);
      }
    }
  }
  return out;
}

VoxelSolid extrude_to_voxels(const Profile& profile, seq::ExtentInterval extent, BooleanOp op,
                             const VoxelSolid& acc) {
  VoxelSolid result = combine(acc, rasterize_prism(profile, extent, acc.resolution()), op);
  if (result.empty()) throw Error(ErrorCode::EmptyResult, "boolean operation left no occupied voxel");
  return result;
}

VoxelSolid build_solid(const seq::CadSequence& sequence, int resolution) {
  const auto report = seq::validate_sequence(sequence);
  if (!report.ok) {
    throw Error(ErrorCode::InvalidModel, "sequence fails validation: " + report.first_violation->rule);
  }
  VoxelSolid acc(resolution);
  std::size_t sketch_start = 0;
  try {
    for (std::size_t i = 0; i < sequence.content_length(); ++i) {
      const CadCommand& cmd = sequence.commands[i];
      if (cmd.type != CommandType::Extrude) continue;
      const std::span<const CadCommand> sketch(sequence.commands.data() + sketch_start, i - sketch_start);
      const Profile profile = evaluate_profile(sketch, cmd);
      acc = extrude_to_voxels(profile, seq::extent_interval(cmd), static_cast<BooleanOp>(cmd.param(seq::Slot::Boolean)),
                              acc);
      sketch_start = i + 1;
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidModel, e.what());
  }
  return acc;
}

}  // namespace cadseq::geom
