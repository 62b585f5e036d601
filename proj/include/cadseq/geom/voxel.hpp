#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cadseq/geom/profile.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::geom {

inline constexpr int kDefaultResolution = 64;

// Occupancy over the cube [-1, 1]^3 sampled at voxel centers.
class VoxelSolid {
 public:
  explicit VoxelSolid(int resolution = kDefaultResolution);

  int resolution() const { return resolution_; }
  double pitch() const { return 2.0 / resolution_; }
  double center(int i) const { return -1.0 + (i + 0.5) * pitch(); }

  bool at(int i, int j, int k) const { return occ_[index(i, j, k)] != 0; }
  void set(int i, int j, int k, bool v) { occ_[index(i, j, k)] = v ? 1 : 0; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  double occupied_fraction() const { return static_cast<double>(count()) / static_cast<double>(occ_.size()); }

  const std::vector<std::uint8_t>& data() const { return occ_; }

  bool operator==(const VoxelSolid&) const = default;

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * resolution_ + j) * resolution_ + k;
  }

  int resolution_;
  std::vector<std::uint8_t> occ_;
};

// Voxel-level boolean combination; new-body behaves as union.
VoxelSolid combine(const VoxelSolid& acc, const VoxelSolid& tool, seq::BooleanOp op);

// Occupancy of the prism swept by the profile between heights [lo, hi].
VoxelSolid rasterize_prism(const Profile& profile, seq::ExtentInterval extent, int resolution);

// Sweeps the profile and combines it into acc. Throws EmptyResult when the
// resulting solid has no occupied voxel.
VoxelSolid extrude_to_voxels(const Profile& profile, seq::ExtentInterval extent, seq::BooleanOp op,
                             const VoxelSolid& acc);

// Evaluates every sketch/extrude pair in order. Throws InvalidModel wrapping
// the first geometric or grammatical failure.
VoxelSolid build_solid(const seq::CadSequence& seq, int resolution = kDefaultResolution);

}  // namespace cadseq::geom
