#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cadseq/geom/voxel.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::geom {

inline constexpr std::size_t kDefaultCloudSize = 2000;

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

// Uniform samples on the boundary voxels (those with an empty 6-neighbour or
// touching the grid edge), jittered uniformly inside each chosen voxel.
PointCloud sample_surface(const VoxelSolid& solid, std::size_t n, std::uint64_t seed);

// Builds the solid and samples its surface. Throws InvalidModel.
PointCloud sequence_to_pointcloud(const seq::CadSequence& seq, std::size_t n = kDefaultCloudSize,
                                  std::uint64_t seed = 0, int resolution = kDefaultResolution);

// Text file, one "x y z" triple per line with 9 significant digits.
void write_pointcloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_pointcloud(const std::filesystem::path& path);

}  // namespace cadseq::geom
