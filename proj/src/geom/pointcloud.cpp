#include "cadseq/geom/pointcloud.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "cadseq/error.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::geom {

PointCloud sample_surface(const VoxelSolid& solid, std::size_t n, std::uint64_t seed) {
  const int r = solid.resolution();
  auto filled = [&](int i, int j, int k) {
    return i >= 0 && j >= 0 && k >= 0 && i < r && j < r && k < r && solid.at(i, j, k);
  };
  std::vector<std::array<int, 3>> surface;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      for (int k = 0; k < r; ++k) {
        if (!solid.at(i, j, k)) continue;
        if (!filled(i - 1, j, k) || !filled(i + 1, j, k) || !filled(i, j - 1, k) || !filled(i, j + 1, k) ||
            !filled(i, j, k - 1) || !filled(i, j, k + 1)) {
          surface.push_back({i, j, k});
        }
      }
    }
  }
  if (surface.empty()) throw Error(ErrorCode::InvalidModel, "solid has no surface voxels");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  const double pitch = solid.pitch();
  for (std::size_t s = 0; s < n; ++s) {
    const auto& v = surface[rng.uniform_int(0, static_cast<std::int64_t>(surface.size()) - 1)];
    Point3 p;
    for (int a = 0; a < 3; ++a) p[a] = -1.0 + (v[a] + rng.uniform()) * pitch;
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud sequence_to_pointcloud(const seq::CadSequence& seq, std::size_t n, std::uint64_t seed, int resolution) {
  return sample_surface(build_solid(seq, resolution), n, seed);
}

void write_pointcloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  char buf[96];
  for (const auto& p : cloud.points) {
    const int len = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out.write(buf, len);
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

PointCloud read_pointcloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Point3 p;
    if (!(ls >> p[0] >> p[1] >> p[2])) throw Error(ErrorCode::SyntaxError, "bad point line: " + line);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace cadseq::geom
