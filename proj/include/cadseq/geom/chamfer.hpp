#pragma once

#include <cstddef>
#include <vector>

#include "cadseq/geom/pointcloud.hpp"

namespace cadseq::geom {

enum class ChamferVariant { Squared, Unsquared };

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Static 3-d tree answering exact nearest-neighbour squared distances. The
// returned value is bit-identical to a linear scan using squared_distance.
class KdTree {
 public:
  explicit KdTree(const std::vector<Point3>& points);

  double nearest_squared(const Point3& q) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::vector<int>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Point3& q, double& best) const;

  std::vector<Point3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// (1/|A|) sum_a min_b d(a,b) + (1/|B|) sum_b min_a d(a,b), with d the squared
// Euclidean distance (or the plain distance for Unsquared). Throws EmptyCloud.
double chamfer_distance(const PointCloud& a, const PointCloud& b,
                        ChamferVariant variant = ChamferVariant::Squared);

// Same, reusing prebuilt trees (tree_a over a, tree_b over b).
double chamfer_distance(const PointCloud& a, const KdTree& tree_a, const PointCloud& b, const KdTree& tree_b,
                        ChamferVariant variant = ChamferVariant::Squared);

}  // namespace cadseq::geom
