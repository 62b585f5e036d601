#include "cadseq/geom/chamfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cadseq/error.hpp"

namespace cadseq::geom {

KdTree::KdTree(const std::vector<Point3>& points) : points_(points) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<int>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Point3& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Point3& p = points_[n.point];
  best = std::min(best, squared_distance(q, p));
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  // Any point across the split is at least diff^2 away.
  if (diff * diff <= best) search(far, q, best);
}

double KdTree::nearest_squared(const Point3& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

namespace {

double directed(const PointCloud& from, const KdTree& to, ChamferVariant variant) {
  double sum = 0.0;
  for (const auto& p : from.points) {
    const double d2 = to.nearest_squared(p);
    sum += variant == ChamferVariant::Squared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const KdTree& tree_a, const PointCloud& b, const KdTree& tree_b,
                        ChamferVariant variant) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyCloud, "chamfer distance of an empty cloud");
  return directed(a, tree_b, variant) + directed(b, tree_a, variant);
}

double chamfer_distance(const PointCloud& a, const PointCloud& b, ChamferVariant variant) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyCloud, "chamfer distance of an empty cloud");
  const KdTree ta(a.points), tb(b.points);
  return chamfer_distance(a, ta, b, tb, variant);
}

}  // namespace cadseq::geom
