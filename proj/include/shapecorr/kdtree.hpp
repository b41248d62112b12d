#pragma once

#include <utility>
#include <vector>

#include "shapecorr/sparse.hpp"

namespace shapecorr {

/// Exact nearest-neighbor search over a fixed 3D point set. Ties on squared
/// distance break to the lowest point index, matching brute force exactly.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  /// (index, squared distance) of the nearest point. Throws if empty.
  std::pair<int, double> nearest(const Vec3& query) const;

  int size() const { return static_cast<int>(points_.size()); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
    int axis = 0;
    double split = 0.0;
    Vec3 box_min, box_max;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Exact nearest neighbor by brute force (tie-break: lowest index).
std::pair<int, double> nearest_point_index(const std::vector<Vec3>& points, const Vec3& query);

}  // namespace shapecorr
