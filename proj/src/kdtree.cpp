#include "shapecorr/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace shapecorr {

namespace {
constexpr int kLeafSize = 8;

double box_dist2(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    double d = std::max({lo[a] - q[a], q[a] - hi[a], 0.0});
    d2 += d * d;
  }
  return d2;
}
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("KdTree: empty point set");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.box_min = node.box_max = points_[order_[begin]];
  for (int k = begin + 1; k < end; ++k) {
    node.box_min = node.box_min.cwiseMin(points_[order_[k]]);
    node.box_max = node.box_max.cwiseMax(points_[order_[k]]);
  }
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;

  Vec3 extent = node.box_max - node.box_min;
  int axis = 0;
  if (extent[1] > extent[axis]) axis = 1;
  if (extent[2] > extent[axis]) axis = 2;
  int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  int left = build(begin, mid);
  int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const Vec3& q, int& best, double& best_d2) const {
  const Node& node = nodes_[node_id];
  // Strictly-greater pruning keeps equal-distance candidates reachable so the
  // lowest-index tie-break is exact.
  if (box_dist2(q, node.box_min, node.box_max) > best_d2) return;
  if (node.left < 0) {
    for (int k = node.begin; k < node.end; ++k) {
      int i = order_[k];
      double d2 = (points_[i] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
        best_d2 = d2;
        best = i;
      }
    }
    return;
  }
  if (q[node.axis] < node.split) {
    search(node.left, q, best, best_d2);
    search(node.right, q, best, best_d2);
  } else {
    search(node.right, q, best, best_d2);
    search(node.left, q, best, best_d2);
  }
}

std::pair<int, double> KdTree::nearest(const Vec3& query) const {
  int best = std::numeric_limits<int>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_d2);
  return {best, best_d2};
}

std::pair<int, double> nearest_point_index(const std::vector<Vec3>& points, const Vec3& query) {
  if (points.empty()) throw std::invalid_argument("nearest_point_index: empty point set");
  int best = 0;
  double best_d2 = (points[0] - query).squaredNorm();
  for (int i = 1; i < static_cast<int>(points.size()); ++i) {
    double d2 = (points[i] - query).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, best_d2};
}

}  // namespace shapecorr
