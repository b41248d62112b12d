#include "shapecorr/shape_graph.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

#include "shapecorr/kdtree.hpp"

namespace shapecorr {

int ShapeGraph::edge_index(int a, int b) const {
  if (a > b) std::swap(a, b);
  for (int e : adjacency[a]) {
    if (edges[e].a == a && edges[e].b == b) return e;
  }
  return -1;
}

ShapeGraph build_shape_graph(const std::vector<LatentCode>& codes, int k,
                             int template_node) {
  const int n = static_cast<int>(codes.size());
  if (n < 2) throw std::invalid_argument("build_shape_graph: need at least 2 shapes");
  if (k < 1 || k >= n)
    throw std::invalid_argument("build_shape_graph: K must be in [1, collection size)");
  if (template_node < 0 || template_node >= n)
    throw std::invalid_argument("build_shape_graph: template node out of range");

  ShapeGraph g;
  g.template_node = template_node;
  g.k = k;
  g.codes = codes;

  std::set<std::pair<int, int>> selected;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.push_back({(codes[i] - codes[j]).norm(), j});
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int t = 0; t < k; ++t) {
      int j = dist[t].second;
      selected.insert({std::min(i, j), std::max(i, j)});
    }
  }
  g.adjacency.assign(n, {});
  for (const auto& [a, b] : selected) {
    int e = static_cast<int>(g.edges.size());
    g.edges.push_back({a, b, -1.0});
    g.adjacency[a].push_back(e);
    g.adjacency[b].push_back(e);
  }
  return g;
}

std::vector<int> shortest_path_tree(const ShapeGraph& graph) {
  const int n = graph.node_count();
  for (const auto& e : graph.edges)
    if (e.weight < 0.0)
      throw std::invalid_argument("shortest_path_tree: edge weights not set");

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  using Item = std::pair<double, int>;  // lower node index wins ties
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[graph.template_node] = 0.0;
  heap.emplace(0.0, graph.template_node);
  while (!heap.empty()) {
    auto [d, i] = heap.top();
    heap.pop();
    if (d > dist[i]) continue;
    for (int e : graph.adjacency[i]) {
      const auto& edge = graph.edges[e];
      int j = edge.a == i ? edge.b : edge.a;
      double nd = d + edge.weight;
      if (nd < dist[j] || (nd == dist[j] && parent[j] >= 0 && i < parent[j])) {
        dist[j] = nd;
        parent[j] = i;
        heap.emplace(nd, j);
      }
    }
  }
  std::vector<int> unreachable;
  for (int i = 0; i < n; ++i)
    if (std::isinf(dist[i])) unreachable.push_back(i);
  if (!unreachable.empty()) {
    std::string msg = "shortest_path_tree: unreachable shapes:";
    for (int i : unreachable) msg += " " + std::to_string(i);
    throw std::runtime_error(msg);
  }
  return parent;
}

std::vector<std::vector<Vec3>> propagate_correspondences(
    const ShapeGraph& graph,
    const std::map<std::pair<int, int>, EdgeCorrespondence>& edge_maps,
    const std::vector<Vec3>& template_points) {
  const int n = graph.node_count();
  std::vector<int> parent = shortest_path_tree(graph);

  // Process nodes in tree order (parents before children).
  std::vector<int> order;
  std::vector<bool> placed(n, false);
  placed[graph.template_node] = true;
  order.push_back(graph.template_node);
  while (static_cast<int>(order.size()) < n) {
    bool advanced = false;
    for (int i = 0; i < n; ++i) {
      if (placed[i] || parent[i] < 0 || !placed[parent[i]]) continue;
      order.push_back(i);
      placed[i] = true;
      advanced = true;
    }
    if (!advanced) throw std::runtime_error("propagate_correspondences: broken tree");
  }

  std::vector<std::vector<Vec3>> positions(n);
  positions[graph.template_node] = template_points;
  for (int idx = 1; idx < n; ++idx) {
    int node = order[idx];
    int from = parent[node];
    auto it = edge_maps.find({from, node});
    if (it == edge_maps.end())
      throw std::runtime_error("propagate_correspondences: missing edge map " +
                               std::to_string(from) + " -> " + std::to_string(node));
    const EdgeCorrespondence& map = it->second;
    if (map.source_points.empty() ||
        map.source_points.size() != map.target_points.size())
      throw std::invalid_argument("propagate_correspondences: malformed edge map");
    KdTree snap(map.source_points);
    positions[node].reserve(template_points.size());
    for (const Vec3& p : positions[from]) {
      int m = snap.nearest(p).first;
      positions[node].push_back(map.target_points[m]);
    }
  }
  return positions;
}

}  // namespace shapecorr
