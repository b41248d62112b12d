#include "shapecorr/geodesic.hpp"

#include <limits>
#include <queue>
#include <stdexcept>

namespace shapecorr {

VecX geodesic_distances(const TriMesh& mesh, const std::vector<int>& sources) {
  if (sources.empty()) throw std::invalid_argument("geodesic_distances: empty source set");
  const double inf = std::numeric_limits<double>::infinity();
  VecX dist = VecX::Constant(mesh.n(), inf);

  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (int s : sources) {
    if (s < 0 || s >= mesh.n()) throw std::out_of_range("geodesic_distances: bad source index");
    dist[s] = 0.0;
    heap.emplace(0.0, s);
  }
  while (!heap.empty()) {
    auto [d, i] = heap.top();
    heap.pop();
    if (d > dist[i]) continue;
    for (int j : mesh.one_ring(i)) {
      double nd = d + (mesh.vertex(i) - mesh.vertex(j)).norm();
      if (nd < dist[j]) {
        dist[j] = nd;
        heap.emplace(nd, j);
      }
    }
  }
  return dist;
}

}  // namespace shapecorr
