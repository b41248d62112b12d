#include "shapecorr/simplify.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

namespace shapecorr {

namespace {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

Mat4 plane_quadric(const Vec3& unit_normal, const Vec3& point, double weight) {
  Vec4 p;
  p << unit_normal, -unit_normal.dot(point);
  return weight * (p * p.transpose());
}

double quadric_cost(const Mat4& q, const Vec3& x) {
  Vec4 h;
  h << x, 1.0;
  return h.dot(q * h);
}

constexpr double kBoundaryPenalty = 1e3;

struct Candidate {
  double cost;
  int u, v;
  Vec3 pos;
  long stamp_u, stamp_v;
};
struct CandidateCmp {
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.cost != b.cost) return a.cost > b.cost;
    if (a.u != b.u) return a.u > b.u;  // deterministic order among equal costs
    return a.v > b.v;
  }
};

}  // namespace

SimplifyResult simplify(const TriMesh& mesh, int target_faces) {
  if (target_faces < 4) throw std::invalid_argument("simplify: target_faces must be >= 4");
  if (mesh.face_count() <= target_faces) return {mesh, true, 0};

  std::vector<Vec3> pos(mesh.vertices());
  std::vector<std::array<int, 3>> faces(mesh.faces());
  std::vector<bool> face_alive(faces.size(), true);
  std::vector<bool> vert_alive(pos.size(), true);
  std::vector<std::vector<int>> vfaces(pos.size());
  for (size_t f = 0; f < faces.size(); ++f)
    for (int k = 0; k < 3; ++k) vfaces[faces[f][k]].push_back(static_cast<int>(f));

  auto face_normal = [&](int f, int replace_vertex = -1, const Vec3* replacement = nullptr) {
    Vec3 p[3];
    for (int k = 0; k < 3; ++k) {
      int vi = faces[f][k];
      p[k] = (vi == replace_vertex && replacement) ? *replacement : pos[vi];
    }
    return (p[1] - p[0]).cross(p[2] - p[0]);
  };

  // Initial quadrics: area-weighted face planes plus boundary-edge penalties.
  std::vector<Mat4> quadric(pos.size(), Mat4::Zero());
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (size_t f = 0; f < faces.size(); ++f) {
    Vec3 nrm = face_normal(static_cast<int>(f));
    double area2 = nrm.norm();
    if (area2 > 1e-300) {
      Mat4 q = plane_quadric(nrm / area2, pos[faces[f][0]], 0.5 * area2);
      for (int k = 0; k < 3; ++k) quadric[faces[f][k]] += q;
    }
    for (int k = 0; k < 3; ++k) {
      int a = faces[f][k], b = faces[f][(k + 1) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
    }
  }
  for (const auto& [e, fs] : edge_faces) {
    if (fs.size() != 1) continue;  // interior edge
    // Penalty plane through the boundary edge, perpendicular to the face.
    Vec3 a = pos[e.first], b = pos[e.second];
    Vec3 dir = b - a;
    Vec3 fn = face_normal(fs[0]);
    Vec3 pn = dir.cross(fn);
    double len = pn.norm();
    if (len < 1e-300) continue;
    Mat4 q = plane_quadric(pn / len, a, kBoundaryPenalty * dir.squaredNorm());
    quadric[e.first] += q;
    quadric[e.second] += q;
  }

  std::vector<long> stamp(pos.size(), 0);
  std::priority_queue<Candidate, std::vector<Candidate>, CandidateCmp> heap;

  auto optimal_point = [&](int u, int v, double& cost_out) -> Vec3 {
    Mat4 q = quadric[u] + quadric[v];
    Mat3 a = q.topLeftCorner<3, 3>();
    Vec3 b = q.topRightCorner<3, 1>();
    Vec3 best;
    Eigen::FullPivLU<Mat3> lu(a);
    if (lu.isInvertible()) {
      best = lu.solve(-b);
      cost_out = quadric_cost(q, best);
      return best;
    }
    Vec3 mid = 0.5 * (pos[u] + pos[v]);
    best = pos[u];
    cost_out = quadric_cost(q, best);
    for (const Vec3& cand : {pos[v], mid}) {
      double c = quadric_cost(q, cand);
      if (c < cost_out) {
        cost_out = c;
        best = cand;
      }
    }
    return best;
  };

  auto push_candidate = [&](int u, int v) {
    if (u > v) std::swap(u, v);
    double cost;
    Vec3 p = optimal_point(u, v, cost);
    heap.push({cost, u, v, p, stamp[u], stamp[v]});
  };

  auto neighbors_of = [&](int v) {
    std::set<int> nb;
    for (int f : vfaces[v]) {
      if (!face_alive[f]) continue;
      for (int k = 0; k < 3; ++k)
        if (faces[f][k] != v) nb.insert(faces[f][k]);
    }
    return nb;
  };

  for (const auto& [e, fs] : edge_faces) push_candidate(e.first, e.second);
  edge_faces.clear();

  int alive_faces = mesh.face_count();
  int collapses = 0;

  while (alive_faces > target_faces && !heap.empty()) {
    Candidate cand = heap.top();
    heap.pop();
    int u = cand.u, v = cand.v;
    if (!vert_alive[u] || !vert_alive[v]) continue;
    if (cand.stamp_u != stamp[u] || cand.stamp_v != stamp[v]) continue;

    auto nu = neighbors_of(u);
    if (!nu.count(v)) continue;  // edge vanished

    // Faces shared by u and v die with the collapse.
    std::vector<int> dying;
    for (int f : vfaces[u]) {
      if (!face_alive[f]) continue;
      const auto& t = faces[f];
      if (t[0] == v || t[1] == v || t[2] == v) dying.push_back(f);
    }
    // Link condition: common neighbors must all come from the dying faces,
    // otherwise the collapse pinches the mesh.
    auto nv = neighbors_of(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(),
                          std::back_inserter(common));
    if (common.size() != dying.size()) continue;
    if (alive_faces - static_cast<int>(dying.size()) < target_faces &&
        alive_faces - static_cast<int>(dying.size()) < 4)
      continue;  // would destroy too much

    // Orientation guard: surviving faces must not flip.
    bool flips = false;
    for (int w : {u, v}) {
      for (int f : vfaces[w]) {
        if (!face_alive[f] || flips) continue;
        const auto& t = faces[f];
        bool dies = std::find(dying.begin(), dying.end(), f) != dying.end();
        if (dies) continue;
        Vec3 before = face_normal(f);
        Vec3 after = face_normal(f, w, &cand.pos);
        if (before.norm() > 1e-300 && before.dot(after) <= 0.0) flips = true;
      }
    }
    if (flips) continue;

    // Commit: v survives at the optimal position.
    for (int f : dying) {
      face_alive[f] = false;
      --alive_faces;
    }
    for (int f : vfaces[u]) {
      if (!face_alive[f]) continue;
      for (int k = 0; k < 3; ++k)
        if (faces[f][k] == u) faces[f][k] = v;
      vfaces[v].push_back(f);
    }
    vert_alive[u] = false;
    pos[v] = cand.pos;
    quadric[v] += quadric[u];
    ++stamp[u];
    ++stamp[v];
    ++collapses;

    for (int w : neighbors_of(v)) push_candidate(v, w);
  }

  // Compact surviving geometry, preserving relative vertex order.
  std::vector<bool> used(pos.size(), false);
  for (size_t f = 0; f < faces.size(); ++f)
    if (face_alive[f])
      for (int k = 0; k < 3; ++k) used[faces[f][k]] = true;
  std::vector<int> remap(pos.size(), -1);
  std::vector<Vec3> out_verts;
  std::vector<std::array<int, 3>> out_faces;
  for (size_t i = 0; i < pos.size(); ++i) {
    if (!used[i]) continue;
    remap[i] = static_cast<int>(out_verts.size());
    out_verts.push_back(pos[i]);
  }
  for (size_t f = 0; f < faces.size(); ++f) {
    if (!face_alive[f]) continue;
    out_faces.push_back({remap[faces[f][0]], remap[faces[f][1]], remap[faces[f][2]]});
  }
  SimplifyResult result;
  result.mesh = TriMesh::from_faces(std::move(out_verts), std::move(out_faces));
  result.reached_target = result.mesh.face_count() <= target_faces;
  result.collapses = collapses;
  return result;
}

}  // namespace shapecorr
