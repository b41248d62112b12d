#include "shapecorr/marching_cubes.hpp"

#include <thread>
#include <unordered_map>
#include <vector>

namespace shapecorr {

VoxelGrid::VoxelGrid(Vec3 origin_, Vec3 spacing_, std::array<int, 3> dims_)
    : origin(std::move(origin_)), spacing(std::move(spacing_)), dims(dims_) {
  for (int a = 0; a < 3; ++a) {
    if (spacing[a] <= 0.0) throw std::invalid_argument("VoxelGrid: spacing must be > 0");
    if (dims[a] < 2) throw std::invalid_argument("VoxelGrid: need >= 2 nodes per axis");
  }
}

VoxelGrid VoxelGrid::from_box(const Vec3& lo, const Vec3& hi, std::array<int, 3> dims) {
  Vec3 spacing;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw std::invalid_argument("VoxelGrid: need >= 2 nodes per axis");
    spacing[a] = (hi[a] - lo[a]) / (dims[a] - 1);
  }
  return VoxelGrid(lo, spacing, dims);
}

namespace {

// Cube corners are numbered b = x + 2y + 4z; edges join corners differing in
// one bit. The per-case triangulations (triples of edge ids) are generated
// once from a marching-squares pass over the six faces: on each face the
// crossings pair up exit->entry walking the face cycle backward, which keeps
// ambiguous (saddle) faces consistent between the two cells sharing them and
// guarantees closed loops inside the cube.

constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x-aligned
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y-aligned
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z-aligned
};

// (node offset of the low corner, axis) per edge.
constexpr int kEdgeBase[12][4] = {
    {0, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 1, 1, 0},
    {0, 0, 0, 1}, {1, 0, 0, 1}, {0, 0, 1, 1}, {1, 0, 1, 1},
    {0, 0, 0, 2}, {1, 0, 0, 2}, {0, 1, 0, 2}, {1, 1, 0, 2},
};

// Face corner cycles, counterclockwise seen from outside the cube.
constexpr int kFaceCycle[6][4] = {
    {0, 4, 6, 2},  // x = 0
    {1, 3, 7, 5},  // x = 1
    {0, 1, 5, 4},  // y = 0
    {2, 6, 7, 3},  // y = 1
    {0, 2, 3, 1},  // z = 0
    {4, 5, 7, 6},  // z = 1
};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((kEdgeCorners[e][0] == a && kEdgeCorners[e][1] == b) ||
        (kEdgeCorners[e][0] == b && kEdgeCorners[e][1] == a))
      return e;
  }
  return -1;
}

using CaseTable = std::vector<std::array<int, 3>>;

std::array<CaseTable, 256> build_case_tables() {
  std::array<CaseTable, 256> tables;
  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [&](int corner) { return (mask >> corner) & 1; };
    int out_link[12];
    bool has_out[12] = {};
    for (int f = 0; f < 6; ++f) {
      const int* cyc = kFaceCycle[f];
      bool crossing[4];
      bool is_exit[4];
      for (int t = 0; t < 4; ++t) {
        int a = cyc[t], b = cyc[(t + 1) % 4];
        crossing[t] = inside(a) != inside(b);
        is_exit[t] = inside(a) && !inside(b);
      }
      for (int t = 0; t < 4; ++t) {
        if (!crossing[t] || !is_exit[t]) continue;
        for (int back = 1; back <= 3; ++back) {
          int s = (t - back + 4) % 4;
          if (!crossing[s]) continue;
          int from = edge_between(cyc[t], cyc[(t + 1) % 4]);
          int to = edge_between(cyc[s], cyc[(s + 1) % 4]);
          out_link[from] = to;
          has_out[from] = true;
          break;
        }
      }
    }
    CaseTable tris;
    bool visited[12] = {};
    for (int start = 0; start < 12; ++start) {
      if (!has_out[start] || visited[start]) continue;
      std::vector<int> loop;
      int e = start;
      do {
        loop.push_back(e);
        visited[e] = true;
        e = out_link[e];
      } while (e != start);
      // Traced loops bound the negative region with inward orientation; emit
      // fans flipped so normals point toward positive field values.
      for (size_t i = 1; i + 1 < loop.size(); ++i)
        tris.push_back({loop[0], loop[i + 1], loop[i]});
    }
    tables[mask] = std::move(tris);
  }
  return tables;
}

const std::array<CaseTable, 256>& case_tables() {
  static const std::array<CaseTable, 256> tables = build_case_tables();
  return tables;
}

}  // namespace

ExtractResult marching_cubes(const ImplicitGenerator& gen, const LatentCode& z,
                             const VoxelGrid& grid, int threads) {
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  auto node_index = [ny, nz](int i, int j, int k) {
    return (static_cast<long long>(i) * ny + j) * nz + k;
  };

  std::vector<double> values(static_cast<size_t>(nx) * ny * nz);
  auto eval_slabs = [&](int i_begin, int i_end) {
    for (int i = i_begin; i < i_end; ++i)
      for (int j = 0; j < ny; ++j)
        for (int k = 0; k < nz; ++k)
          values[node_index(i, j, k)] = gen.eval(grid.node(i, j, k), z);
  };
  if (threads <= 1) {
    eval_slabs(0, nx);
  } else {
    std::vector<std::thread> pool;
    int per = (nx + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      int b = t * per, e = std::min(nx, b + per);
      if (b < e) pool.emplace_back(eval_slabs, b, e);
    }
    for (auto& th : pool) th.join();
  }

  bool clipped = false;
  for (int i = 0; i < nx && !clipped; ++i)
    for (int j = 0; j < ny && !clipped; ++j)
      for (int k = 0; k < nz && !clipped; ++k) {
        if (i != 0 && i != nx - 1 && j != 0 && j != ny - 1 && k != 0 && k != nz - 1)
          continue;
        if (values[node_index(i, j, k)] < 0.0) clipped = true;
      }

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::unordered_map<long long, int> edge_vertex;

  auto vertex_on_edge = [&](int ci, int cj, int ck, int edge) {
    const int* base = kEdgeBase[edge];
    int gi = ci + base[0], gj = cj + base[1], gk = ck + base[2];
    int axis = base[3];
    long long key = node_index(gi, gj, gk) * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double fa = values[node_index(gi, gj, gk)];
    int gi2 = gi + (axis == 0), gj2 = gj + (axis == 1), gk2 = gk + (axis == 2);
    double fb = values[node_index(gi2, gj2, gk2)];
    double t = fa / (fa - fb);
    Vec3 pa = grid.node(gi, gj, gk), pb = grid.node(gi2, gj2, gk2);
    int id = static_cast<int>(vertices.size());
    vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };

  const auto& tables = case_tables();
  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      for (int k = 0; k + 1 < nz; ++k) {
        int mask = 0;
        for (int b = 0; b < 8; ++b) {
          double v = values[node_index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1))];
          if (v < 0.0) mask |= 1 << b;
        }
        if (mask == 0 || mask == 255) continue;
        for (const auto& tri : tables[mask]) {
          int v0 = vertex_on_edge(i, j, k, tri[0]);
          int v1 = vertex_on_edge(i, j, k, tri[1]);
          int v2 = vertex_on_edge(i, j, k, tri[2]);
          faces.push_back({v0, v1, v2});
        }
      }

  if (faces.empty())
    throw EmptySurfaceError("marching_cubes: level set does not intersect the grid");

  ExtractResult result;
  result.mesh = TriMesh::from_faces(std::move(vertices), std::move(faces));
  result.clipped = clipped;
  return result;
}

}  // namespace shapecorr
