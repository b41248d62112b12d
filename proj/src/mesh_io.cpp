#include "shapecorr/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace shapecorr {

namespace {

std::string lower_ext(const std::string& path) {
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::ifstream open_or_throw(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

TriMesh load_mesh(const std::string& path) {
  std::string ext = lower_ext(path);
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  // Sniff: PLY files start with the magic "ply".
  std::ifstream probe = open_or_throw(path, true);
  char magic[3] = {};
  probe.read(magic, 3);
  if (std::strncmp(magic, "ply", 3) == 0) return load_ply(path);
  return load_obj(path);
}

TriMesh load_obj(const std::string& path) {
  std::ifstream in = open_or_throw(path, false);
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v[0] >> v[1] >> v[2]))
        throw FormatError(path, lineno, "malformed vertex line");
      vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // "i", "i/t", "i//n", "i/t/n" -- only the vertex index is used.
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int i;
        try {
          i = std::stoi(head);
        } catch (const std::exception&) {
          throw FormatError(path, lineno, "malformed face index '" + tok + "'");
        }
        if (i < 0) i = static_cast<int>(vertices.size()) + i + 1;  // relative index
        if (i < 1 || i > static_cast<int>(vertices.size()))
          throw FormatError(path, lineno,
                            "face index " + head + " out of range (OBJ indices are 1-based)");
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) throw FormatError(path, lineno, "face with fewer than 3 vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k)  // fan-triangulate polygons
        faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vn/vt/usemtl/... ignored
  }
  try {
    return TriMesh::from_faces(std::move(vertices), std::move(faces));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path, lineno, e.what());
  }
}

namespace {

enum class PlyScalar { Char, UChar, Short, UShort, Int, UInt, Float, Double };

size_t ply_scalar_size(PlyScalar t) {
  switch (t) {
    case PlyScalar::Char:
    case PlyScalar::UChar: return 1;
    case PlyScalar::Short:
    case PlyScalar::UShort: return 2;
    case PlyScalar::Int:
    case PlyScalar::UInt:
    case PlyScalar::Float: return 4;
    case PlyScalar::Double: return 8;
  }
  return 0;
}

PlyScalar ply_scalar_from(const std::string& name, const std::string& path, long lineno) {
  if (name == "char" || name == "int8") return PlyScalar::Char;
  if (name == "uchar" || name == "uint8") return PlyScalar::UChar;
  if (name == "short" || name == "int16") return PlyScalar::Short;
  if (name == "ushort" || name == "uint16") return PlyScalar::UShort;
  if (name == "int" || name == "int32") return PlyScalar::Int;
  if (name == "uint" || name == "uint32") return PlyScalar::UInt;
  if (name == "float" || name == "float32") return PlyScalar::Float;
  if (name == "double" || name == "float64") return PlyScalar::Double;
  throw FormatError(path, lineno, "unknown PLY scalar type '" + name + "'");
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyScalar count_type = PlyScalar::UChar;
  PlyScalar value_type = PlyScalar::Float;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
};

double read_binary_scalar(std::istream& in, PlyScalar t) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), ply_scalar_size(t));
  switch (t) {
    case PlyScalar::Char: return static_cast<double>(static_cast<int8_t>(buf[0]));
    case PlyScalar::UChar: return static_cast<double>(buf[0]);
    case PlyScalar::Short: {
      int16_t v;
      std::memcpy(&v, buf, 2);
      return v;
    }
    case PlyScalar::UShort: {
      uint16_t v;
      std::memcpy(&v, buf, 2);
      return v;
    }
    case PlyScalar::Int: {
      int32_t v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyScalar::UInt: {
      uint32_t v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyScalar::Float: {
      float v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyScalar::Double: {
      double v;
      std::memcpy(&v, buf, 8);
      return v;
    }
  }
  return 0.0;
}

}  // namespace

TriMesh load_ply(const std::string& path) {
  std::ifstream in = open_or_throw(path, true);
  std::string line;
  long lineno = 0;

  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) throw FormatError(path, lineno, "unexpected end of header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw FormatError(path, lineno, "missing 'ply' magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  while (true) {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag;
    if (tag == "comment" || tag.empty()) continue;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw FormatError(path, lineno, "unsupported PLY format '" + fmt + "'");
    } else if (tag == "element") {
      PlyElement el;
      if (!(ls >> el.name >> el.count)) throw FormatError(path, lineno, "malformed element");
      elements.push_back(el);
    } else if (tag == "property") {
      if (elements.empty()) throw FormatError(path, lineno, "property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        p.is_list = true;
        std::string ct, vt;
        if (!(ls >> ct >> vt >> p.name)) throw FormatError(path, lineno, "malformed list property");
        p.count_type = ply_scalar_from(ct, path, lineno);
        p.value_type = ply_scalar_from(vt, path, lineno);
      } else {
        if (!(ls >> p.name)) throw FormatError(path, lineno, "malformed property");
        p.value_type = ply_scalar_from(type, path, lineno);
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    } else {
      throw FormatError(path, lineno, "unknown header line '" + tag + "'");
    }
  }

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  auto ascii_tokens_for = [&](const PlyElement&) -> std::istringstream {
    if (!std::getline(in, line)) throw FormatError(path, lineno, "unexpected end of data");
    ++lineno;
    return std::istringstream(line);
  };

  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1;
    for (size_t p = 0; p < el.props.size(); ++p) {
      if (el.props[p].name == "x") ix = static_cast<int>(p);
      if (el.props[p].name == "y") iy = static_cast<int>(p);
      if (el.props[p].name == "z") iz = static_cast<int>(p);
    }
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0))
      throw FormatError(path, lineno, "vertex element lacks x/y/z properties");

    for (long r = 0; r < el.count; ++r) {
      std::vector<double> scalars(el.props.size(), 0.0);
      std::vector<long> list_values;
      std::istringstream ls;
      if (!binary) ls = ascii_tokens_for(el);
      for (size_t p = 0; p < el.props.size(); ++p) {
        const auto& prop = el.props[p];
        if (prop.is_list) {
          long cnt;
          if (binary) {
            cnt = static_cast<long>(read_binary_scalar(in, prop.count_type));
          } else if (!(ls >> cnt)) {
            throw FormatError(path, lineno, "malformed list count");
          }
          std::vector<long> vals(cnt);
          for (long c = 0; c < cnt; ++c) {
            if (binary) {
              vals[c] = static_cast<long>(read_binary_scalar(in, prop.value_type));
            } else if (!(ls >> vals[c])) {
              throw FormatError(path, lineno, "malformed list entry");
            }
          }
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
            list_values = std::move(vals);
        } else {
          if (binary) {
            scalars[p] = read_binary_scalar(in, prop.value_type);
          } else if (!(ls >> scalars[p])) {
            throw FormatError(path, lineno, "malformed scalar entry");
          }
        }
      }
      if (binary && !in)
        throw FormatError(path, static_cast<long>(in.tellg()), "unexpected end of data", true);
      if (is_vertex) vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
      if (is_face) {
        if (list_values.size() < 3) throw FormatError(path, lineno, "face with < 3 indices");
        for (size_t k = 1; k + 1 < list_values.size(); ++k)
          faces.push_back({static_cast<int>(list_values[0]), static_cast<int>(list_values[k]),
                           static_cast<int>(list_values[k + 1])});
      }
    }
  }
  try {
    return TriMesh::from_faces(std::move(vertices), std::move(faces));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path, lineno, e.what());
  }
}

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices()) out << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
  for (const auto& f : mesh.faces())
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

void save_ply(const TriMesh& mesh, const std::string& path, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << mesh.n() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.face_count() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  if (binary) {
    for (const auto& v : mesh.vertices())
      out.write(reinterpret_cast<const char*>(v.data()), 3 * sizeof(double));
    for (const auto& f : mesh.faces()) {
      unsigned char cnt = 3;
      out.write(reinterpret_cast<const char*>(&cnt), 1);
      int32_t idx[3] = {f[0], f[1], f[2]};
      out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
  } else {
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices()) out << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const auto& f : mesh.faces()) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  }
}

void save_ply_colored(const TriMesh& mesh, const std::vector<std::array<uint8_t, 3>>& colors,
                      const std::string& path) {
  if (static_cast<int>(colors.size()) != mesh.n())
    throw std::invalid_argument("save_ply_colored: color count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.n() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.face_count() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  out << std::setprecision(17);
  for (int i = 0; i < mesh.n(); ++i) {
    const Vec3& v = mesh.vertex(i);
    out << v[0] << " " << v[1] << " " << v[2] << " " << int(colors[i][0]) << " "
        << int(colors[i][1]) << " " << int(colors[i][2]) << "\n";
  }
  for (const auto& f : mesh.faces()) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
}

CorrPairs load_correspondences(const std::string& path) {
  std::ifstream in = open_or_throw(path, true);
  char magic[8] = {};
  in.read(magic, 8);
  CorrPairs pairs;
  if (in.gcount() == 8 && std::strncmp(magic, "CORRv001", 8) == 0) {
    uint32_t buf[2];
    while (in.read(reinterpret_cast<char*>(buf), 8)) pairs.emplace_back(buf[0], buf[1]);
    if (in.gcount() != 0)
      throw FormatError(path, static_cast<long>(8 + pairs.size() * 8), "truncated pair", true);
    return pairs;
  }
  in.clear();
  in.seekg(0);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long a, b;
    if (!(ls >> a >> b) || a < 0 || b < 0)
      throw FormatError(path, lineno, "expected 'src_index tgt_index'");
    pairs.emplace_back(static_cast<uint32_t>(a), static_cast<uint32_t>(b));
  }
  return pairs;
}

void save_correspondences_text(const CorrPairs& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& [a, b] : pairs) out << a << " " << b << "\n";
}

void save_correspondences_binary(const CorrPairs& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write("CORRv001", 8);
  for (const auto& [a, b] : pairs) {
    uint32_t buf[2] = {a, b};
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
}

}  // namespace shapecorr
