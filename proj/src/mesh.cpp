#include "easyhec/mesh.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "easyhec/error.hpp"

namespace easyhec {

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  if (triangles_.empty()) throw ValidationError("mesh has no triangles");
  for (const auto& v : vertices_) {
    if (!v.allFinite()) throw ValidationError("mesh has non-finite vertex coordinates");
  }
  const int n = static_cast<int>(vertices_.size());
  for (const auto& tri : triangles_) {
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("triangle index " + std::to_string(idx) +
                              " out of range for " + std::to_string(n) + " vertices");
      }
    }
  }
}

namespace {

// OBJ face token "i", "i/t", "i//n" or "i/t/n"; returns the 0-based vertex index.
int resolve_index(const std::string& token, int vertex_count, const std::string& where) {
  const std::string head = token.substr(0, token.find('/'));
  long value = 0;
  try {
    std::size_t used = 0;
    value = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ParseError(where + ": bad face index '" + token + "'");
  }
  if (value == 0) throw ParseError(where + ": face index 0 is not valid in OBJ");
  const long resolved = value > 0 ? value - 1 : vertex_count + value;
  if (resolved < 0 || resolved >= vertex_count) {
    throw ValidationError(where + ": face index " + token + " out of range (" +
                          std::to_string(vertex_count) + " vertices so far)");
  }
  return static_cast<int>(resolved);
}

}  // namespace

TriangleMesh parse_obj(std::istream& in, const std::string& source_name) {
  std::vector<Vec3> vertices;
  std::vector<TriangleMesh::Triangle> triangles;
  std::string line;
  int line_no = 0;
  bool warned = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source_name + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw ParseError(where + ": expected three coordinates after 'v'");
      }
      vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        idx.push_back(resolve_index(tok, static_cast<int>(vertices.size()), where));
      }
      if (idx.size() < 3) throw ParseError(where + ": face needs at least 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    } else if (tag == "vn" || tag == "vt" || tag == "vp" || tag == "usemtl" ||
               tag == "mtllib" || tag == "o" || tag == "g" || tag == "s" || tag == "l") {
      if (!warned) {
        spdlog::warn("{}: ignoring non-geometry OBJ record '{}'", where, tag);
        warned = true;
      }
    } else {
      throw ParseError(where + ": unknown OBJ record '" + tag + "'");
    }
  }
  return TriangleMesh(std::move(vertices), std::move(triangles));
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ file: " + path);
  return parse_obj(in, path);
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& pose) {
  std::vector<Vec3> moved;
  moved.reserve(mesh.vertices().size());
  for (const auto& v : mesh.vertices()) moved.push_back(pose.apply(v));
  return TriangleMesh(std::move(moved), mesh.triangles());
}

BoundingSphere bounding_sphere(const TriangleMesh& mesh) {
  BoundingSphere s;
  s.center = Vec3::Zero();
  for (const auto& v : mesh.vertices()) s.center += v;
  s.center /= static_cast<double>(mesh.vertices().size());
  for (const auto& v : mesh.vertices()) s.radius = std::max(s.radius, (v - s.center).norm());
  return s;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                   (i & 4) ? hi.z() : lo.z());
  }
  std::vector<TriangleMesh::Triangle> t = {
      {0, 2, 1}, {1, 2, 3},  // z = lo
      {4, 5, 6}, {5, 7, 6},  // z = hi
      {0, 1, 4}, {1, 5, 4},  // y = lo
      {2, 6, 3}, {3, 6, 7},  // y = hi
      {0, 4, 2}, {2, 4, 6},  // x = lo
      {1, 3, 5}, {3, 7, 5},  // x = hi
  };
  return TriangleMesh(std::move(v), std::move(t));
}

}  // namespace easyhec
