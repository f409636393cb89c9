#pragma once

#include <array>
#include <string>
#include <vector>

#include "easyhec/se3.hpp"

namespace easyhec {

// Indexed triangle mesh. Construction validates indices, finiteness and a
// non-empty triangle list.
class TriangleMesh {
 public:
  using Triangle = std::array<int, 3>;

  TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
};

struct BoundingSphere {
  Vec3 center;
  double radius = 0.0;
};

// Wavefront OBJ, "v" and "f" records only. Polygons are fan-triangulated.
TriangleMesh load_obj(const std::string& path);
TriangleMesh parse_obj(std::istream& in, const std::string& source_name = "<stream>");

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& pose);

// Vertex centroid and max vertex distance; not the minimal sphere.
BoundingSphere bounding_sphere(const TriangleMesh& mesh);

// Axis-aligned box spanning [lo, hi]; 8 vertices, 12 outward-wound triangles.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

}  // namespace easyhec
