#pragma once

// Pinhole projection and silhouette rasterization.
//
// Pixel (col, row) has its center at (col + 0.5, row + 0.5) in the image
// plane, with u growing right and v growing down.
//
// The soft rasterizer follows the sigmoid-of-squared-distance model:
//   D_f(p) = sigmoid(s * d(p, f)^2 / sigma),  s = +1 inside, -1 outside
//   S_l(p) = 1 - prod_f (1 - D_f(p))
//   M(p)   = min(1, sum_l S_l(p))
// where d is the screen-space distance to the triangle boundary divided by
// the image diagonal. Terms with |s d^2 / sigma| > kSoftCutoff are treated
// as saturated (D = 0 outside, D = 1 inside).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "easyhec/mesh.hpp"
#include "easyhec/se3.hpp"

namespace easyhec {

inline constexpr double kSoftCutoff = 30.0;
inline constexpr double kDefaultSigma = 1e-4;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double near = 0.01;

  void validate() const;
  double diagonal() const;
  // Same field of view resampled to a new resolution.
  CameraIntrinsics scaled_to(int new_width, int new_height) const;
};

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  double& at(int col, int row) { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  double at(int col, int row) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double sum() const;
  bool same_shape(const Mask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  // Every value finite and in [0, 1].
  bool valid() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

// Throws InvalidArgument when p.z() <= near.
Vec2 project_point(const CameraIntrinsics& k, const Vec3& p_cam);

struct BoundaryDistance {
  double distance = 0.0;  // normalized by the image diagonal
  bool inside = false;
  int edge = 0;           // edge index (0: ab, 1: bc, 2: ca) realizing the minimum
  double t = 0.0;         // closest point = start + t * (end - start)
};

// Distance from a pixel to the triangle boundary. Returns nullopt when the
// triangle's normalized area is <= 1e-12 (callers skip the triangle).
std::optional<BoundaryDistance> boundary_distance(const Vec2& pixel, const Vec2& a, const Vec2& b,
                                                  const Vec2& c, double diagonal);

// Binary silhouette; triangles with any vertex at z <= near are discarded.
Mask render_hard_mask(std::span<const TriangleMesh> links_cam, const CameraIntrinsics& k);

Mask render_soft_mask(std::span<const TriangleMesh> links_cam, const CameraIntrinsics& k,
                      double sigma);

// Sum over pixels of (soft render - observed)^2 and, optionally, its
// gradient with respect to every projected vertex (u, v) of every link.
// The clamp min(1, .) takes subgradient 1 when sum_l S_l <= 1, else 0.
struct SilhouetteResidual {
  double sum_sq = 0.0;
  std::vector<std::vector<Vec2>> vertex_grad;  // [link][vertex]
};

SilhouetteResidual soft_silhouette_residual(std::span<const TriangleMesh> links_cam,
                                            const CameraIntrinsics& k, double sigma,
                                            const Mask& observed, bool with_grad);

// P5 PGM (8-bit). Values are quantized to round(255 v).
void save_pgm(const std::string& path, const Mask& mask);
// P5 PGM or 8-bit grayscale PNG; values divided by 255.
Mask load_mask(const std::string& path);

}  // namespace easyhec
