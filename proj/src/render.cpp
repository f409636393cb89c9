#include "easyhec/render.hpp"

#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "easyhec/error.hpp"
#include "easyhec/parallel.hpp"

namespace easyhec {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ValidationError("intrinsics: fx and fy must be positive");
  if (width < 8 || height < 8) throw ValidationError("intrinsics: width and height must be >= 8");
  if (!(near > 0.0)) throw ValidationError("intrinsics: near must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ValidationError("intrinsics: non-finite center");
}

double CameraIntrinsics::diagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

CameraIntrinsics CameraIntrinsics::scaled_to(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  return CameraIntrinsics{fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height, near};
}

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx},        {"fy", k.fy},          {"cx", k.cx},    {"cy", k.cy},
          {"width", k.width},  {"height", k.height},  {"near", k.near}};
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  try {
    CameraIntrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    k.near = j.value("near", 0.01);
    k.validate();
    return k;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("intrinsics: ") + e.what());
  }
}

Mask::Mask(int width, int height, double fill)
    : width_(width), height_(height),
      values_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
  if (width <= 0 || height <= 0) throw InvalidArgument("mask dimensions must be positive");
}

double Mask::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

bool Mask::valid() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Vec2 project_point(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > k.near)) throw InvalidArgument("point is behind the near plane");
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

namespace {

constexpr int kTile = 4;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct ScreenTri {
  Vec2 v[3];
  Vec2 e[3];
  double inv_len2[3];
  Vec2 n[3];      // inward unit edge normals
  double orient;  // sign of the signed area
  int link;
  int vid[3];     // global vertex index
};

struct EdgeHit {
  double d2;
  int edge;
  double t;
  Vec2 r;  // pixel minus closest boundary point
  bool inside;
};

inline EdgeHit nearest_edge(const ScreenTri& tri, const Vec2& p) {
  EdgeHit best{std::numeric_limits<double>::infinity(), 0, 0.0, Vec2::Zero(), true};
  for (int i = 0; i < 3; ++i) {
    const Vec2 w = p - tri.v[i];
    if (tri.n[i].dot(w) < 0.0) best.inside = false;
    const double t = std::clamp(w.dot(tri.e[i]) * tri.inv_len2[i], 0.0, 1.0);
    const Vec2 r = w - t * tri.e[i];
    const double d2 = r.squaredNorm();
    if (d2 < best.d2) {
      best.d2 = d2;
      best.edge = i;
      best.t = t;
      best.r = r;
    }
  }
  return best;
}

std::optional<ScreenTri> make_screen_tri(const Vec2& a, const Vec2& b, const Vec2& c,
                                         double diagonal) {
  ScreenTri tri{};
  tri.v[0] = a;
  tri.v[1] = b;
  tri.v[2] = c;
  const double area2 = cross2(b - a, c - a);
  if (!(std::abs(area2) * 0.5 / (diagonal * diagonal) > 1e-12)) return std::nullopt;
  tri.orient = area2 > 0 ? 1.0 : -1.0;
  for (int i = 0; i < 3; ++i) {
    tri.e[i] = tri.v[(i + 1) % 3] - tri.v[i];
    tri.inv_len2[i] = 1.0 / tri.e[i].squaredNorm();
    tri.n[i] = Vec2(-tri.e[i].y(), tri.e[i].x()) * (tri.orient * std::sqrt(tri.inv_len2[i]));
  }
  return tri;
}

// Projected, binned triangle soup shared by the hard and soft rasterizers.
class ScreenScene {
 public:
  ScreenScene(std::span<const TriangleMesh> links, const CameraIntrinsics& k, double margin_px)
      : k_(k), tiles_x_((k.width + kTile - 1) / kTile), tiles_y_((k.height + kTile - 1) / kTile) {
    const double diag = k.diagonal();
    std::vector<Vec2> uv;
    std::vector<char> in_front;
    int offset = 0;
    std::size_t discarded = 0;
    for (std::size_t l = 0; l < links.size(); ++l) {
      const auto& verts = links[l].vertices();
      uv.resize(verts.size());
      in_front.resize(verts.size());
      for (std::size_t j = 0; j < verts.size(); ++j) {
        const Vec3& p = verts[j];
        in_front[j] = p.z() > k.near;
        uv[j] = in_front[j] ? Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy)
                            : Vec2::Zero();
      }
      for (const auto& t : links[l].triangles()) {
        if (!in_front[t[0]] || !in_front[t[1]] || !in_front[t[2]]) {
          ++discarded;
          continue;
        }
        auto tri = make_screen_tri(uv[t[0]], uv[t[1]], uv[t[2]], diag);
        if (!tri) continue;
        tri->link = static_cast<int>(l);
        for (int i = 0; i < 3; ++i) tri->vid[i] = offset + t[i];
        tris_.push_back(*tri);
      }
      link_offset_.push_back(offset);
      offset += static_cast<int>(verts.size());
    }
    vertex_count_ = offset;
    if (discarded > 0) {
      spdlog::debug("rasterizer: discarded {} triangles crossing the near plane", discarded);
    }
    bin(margin_px);
  }

  int tiles_x() const { return tiles_x_; }
  int tiles_y() const { return tiles_y_; }
  int vertex_count() const { return vertex_count_; }
  const std::vector<int>& link_offset() const { return link_offset_; }
  const ScreenTri& tri(int i) const { return tris_[i]; }
  std::span<const int> tile(int tx, int ty) const {
    const int t = ty * tiles_x_ + tx;
    return std::span<const int>(bins_.data() + bin_start_[t], bin_start_[t + 1] - bin_start_[t]);
  }

 private:
  void bin(double margin) {
    const int n_tiles = tiles_x_ * tiles_y_;
    struct Range {
      int x0, x1, y0, y1;
    };
    std::vector<Range> ranges(tris_.size(), Range{0, -1, 0, -1});
    std::vector<int> counts(n_tiles + 1, 0);
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      const auto& t = tris_[i];
      const double minx = std::min({t.v[0].x(), t.v[1].x(), t.v[2].x()}) - margin;
      const double maxx = std::max({t.v[0].x(), t.v[1].x(), t.v[2].x()}) + margin;
      const double miny = std::min({t.v[0].y(), t.v[1].y(), t.v[2].y()}) - margin;
      const double maxy = std::max({t.v[0].y(), t.v[1].y(), t.v[2].y()}) + margin;
      // Pixel centers sit at col + 0.5.
      const double c0 = std::ceil(minx - 0.5), c1 = std::floor(maxx - 0.5);
      const double r0 = std::ceil(miny - 0.5), r1 = std::floor(maxy - 0.5);
      if (c1 < 0 || r1 < 0 || c0 > k_.width - 1 || r0 > k_.height - 1 || c0 > c1 || r0 > r1) continue;
      Range r;
      r.x0 = static_cast<int>(std::max(0.0, c0)) / kTile;
      r.x1 = static_cast<int>(std::min<double>(k_.width - 1, c1)) / kTile;
      r.y0 = static_cast<int>(std::max(0.0, r0)) / kTile;
      r.y1 = static_cast<int>(std::min<double>(k_.height - 1, r1)) / kTile;
      ranges[i] = r;
      for (int ty = r.y0; ty <= r.y1; ++ty) {
        for (int tx = r.x0; tx <= r.x1; ++tx) counts[ty * tiles_x_ + tx + 1] += touches(t, tx, ty, margin);
      }
    }
    for (int t = 0; t < n_tiles; ++t) counts[t + 1] += counts[t];
    bin_start_ = counts;
    bins_.resize(counts[n_tiles]);
    std::vector<int> cursor(counts.begin(), counts.end() - 1);
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      const auto& r = ranges[i];
      for (int ty = r.y0; ty <= r.y1; ++ty) {
        for (int tx = r.x0; tx <= r.x1; ++tx) {
          if (touches(tris_[i], tx, ty, margin)) bins_[cursor[ty * tiles_x_ + tx]++] = static_cast<int>(i);
        }
      }
    }
  }

  // False when every pixel center of the tile lies more than margin outside
  // one edge line, hence more than margin from the triangle.
  static bool touches(const ScreenTri& t, int tx, int ty, double margin) {
    const double x0 = tx * kTile + 0.5, x1 = x0 + kTile - 1;
    const double y0 = ty * kTile + 0.5, y1 = y0 + kTile - 1;
    for (int i = 0; i < 3; ++i) {
      const Vec2& n = t.n[i];
      // Corner maximizing the inward signed distance.
      const double cx = n.x() >= 0.0 ? x1 : x0, cy = n.y() >= 0.0 ? y1 : y0;
      if (n.x() * (cx - t.v[i].x()) + n.y() * (cy - t.v[i].y()) < -margin) return false;
    }
    return true;
  }

  CameraIntrinsics k_;
  int tiles_x_;
  int tiles_y_;
  int vertex_count_ = 0;
  std::vector<int> link_offset_;
  std::vector<ScreenTri> tris_;
  std::vector<int> bin_start_;
  std::vector<int> bins_;
};

// Top-left fill rule for a positively oriented (y-down) triangle.
inline bool hard_inside(const ScreenTri& tri, const Vec2& p) {
  const Vec2* v = tri.v;
  Vec2 a = v[0], b = v[1], c = v[2];
  if (tri.orient < 0) std::swap(b, c);
  const Vec2 pts[3] = {a, b, c};
  for (int i = 0; i < 3; ++i) {
    const Vec2& s = pts[i];
    const Vec2 e = pts[(i + 1) % 3] - s;
    const double f = cross2(e, p - s);
    if (f < 0.0) return false;
    if (f == 0.0) {
      const bool top = e.y() == 0.0 && e.x() > 0.0;
      const bool left = e.y() < 0.0;
      if (!top && !left) return false;
    }
  }
  return true;
}

constexpr int kTilePixels = kTile * kTile;
// One lane per tile pixel. The per-lane loops below are branch-free so the
// compiler can vectorize them; exp and reductions go through Eigen.
using TileArray = Eigen::Array<double, kTilePixels, 1>;

struct TilePixels {
  TileArray x, y;   // pixel centers
  TileArray valid;  // 1 inside the image, 0 in the overhang of border tiles
  int col0, row0;

  TilePixels(int tx, int ty, const CameraIntrinsics& k) : col0(tx * kTile), row0(ty * kTile) {
    for (int j = 0; j < kTilePixels; ++j) {
      const int col = col0 + j % kTile, row = row0 + j / kTile;
      x[j] = col + 0.5;
      y[j] = row + 0.5;
      valid[j] = col < k.width && row < k.height ? 1.0 : 0.0;
    }
  }
};

// nearest_edge() for every tile pixel at once.
struct TileDistance {
  TileArray x;  // +d^2 / sd inside, -d^2 / sd outside
  TileArray t, rx, ry;
  TileArray edge;
};

struct EdgeLane {
  double d2, t, rx, ry, s;
};

// Edge constants copied out of the triangle so the lane loop sees no aliasing.
struct EdgeConst {
  double vx, vy, ex, ey, inv_len2, nx, ny;

  EdgeConst(const ScreenTri& tri, int i)
      : vx(tri.v[i].x()), vy(tri.v[i].y()), ex(tri.e[i].x()), ey(tri.e[i].y()),
        inv_len2(tri.inv_len2[i]), nx(tri.n[i].x()), ny(tri.n[i].y()) {}

  EdgeLane at(double x, double y) const {
    const double wx = x - vx, wy = y - vy;
    const double t = std::min(1.0, std::max(0.0, (wx * ex + wy * ey) * inv_len2));
    const double rx = wx - t * ex, ry = wy - t * ey;
    return {rx * rx + ry * ry, t, rx, ry, wx * nx + wy * ny};
  }
};

// kFull also records the closest point data the gradient needs; otherwise
// only out.x is written.
template <bool kFull>
void tile_distance(const ScreenTri& tri, const TilePixels& px, double inv_sd, TileDistance& out) {
  const EdgeConst e0(tri, 0), e1(tri, 1), e2(tri, 2);
  const double* __restrict xs = px.x.data();
  const double* __restrict ys = px.y.data();
  double* __restrict ox = out.x.data();
  double* __restrict ot = out.t.data();
  double* __restrict orx = out.rx.data();
  double* __restrict ory = out.ry.data();
  double* __restrict oe = out.edge.data();
#pragma GCC ivdep
  for (int j = 0; j < kTilePixels; ++j) {
    const EdgeLane a = e0.at(xs[j], ys[j]);
    const EdgeLane b = e1.at(xs[j], ys[j]);
    const EdgeLane c = e2.at(xs[j], ys[j]);
    // First minimum wins, as in nearest_edge().
    const bool b_first = b.d2 < a.d2;
    const double ab = b_first ? b.d2 : a.d2;
    const bool c_first = c.d2 < ab;
    const double best = c_first ? c.d2 : ab;
    if constexpr (kFull) {
      ot[j] = c_first ? c.t : (b_first ? b.t : a.t);
      orx[j] = c_first ? c.rx : (b_first ? b.rx : a.rx);
      ory[j] = c_first ? c.ry : (b_first ? b.ry : a.ry);
      oe[j] = c_first ? 2.0 : (b_first ? 1.0 : 0.0);
    }
    const double smin = std::min(a.s, std::min(b.s, c.s));
    const double x = best * inv_sd;
    ox[j] = smin >= 0.0 ? x : -x;
  }
}

// Per-triangle (1 - D_f) and per-link products kept for backprop.
struct TileRecord {
  std::vector<TileDistance> dist;      // one per bin entry
  std::vector<TileArray> one_minus_d;  // one per bin entry
  std::vector<int> group;              // bin entry -> link group
  std::vector<TileArray> prod;         // per link group: prod_f (1 - D_f)
};

struct TileShade {
  TileArray value;
  TileArray grad_flows;  // 1 where no link saturates and sum_l S_l <= 1
};

template <bool kRecord>
TileShade shade_tile(const ScreenScene& scene, std::span<const int> bin, const TilePixels& px,
                     double inv_sd, TileRecord* rec) {
  if constexpr (kRecord) {
    rec->dist.resize(bin.size());
    rec->one_minus_d.resize(bin.size());
    rec->group.resize(bin.size());
    rec->prod.clear();
  }
  TileDistance scratch;
  TileArray total = TileArray::Zero();
  TileArray saturated = TileArray::Zero();
  TileArray om, ex;
  std::size_t i = 0;
  while (i < bin.size()) {
    const int link = scene.tri(bin[i]).link;
    TileArray prod = TileArray::Ones();
    for (; i < bin.size() && scene.tri(bin[i]).link == link; ++i) {
      TileDistance& d = kRecord ? rec->dist[i] : scratch;
      tile_distance<kRecord>(scene.tri(bin[i]), px, inv_sd, d);
      if constexpr (kRecord) rec->group[i] = static_cast<int>(rec->prod.size());
      if (!(d.x.maxCoeff() > -kSoftCutoff)) {
        if constexpr (kRecord) rec->one_minus_d[i].setOnes();
        continue;
      }
      ex = d.x.min(kSoftCutoff).exp();
      for (int j = 0; j < kTilePixels; ++j) {
        const double x = d.x[j];
        saturated[j] = x >= kSoftCutoff ? 1.0 : saturated[j];
        // 1 - sigmoid(x) = 1 / (1 + e^x); beyond the outer cutoff D_f = 0.
        om[j] = x > -kSoftCutoff ? 1.0 / (1.0 + ex[j]) : 1.0;
        prod[j] *= om[j];
      }
      if constexpr (kRecord) rec->one_minus_d[i] = om;
    }
    if constexpr (kRecord) rec->prod.push_back(prod);
    total += 1.0 - prod;
  }
  TileShade out;
  for (int j = 0; j < kTilePixels; ++j) {
    const bool sat = saturated[j] != 0.0;
    out.grad_flows[j] = !sat && total[j] <= 1.0 ? 1.0 : 0.0;
    out.value[j] = sat ? 1.0 : (total[j] < 1.0 ? total[j] : 1.0);
  }
  return out;
}

// Screen distance at which |x| reaches the cutoff, plus a pixel of slack.
double soft_margin_px(const CameraIntrinsics& k, double sigma) {
  return std::sqrt(kSoftCutoff * sigma) * k.diagonal() + 1.0;
}

}  // namespace

std::optional<BoundaryDistance> boundary_distance(const Vec2& pixel, const Vec2& a, const Vec2& b,
                                                  const Vec2& c, double diagonal) {
  const auto tri = make_screen_tri(a, b, c, diagonal);
  if (!tri) return std::nullopt;
  const EdgeHit hit = nearest_edge(*tri, pixel);
  return BoundaryDistance{std::sqrt(hit.d2) / diagonal, hit.inside, hit.edge, hit.t};
}

Mask render_hard_mask(std::span<const TriangleMesh> links_cam, const CameraIntrinsics& k) {
  k.validate();
  Mask mask(k.width, k.height, 0.0);
  const ScreenScene scene(links_cam, k, 1.0);
  parallel_for(static_cast<std::size_t>(scene.tiles_y()), [&](std::size_t ty) {
    for (int tx = 0; tx < scene.tiles_x(); ++tx) {
      const auto bin = scene.tile(tx, static_cast<int>(ty));
      if (bin.empty()) continue;
      const int row_end = std::min(k.height, static_cast<int>(ty + 1) * kTile);
      const int col_end = std::min(k.width, (tx + 1) * kTile);
      for (int row = static_cast<int>(ty) * kTile; row < row_end; ++row) {
        for (int col = tx * kTile; col < col_end; ++col) {
          const Vec2 p(col + 0.5, row + 0.5);
          for (int idx : bin) {
            if (hard_inside(scene.tri(idx), p)) {
              mask.at(col, row) = 1.0;
              break;
            }
          }
        }
      }
    }
  });
  return mask;
}

Mask render_soft_mask(std::span<const TriangleMesh> links_cam, const CameraIntrinsics& k,
                      double sigma) {
  k.validate();
  if (!(sigma > 0.0)) throw InvalidArgument("soft render: sigma must be positive");
  Mask mask(k.width, k.height, 0.0);
  const ScreenScene scene(links_cam, k, soft_margin_px(k, sigma));
  const double inv_sd = 1.0 / (sigma * k.diagonal() * k.diagonal());
  parallel_for(static_cast<std::size_t>(scene.tiles_y()), [&](std::size_t ty) {
    for (int tx = 0; tx < scene.tiles_x(); ++tx) {
      const auto bin = scene.tile(tx, static_cast<int>(ty));
      if (bin.empty()) continue;
      const TilePixels px(tx, static_cast<int>(ty), k);
      const TileShade shade = shade_tile<false>(scene, bin, px, inv_sd, nullptr);
      for (int j = 0; j < kTilePixels; ++j) {
        if (px.valid[j] != 0.0) mask.at(px.col0 + j % kTile, px.row0 + j / kTile) = shade.value[j];
      }
    }
  });
  return mask;
}

SilhouetteResidual soft_silhouette_residual(std::span<const TriangleMesh> links_cam,
                                            const CameraIntrinsics& k, double sigma,
                                            const Mask& observed, bool with_grad) {
  k.validate();
  if (!(sigma > 0.0)) throw InvalidArgument("soft render: sigma must be positive");
  if (observed.width() != k.width || observed.height() != k.height) {
    throw DimensionMismatch("observed mask is " + std::to_string(observed.width()) + "x" +
                            std::to_string(observed.height()) + ", intrinsics expect " +
                            std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  const ScreenScene scene(links_cam, k, soft_margin_px(k, sigma));
  const double inv_sd = 1.0 / (sigma * k.diagonal() * k.diagonal());
  const int n_chunks = scene.tiles_y();
  const int n_vertices = scene.vertex_count();

  std::vector<double> chunk_sum(n_chunks, 0.0);
  std::vector<std::vector<Vec2>> chunk_grad(with_grad ? n_chunks : 0);

  parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t ty) {
    TileRecord rec;
    std::vector<Vec2>* grad = nullptr;
    if (with_grad) {
      chunk_grad[ty].assign(n_vertices, Vec2::Zero());
      grad = &chunk_grad[ty];
    }
    double sum = 0.0;
    for (int tx = 0; tx < scene.tiles_x(); ++tx) {
      const TilePixels px(tx, static_cast<int>(ty), k);
      TileArray m;
      for (int j = 0; j < kTilePixels; ++j) {
        m[j] = px.valid[j] != 0.0 ? observed.at(px.col0 + j % kTile, px.row0 + j / kTile) : 0.0;
      }
      const auto bin = scene.tile(tx, static_cast<int>(ty));
      if (bin.empty()) {
        sum += m.square().sum();
        continue;
      }
      const TileShade shade = with_grad ? shade_tile<true>(scene, bin, px, inv_sd, &rec)
                                        : shade_tile<false>(scene, bin, px, inv_sd, nullptr);
      const TileArray r = (shade.value - m) * px.valid;
      sum += r.square().sum();
      if (!with_grad) continue;
      const TileArray g = 2.0 * r * shade.grad_flows;
      if ((g == 0.0).all()) continue;
      TileArray c, wa, wb, on;
      for (std::size_t i = 0; i < bin.size(); ++i) {
        const TileArray& om = rec.one_minus_d[i];
        if ((om == 1.0).all()) continue;
        const ScreenTri& tri = scene.tri(bin[i]);
        const TileDistance& d = rec.dist[i];
        const TileArray& prod = rec.prod[rec.group[i]];
        for (int j = 0; j < kTilePixels; ++j) {
          const double x = d.x[j];
          const bool active = x > -kSoftCutoff && x < kSoftCutoff;
          // d(sum)/d(d2) = g * prod_{g != f}(1 - D_g) * D_f (1 - D_f) * sign * inv_sd
          const double cj = g[j] * prod[j] * (1.0 - om[j]) * (x >= 0.0 ? inv_sd : -inv_sd);
          c[j] = active ? cj : 0.0;
        }
        wa = -2.0 * (1.0 - d.t) * c;
        wb = -2.0 * d.t * c;
        for (int e = 0; e < 3; ++e) {
          for (int j = 0; j < kTilePixels; ++j) on[j] = d.edge[j] == e ? 1.0 : 0.0;
          if ((on == 0.0).all()) continue;
          Vec2& ga = (*grad)[tri.vid[e]];
          Vec2& gb = (*grad)[tri.vid[(e + 1) % 3]];
          ga.x() += (on * wa * d.rx).sum();
          ga.y() += (on * wa * d.ry).sum();
          gb.x() += (on * wb * d.rx).sum();
          gb.y() += (on * wb * d.ry).sum();
        }
      }
    }
    chunk_sum[ty] = sum;
  });

  SilhouetteResidual out;
  for (double s : chunk_sum) out.sum_sq += s;
  if (with_grad) {
    out.vertex_grad.resize(links_cam.size());
    for (std::size_t l = 0; l < links_cam.size(); ++l) {
      out.vertex_grad[l].assign(links_cam[l].vertices().size(), Vec2::Zero());
    }
    for (const auto& cg : chunk_grad) {
      for (std::size_t l = 0; l < links_cam.size(); ++l) {
        const int off = scene.link_offset()[l];
        for (std::size_t j = 0; j < out.vertex_grad[l].size(); ++j) out.vertex_grad[l][j] += cg[off + j];
      }
    }
  }
  return out;
}

void save_pgm(const std::string& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mask: " + path);
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  std::vector<unsigned char> bytes(mask.size());
  const auto values = mask.values();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing mask: " + path);
}

namespace {

// Reads the next PGM header token, skipping whitespace and comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

Mask load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mask: " + path);
  if (pgm_token(in) != "P5") throw ParseError(path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(in));
    h = std::stoi(pgm_token(in));
    maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw ParseError(path + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw ParseError(path + ": only 8-bit PGM is supported");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(path + ": truncated PGM data");
  Mask m(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) m.values()[i] = bytes[i] / 255.0;
  return m;
}

Mask load_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ParseError(path + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ParseError(path + ": " + image.message);
  }
  Mask m(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = bytes[i] / 255.0;
  return m;
}

}  // namespace

Mask load_mask(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open mask: " + path);
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  return load_pgm(path);
}

}  // namespace easyhec
