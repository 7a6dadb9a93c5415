#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hyperfed/tensor.hpp"

namespace hyperfed {

// Full-scan (2*pi) fan-beam acquisition with a flat, equispaced detector.
// View v sits at angle 2*pi*v/n_views. Lengths are in millimetres.
struct FanBeamGeometry {
  int n_views = 0;
  int n_bins = 0;
  double pixel_length_mm = 0.0;
  double bin_length_mm = 0.0;
  double source_to_center_mm = 0.0;
  double detector_to_center_mm = 0.0;
  double incident_intensity = 0.0;
  int image_size = 0;

  // Throws ConfigError when an extent is non-positive or the source and
  // detector are not both outside the reconstruction square.
  void validate() const;

  double fov_mm() const { return image_size * pixel_length_mm; }
  double view_angle(int view) const;

  // Parameter list in conditioning-vector order: views, bins, pixel length,
  // bin length, source distance, detector distance, intensity.
  std::array<double, 7> raw_vector() const;

  friend bool operator==(const FanBeamGeometry&, const FanBeamGeometry&) = default;
};

// Shrinks a reference-grid geometry to `grid_size` pixels. View and bin
// counts scale with the grid; pixel length grows so the field of view is
// kept, and bin length is set so the detector extent (and so the fan angle)
// is unchanged. Distances and intensity are untouched.
FanBeamGeometry desk_scale(const FanBeamGeometry& reference, int grid_size);

template <typename T>
struct Sinogram {
  Tensor<T> data;  // [n_views, n_bins], post-log line integrals
  FanBeamGeometry geometry;
};

// Matrix-free system operator A for one geometry. Each ray is sampled every
// half pixel with bilinear interpolation; back_project visits exactly the
// same (pixel, weight) pairs, so it is the transpose of forward_project.
class FanBeamProjector {
 public:
  explicit FanBeamProjector(FanBeamGeometry geometry);

  const FanBeamGeometry& geometry() const { return geometry_; }

  // image: [n, n] or [1, 1, n, n]. Result is [n_views, n_bins].
  template <typename T>
  Tensor<T> forward(const Tensor<T>& image) const;

  // sino: [n_views, n_bins] (any shape with that many elements). Result has
  // shape [n, n].
  template <typename T>
  Tensor<T> back(const Tensor<T>& sino) const;

  // Calls visit(pixel_index, weight) for every sample of ray (view, bin).
  template <typename Visit>
  void trace_ray(int view, int bin, Visit&& visit) const;

 private:
  struct ViewFrame {
    double sx, sy;  // source position
    double dx, dy;  // detector centre
    double ex, ey;  // detector axis
  };

  FanBeamGeometry geometry_;
  std::vector<ViewFrame> frames_;
  double half_extent_mm_;
  double step_mm_;
};

template <typename T>
Sinogram<T> forward_project(const Tensor<T>& image, const FanBeamGeometry& geom);
template <typename T>
Tensor<T> back_project(const Sinogram<T>& sino, const FanBeamGeometry& geom);

enum class FilterKind { kRamLak, kHann };

FilterKind parse_filter_kind(std::string_view name);
std::string to_string(FilterKind kind);

// Fan-beam filtered backprojection (cosine pre-weighting, ramp-family filter
// on the virtual detector through the isocentre, 1/U^2 distance-weighted
// backprojection). Output is [n, n] on the geometry's grid.
template <typename T>
Tensor<T> fbp_reconstruct(const Sinogram<T>& sino, FilterKind filter = FilterKind::kRamLak);

// Poisson transmission noise: N ~ Poisson(I0 exp(-p)), N clamped to >= 1,
// p_hat = ln(I0 / N). Deterministic in the seed.
template <typename T>
Sinogram<T> apply_low_dose(const Sinogram<T>& sino, double incident_intensity,
                           std::uint64_t seed);

// Keeps every (n_views / target_views)-th view. target_views must divide
// n_views.
template <typename T>
Sinogram<T> sparse_view_subsample(const Sinogram<T>& sino, int target_views);

// Largest eigenvalue of A^T A by power iteration.
double estimate_operator_norm_sq(const FanBeamProjector& projector,
                                 int iterations = 20, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------

template <typename Visit>
void FanBeamProjector::trace_ray(int view, int bin, Visit&& visit) const {
  const ViewFrame& f = frames_[static_cast<std::size_t>(view)];
  const double u = (bin - 0.5 * (geometry_.n_bins - 1)) * geometry_.bin_length_mm;
  const double px = f.dx + u * f.ex - f.sx;
  const double py = f.dy + u * f.ey - f.sy;
  const double len = std::sqrt(px * px + py * py);
  const double rx = px / len;
  const double ry = py / len;

  // Clip against the square where the bilinear interpolant is non-zero.
  const double h = half_extent_mm_;
  double t_in = -1e300, t_out = 1e300;
  auto slab = [&](double origin, double dir) {
    if (std::abs(dir) < 1e-15) {
      if (origin <= -h || origin >= h) t_out = -1e300;
      return;
    }
    double a = (-h - origin) / dir;
    double b = (h - origin) / dir;
    if (a > b) std::swap(a, b);
    t_in = std::max(t_in, a);
    t_out = std::min(t_out, b);
  };
  slab(f.sx, rx);
  slab(f.sy, ry);
  if (!(t_out > t_in)) return;

  // Sample positions are anchored at the ray's closest approach to the
  // isocentre so the sampling lattice does not depend on the clip points.
  const double t_mid = -(f.sx * rx + f.sy * ry);
  const double ds = step_mm_;
  const long k_begin = static_cast<long>(std::floor((t_in - t_mid) / ds - 0.5));
  const long k_end = static_cast<long>(std::ceil((t_out - t_mid) / ds - 0.5));
  const int n = geometry_.image_size;
  const double centre = 0.5 * (n - 1);
  const double inv_px = 1.0 / geometry_.pixel_length_mm;
  for (long k = k_begin; k <= k_end; ++k) {
    const double t = t_mid + (static_cast<double>(k) + 0.5) * ds;
    if (t <= t_in || t >= t_out) continue;
    const double x = f.sx + t * rx;
    const double y = f.sy + t * ry;
    const double col = x * inv_px + centre;
    const double row = centre - y * inv_px;
    const double c0f = std::floor(col);
    const double r0f = std::floor(row);
    const double fx = col - c0f;
    const double fy = row - r0f;
    const int c0 = static_cast<int>(c0f);
    const int r0 = static_cast<int>(r0f);
    const double w00 = (1.0 - fx) * (1.0 - fy) * ds;
    const double w01 = fx * (1.0 - fy) * ds;
    const double w10 = (1.0 - fx) * fy * ds;
    const double w11 = fx * fy * ds;
    const bool c0_ok = c0 >= 0 && c0 < n;
    const bool c1_ok = c0 + 1 >= 0 && c0 + 1 < n;
    if (r0 >= 0 && r0 < n) {
      const std::size_t base = static_cast<std::size_t>(r0) * n;
      if (c0_ok) visit(base + c0, w00);
      if (c1_ok) visit(base + c0 + 1, w01);
    }
    if (r0 + 1 >= 0 && r0 + 1 < n) {
      const std::size_t base = static_cast<std::size_t>(r0 + 1) * n;
      if (c0_ok) visit(base + c0, w10);
      if (c1_ok) visit(base + c0 + 1, w11);
    }
  }
}

}  // namespace hyperfed
