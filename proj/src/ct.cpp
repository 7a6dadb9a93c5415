#include "hyperfed/ct.hpp"

#include <numbers>
#include <random>

#include "hyperfed/rng.hpp"

namespace hyperfed {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <typename T>
void check_image(const Tensor<T>& image, const FanBeamGeometry& g) {
  const auto n = static_cast<std::size_t>(g.image_size);
  const auto& s = image.shape();
  const bool ok2 = s.size() == 2 && s[0] == n && s[1] == n;
  const bool ok4 = s.size() == 4 && s[0] == 1 && s[1] == 1 && s[2] == n && s[3] == n;
  if (!ok2 && !ok4) {
    throw DimensionError("image " + shape_to_string(s) + " does not match geometry grid " +
                         std::to_string(n) + "x" + std::to_string(n));
  }
}

template <typename T>
void check_sino(const Tensor<T>& sino, const FanBeamGeometry& g) {
  if (sino.size() != static_cast<std::size_t>(g.n_views) * g.n_bins) {
    throw DimensionError("sinogram " + shape_to_string(sino.shape()) + " does not match geometry " +
                         std::to_string(g.n_views) + " views x " + std::to_string(g.n_bins) +
                         " bins");
  }
}

// Ram-Lak kernel sampled at `spacing`, optionally apodized by a Hann window
// applied in the frequency domain. Returns taps for offsets 0..n_bins-1
// (the kernel is even).
std::vector<double> ramp_taps(int n_bins, double spacing, FilterKind kind) {
  const int taps = n_bins;
  std::vector<double> h(static_cast<std::size_t>(taps), 0.0);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  h[0] = 1.0 / (4.0 * spacing * spacing);
  for (int k = 1; k < taps; k += 2) {
    h[static_cast<std::size_t>(k)] = -1.0 / (pi2 * k * k * spacing * spacing);
  }
  if (kind == FilterKind::kRamLak) return h;

  // Circular DFT of the symmetric kernel on M >= 2*n_bins points, window,
  // then back. Naive transforms; this runs once per reconstruction.
  int m = 1;
  while (m < 2 * taps) m <<= 1;
  std::vector<double> full(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < taps; ++k) {
    full[static_cast<std::size_t>(k)] = h[static_cast<std::size_t>(k)];
    if (k > 0) full[static_cast<std::size_t>(m - k)] = h[static_cast<std::size_t>(k)];
  }
  std::vector<double> spectrum(static_cast<std::size_t>(m), 0.0);
  for (int f = 0; f < m; ++f) {
    double acc = 0.0;
    for (int k = 0; k < m; ++k) {
      acc += full[static_cast<std::size_t>(k)] * std::cos(kTwoPi * f * k / m);
    }
    const int signed_f = f <= m / 2 ? f : f - m;
    const double window = 0.5 * (1.0 + std::cos(kTwoPi * signed_f / m));
    spectrum[static_cast<std::size_t>(f)] = acc * window;
  }
  std::vector<double> out(static_cast<std::size_t>(taps), 0.0);
  for (int k = 0; k < taps; ++k) {
    double acc = 0.0;
    for (int f = 0; f < m; ++f) {
      acc += spectrum[static_cast<std::size_t>(f)] * std::cos(kTwoPi * f * k / m);
    }
    out[static_cast<std::size_t>(k)] = acc / m;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Geometry

void FanBeamGeometry::validate() const {
  if (n_views <= 0 || n_bins <= 0 || image_size <= 0) {
    throw ConfigError("geometry: n_views, n_bins and image_size must be positive");
  }
  if (!(pixel_length_mm > 0) || !(bin_length_mm > 0) || !(source_to_center_mm > 0) ||
      !(detector_to_center_mm > 0) || !(incident_intensity > 0)) {
    throw ConfigError("geometry: lengths, distances and intensity must be positive");
  }
  const double diagonal = std::sqrt(2.0) * fov_mm();
  if (!(source_to_center_mm + detector_to_center_mm > diagonal) ||
      !(source_to_center_mm > 0.5 * diagonal) || !(detector_to_center_mm > 0.5 * diagonal)) {
    throw ConfigError("geometry: source and detector must lie outside the image square (diagonal " +
                      std::to_string(diagonal) + " mm)");
  }
}

double FanBeamGeometry::view_angle(int view) const {
  return kTwoPi * static_cast<double>(view) / static_cast<double>(n_views);
}

std::array<double, 7> FanBeamGeometry::raw_vector() const {
  return {static_cast<double>(n_views), static_cast<double>(n_bins), pixel_length_mm,
          bin_length_mm,                source_to_center_mm,         detector_to_center_mm,
          incident_intensity};
}

FanBeamGeometry desk_scale(const FanBeamGeometry& reference, int grid_size) {
  if (grid_size <= 0 || reference.image_size <= 0) {
    throw ConfigError("desk_scale: grid sizes must be positive");
  }
  const double s = static_cast<double>(grid_size) / reference.image_size;
  FanBeamGeometry g = reference;
  g.image_size = grid_size;
  g.n_views = std::max(1, static_cast<int>(std::lround(reference.n_views * s)));
  g.n_bins = std::max(1, static_cast<int>(std::lround(reference.n_bins * s)));
  g.pixel_length_mm = reference.pixel_length_mm / s;
  g.bin_length_mm = reference.bin_length_mm * reference.n_bins / g.n_bins;
  return g;
}

// ---------------------------------------------------------------------------
// Projector

FanBeamProjector::FanBeamProjector(FanBeamGeometry geometry) : geometry_(geometry) {
  geometry_.validate();
  frames_.reserve(static_cast<std::size_t>(geometry_.n_views));
  for (int v = 0; v < geometry_.n_views; ++v) {
    const double beta = geometry_.view_angle(v);
    const double c = std::cos(beta), s = std::sin(beta);
    frames_.push_back({geometry_.source_to_center_mm * c, geometry_.source_to_center_mm * s,
                       -geometry_.detector_to_center_mm * c, -geometry_.detector_to_center_mm * s,
                       -s, c});
  }
  half_extent_mm_ = 0.5 * (geometry_.image_size + 1) * geometry_.pixel_length_mm;
  step_mm_ = 0.5 * geometry_.pixel_length_mm;
}

template <typename T>
Tensor<T> FanBeamProjector::forward(const Tensor<T>& image) const {
  check_image(image, geometry_);
  if (!image.all_finite()) throw NumericError("forward_project: non-finite image");
  Tensor<T> sino({static_cast<std::size_t>(geometry_.n_views),
                  static_cast<std::size_t>(geometry_.n_bins)});
  const T* img = image.raw();
  for (int v = 0; v < geometry_.n_views; ++v) {
    for (int b = 0; b < geometry_.n_bins; ++b) {
      double acc = 0.0;
      trace_ray(v, b, [&](std::size_t idx, double w) { acc += w * static_cast<double>(img[idx]); });
      sino.at(static_cast<std::size_t>(v), static_cast<std::size_t>(b)) = static_cast<T>(acc);
    }
  }
  return sino;
}

template <typename T>
Tensor<T> FanBeamProjector::back(const Tensor<T>& sino) const {
  check_sino(sino, geometry_);
  const auto n = static_cast<std::size_t>(geometry_.image_size);
  std::vector<double> acc(n * n, 0.0);
  const T* s = sino.raw();
  for (int v = 0; v < geometry_.n_views; ++v) {
    for (int b = 0; b < geometry_.n_bins; ++b) {
      const double value = static_cast<double>(s[static_cast<std::size_t>(v) * geometry_.n_bins + b]);
      if (value == 0.0) continue;
      trace_ray(v, b, [&](std::size_t idx, double w) { acc[idx] += w * value; });
    }
  }
  Tensor<T> image({n, n});
  for (std::size_t i = 0; i < acc.size(); ++i) image[i] = static_cast<T>(acc[i]);
  return image;
}

template <typename T>
Sinogram<T> forward_project(const Tensor<T>& image, const FanBeamGeometry& geom) {
  FanBeamProjector projector(geom);
  return {projector.forward(image), geom};
}

template <typename T>
Tensor<T> back_project(const Sinogram<T>& sino, const FanBeamGeometry& geom) {
  if (!(sino.geometry == geom)) {
    throw DimensionError("back_project: sinogram was acquired with a different geometry");
  }
  FanBeamProjector projector(geom);
  return projector.back(sino.data);
}

double estimate_operator_norm_sq(const FanBeamProjector& projector, int iterations,
                                 std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(projector.geometry().image_size);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor<double> x({n, n});
  for (auto& v : x.data()) v = unif(rng);
  double lambda = 0.0;
  for (int it = 0; it < std::max(1, iterations); ++it) {
    const double norm = l2_norm(x);
    for (auto& v : x.data()) v /= norm;
    Tensor<double> ax = projector.forward(x);
    lambda = dot(ax, ax);
    x = projector.back(ax);
  }
  return lambda;
}

// ---------------------------------------------------------------------------
// FBP

FilterKind parse_filter_kind(std::string_view name) {
  if (name == "ram-lak" || name == "ramlak") return FilterKind::kRamLak;
  if (name == "hann") return FilterKind::kHann;
  throw ConfigError("unknown FBP filter '" + std::string(name) + "' (expected ram-lak or hann)");
}

std::string to_string(FilterKind kind) {
  return kind == FilterKind::kHann ? "hann" : "ram-lak";
}

template <typename T>
Tensor<T> fbp_reconstruct(const Sinogram<T>& sino, FilterKind filter) {
  const FanBeamGeometry& g = sino.geometry;
  g.validate();
  check_sino(sino.data, g);
  if (filter != FilterKind::kRamLak && filter != FilterKind::kHann) {
    throw ConfigError("fbp_reconstruct: unsupported filter");
  }
  const int views = g.n_views, bins = g.n_bins, n = g.image_size;
  const double r = g.source_to_center_mm;
  const double mag = (g.source_to_center_mm + g.detector_to_center_mm) / r;
  const double ds = g.bin_length_mm / mag;  // bin spacing on the virtual detector
  const double centre_bin = 0.5 * (bins - 1);
  const std::vector<double> h = ramp_taps(bins, ds, filter);

  // Cosine-weight and filter each view.
  std::vector<double> filtered(static_cast<std::size_t>(views) * bins, 0.0);
  std::vector<double> weighted(static_cast<std::size_t>(bins));
  for (int v = 0; v < views; ++v) {
    for (int b = 0; b < bins; ++b) {
      const double s = (b - centre_bin) * ds;
      weighted[static_cast<std::size_t>(b)] =
          static_cast<double>(sino.data[static_cast<std::size_t>(v) * bins + b]) * r /
          std::sqrt(r * r + s * s);
    }
    double* out = filtered.data() + static_cast<std::size_t>(v) * bins;
    for (int m = 0; m < bins; ++m) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) {
        acc += weighted[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(std::abs(m - k))];
      }
      out[m] = acc * ds;
    }
  }

  // Distance-weighted backprojection with linear interpolation.
  const double dbeta = kTwoPi / views;
  const double centre = 0.5 * (n - 1);
  std::vector<double> acc(static_cast<std::size_t>(n) * n, 0.0);
  for (int v = 0; v < views; ++v) {
    const double beta = g.view_angle(v);
    const double c = std::cos(beta), s = std::sin(beta);
    const double* q = filtered.data() + static_cast<std::size_t>(v) * bins;
    for (int i = 0; i < n; ++i) {
      const double y = (centre - i) * g.pixel_length_mm;
      for (int j = 0; j < n; ++j) {
        const double x = (j - centre) * g.pixel_length_mm;
        const double l = r - (x * c + y * s);
        const double u = l / r;
        const double sp = r * (-x * s + y * c) / l;
        const double pos = sp / ds + centre_bin;
        const double p0 = std::floor(pos);
        const int k0 = static_cast<int>(p0);
        const double frac = pos - p0;
        double value = 0.0;
        if (k0 >= 0 && k0 < bins) value += (1.0 - frac) * q[k0];
        if (k0 + 1 >= 0 && k0 + 1 < bins) value += frac * q[k0 + 1];
        acc[static_cast<std::size_t>(i) * n + j] += value / (u * u);
      }
    }
  }
  Tensor<T> image({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  for (std::size_t i = 0; i < acc.size(); ++i) image[i] = static_cast<T>(0.5 * dbeta * acc[i]);
  return image;
}

// ---------------------------------------------------------------------------
// Degradations

template <typename T>
Sinogram<T> apply_low_dose(const Sinogram<T>& sino, double incident_intensity,
                           std::uint64_t seed) {
  if (!(incident_intensity > 0) || !std::isfinite(incident_intensity)) {
    throw ConfigError("apply_low_dose: incident intensity must be positive, got " +
                      std::to_string(incident_intensity));
  }
  Rng rng(seed);
  Sinogram<T> out = sino;
  const double log_i0 = std::log(incident_intensity);
  for (auto& p : out.data.data()) {
    const double mean = incident_intensity * std::exp(-static_cast<double>(p));
    std::poisson_distribution<long long> poisson(mean);
    const long long counts = std::max<long long>(1, poisson(rng));
    p = static_cast<T>(log_i0 - std::log(static_cast<double>(counts)));
  }
  return out;
}

template <typename T>
Sinogram<T> sparse_view_subsample(const Sinogram<T>& sino, int target_views) {
  const FanBeamGeometry& g = sino.geometry;
  if (target_views <= 0 || target_views > g.n_views) {
    throw ConfigError("sparse_view_subsample: target_views " + std::to_string(target_views) +
                      " outside [1, " + std::to_string(g.n_views) + "]");
  }
  if (g.n_views % target_views != 0) {
    throw ConfigError("sparse_view_subsample: target_views " + std::to_string(target_views) +
                      " does not divide " + std::to_string(g.n_views));
  }
  check_sino(sino.data, g);
  const int stride = g.n_views / target_views;
  const auto bins = static_cast<std::size_t>(g.n_bins);
  Sinogram<T> out;
  out.geometry = g;
  out.geometry.n_views = target_views;
  out.data = Tensor<T>({static_cast<std::size_t>(target_views), bins});
  for (int v = 0; v < target_views; ++v) {
    const T* src = sino.data.raw() + static_cast<std::size_t>(v * stride) * bins;
    std::copy(src, src + bins, out.data.raw() + static_cast<std::size_t>(v) * bins);
  }
  return out;
}

#define HYPERFED_INSTANTIATE_CT(T)                                                        \
  template Tensor<T> FanBeamProjector::forward<T>(const Tensor<T>&) const;                \
  template Tensor<T> FanBeamProjector::back<T>(const Tensor<T>&) const;                   \
  template Sinogram<T> forward_project<T>(const Tensor<T>&, const FanBeamGeometry&);      \
  template Tensor<T> back_project<T>(const Sinogram<T>&, const FanBeamGeometry&);         \
  template Tensor<T> fbp_reconstruct<T>(const Sinogram<T>&, FilterKind);                  \
  template Sinogram<T> apply_low_dose<T>(const Sinogram<T>&, double, std::uint64_t);      \
  template Sinogram<T> sparse_view_subsample<T>(const Sinogram<T>&, int);

HYPERFED_INSTANTIATE_CT(float)
HYPERFED_INSTANTIATE_CT(double)

#undef HYPERFED_INSTANTIATE_CT

}  // namespace hyperfed
