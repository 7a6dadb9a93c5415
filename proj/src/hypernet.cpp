#include "hyperfed/hypernet.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hyperfed/rng.hpp"

namespace hyperfed {

namespace {

const char* const kElementNames[7] = {"n_views",          "n_bins",
                                      "pixel_length_mm",  "bin_length_mm",
                                      "source_to_center_mm", "detector_to_center_mm",
                                      "incident_intensity"};

}  // namespace

GeometryBounds GeometryBounds::from_raw(std::span<const GeometryRaw> values) {
  if (values.empty()) throw ConfigError("geometry bounds need at least one institution");
  GeometryBounds b;
  b.min = values.front();
  b.max = values.front();
  for (const auto& raw : values) {
    for (std::size_t i = 0; i < 7; ++i) {
      b.min[i] = std::min(b.min[i], raw[i]);
      b.max[i] = std::max(b.max[i], raw[i]);
    }
  }
  b.validate();
  return b;
}

GeometryBounds GeometryBounds::from_geometries(std::span<const FanBeamGeometry> geometries) {
  std::vector<GeometryRaw> raw;
  raw.reserve(geometries.size());
  for (const auto& g : geometries) raw.push_back(g.raw_vector());
  return from_raw(raw);
}

void GeometryBounds::validate() const {
  for (std::size_t i = 0; i < 7; ++i) {
    if (!std::isfinite(min[i]) || !std::isfinite(max[i]) || min[i] > max[i]) {
      throw ConfigError(std::string("geometry bounds for ") + kElementNames[i] +
                        ": need finite min <= max");
    }
    if (kLogScaledElement[i] && !(min[i] > 0)) {
      throw ConfigError(std::string("geometry bounds for ") + kElementNames[i] +
                        ": log-scaled element needs a positive minimum");
    }
  }
}

GeometryVector encode_geometry(const GeometryRaw& raw, const GeometryBounds& bounds) {
  bounds.validate();
  GeometryVector out;
  out.bounds = bounds;
  for (std::size_t i = 0; i < 7; ++i) {
    const double lo = bounds.min[i], hi = bounds.max[i], v = raw[i];
    if (!(v >= lo && v <= hi)) {
      throw RangeError(std::string("geometry element ") + kElementNames[i] + " = " +
                       std::to_string(v) + " outside bounds [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    }
    if (lo == hi) {
      out.values[i] = 0.0;
      continue;
    }
    if (kLogScaledElement[i]) {
      const double llo = std::log(lo), lhi = std::log(hi);
      out.values[i] = (std::log(v) - llo) / (lhi - llo);
    } else {
      out.values[i] = (v - lo) / (hi - lo);
    }
    out.values[i] = std::clamp(out.values[i], 0.0, 1.0);  // rounding only
  }
  return out;
}

std::size_t SiteLayout::film_width() const {
  return 2 * std::accumulate(channels.begin(), channels.end(), std::size_t{0});
}

template <typename T>
HyperParams<T> init_hyper_params(const SiteLayout& layout, std::size_t hidden,
                                 std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("hypernetwork hidden width must be positive");
  if (layout.site_count() == 0) throw ConfigError("hypernetwork needs at least one FiLM site");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / 7.0));
  HyperParams<T> p;
  Tensor<T> w1({hidden, 7});
  for (auto& v : w1.data()) v = static_cast<T>(normal(rng));
  p.blocks.push_back(std::move(w1));
  p.blocks.emplace_back(Shape{hidden});
  p.blocks.emplace_back(Shape{layout.film_width(), hidden});
  p.blocks.emplace_back(Shape{layout.film_width()});
  return p;
}

template <typename T>
std::vector<Var<T>> bind_blocks(Tape<T>& tape, const std::vector<Tensor<T>>& blocks,
                                bool requires_grad) {
  std::vector<Var<T>> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(tape.leaf(b, requires_grad));
  return out;
}

template <typename T>
FiLMVars<T> hyper_forward(const GeometryVector& g, const std::vector<Var<T>>& xi,
                          const SiteLayout& layout) {
  if (xi.size() != 4) {
    throw DimensionError("hyper_forward: expected 4 parameter blocks, got " +
                         std::to_string(xi.size()));
  }
  const std::size_t width = layout.film_width();
  if (xi[2].shape().empty() || xi[2].shape()[0] != width || xi[3].value().size() != width) {
    throw DimensionError("hyper_forward: output width " + shape_to_string(xi[3].shape()) +
                         " does not match site layout width " + std::to_string(width));
  }
  Tape<T>& tape = xi[0].tape();
  Tensor<T> input({7});
  for (std::size_t i = 0; i < 7; ++i) input[i] = static_cast<T>(g.values[i]);
  auto h = relu(linear(tape.constant(std::move(input)), xi[0], xi[1]));
  auto raw = linear(h, xi[2], xi[3]);
  FiLMVars<T> film;
  std::size_t offset = 0;
  for (std::size_t c : layout.channels) {
    film.gamma.push_back(add_scalar(slice(raw, offset, c), T{1}));
    film.beta.push_back(slice(raw, offset + c, c));
    offset += 2 * c;
  }
  return film;
}

template <typename T>
FiLMParams<T> hyper_forward_values(const GeometryVector& g, const HyperParams<T>& xi,
                                   const SiteLayout& layout) {
  Tape<T> tape;
  auto film = hyper_forward(g, bind_blocks(tape, xi.blocks, false), layout);
  FiLMParams<T> out;
  for (std::size_t i = 0; i < film.gamma.size(); ++i) {
    out.gamma.push_back(film.gamma[i].value());
    out.beta.push_back(film.beta[i].value());
  }
  return out;
}

#define HYPERFED_INSTANTIATE_HYPERNET(T)                                                    \
  template HyperParams<T> init_hyper_params<T>(const SiteLayout&, std::size_t,              \
                                               std::uint64_t);                              \
  template std::vector<Var<T>> bind_blocks<T>(Tape<T>&, const std::vector<Tensor<T>>&,      \
                                              bool);                                        \
  template FiLMVars<T> hyper_forward<T>(const GeometryVector&, const std::vector<Var<T>>&,   \
                                        const SiteLayout&);                                 \
  template FiLMParams<T> hyper_forward_values<T>(const GeometryVector&,                     \
                                                 const HyperParams<T>&, const SiteLayout&);

HYPERFED_INSTANTIATE_HYPERNET(float)
HYPERFED_INSTANTIATE_HYPERNET(double)

#undef HYPERFED_INSTANTIATE_HYPERNET

}  // namespace hyperfed
