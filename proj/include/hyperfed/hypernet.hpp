#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hyperfed/autodiff.hpp"
#include "hyperfed/ct.hpp"

namespace hyperfed {

// Unnormalized conditioning parameters in FanBeamGeometry::raw_vector order.
using GeometryRaw = std::array<double, 7>;

// Elements compared on a log scale before min-max normalization: view count,
// bin count and photon intensity span orders of magnitude.
inline constexpr std::array<bool, 7> kLogScaledElement = {true,  true,  false, false,
                                                          false, false, true};

// Per-element (min, max) of the raw values, shared by every institution of an
// experiment. min == max is allowed and maps that element to 0.
struct GeometryBounds {
  GeometryRaw min{};
  GeometryRaw max{};

  static GeometryBounds from_raw(std::span<const GeometryRaw> values);
  static GeometryBounds from_geometries(std::span<const FanBeamGeometry> geometries);
  void validate() const;

  friend bool operator==(const GeometryBounds&, const GeometryBounds&) = default;
};

struct GeometryVector {
  std::array<double, 7> values{};  // each in [0, 1]
  GeometryBounds bounds;
};

// Throws RangeError when a raw value lies outside its bounds and ConfigError
// for invalid bounds.
GeometryVector encode_geometry(const GeometryRaw& raw, const GeometryBounds& bounds);

// Channel count of every FiLM injection site, in network order.
struct SiteLayout {
  std::vector<std::size_t> channels;

  std::size_t site_count() const { return channels.size(); }
  // Hypernetwork output width: a gamma and a beta per channel.
  std::size_t film_width() const;

  friend bool operator==(const SiteLayout&, const SiteLayout&) = default;
};

// Two-layer hypernetwork 7 -> hidden -> film_width.
// blocks = {W1 [hidden, 7], b1 [hidden], W2 [width, hidden], b2 [width]}.
template <typename T>
struct HyperParams {
  std::vector<Tensor<T>> blocks;

  std::size_t hidden() const { return blocks.at(0).dim(0); }
  std::size_t output_width() const { return blocks.at(2).dim(0); }
};

// Layer 1 is fan-in scaled normal, layer 2 is zero so the generated
// modulation starts as the identity.
template <typename T>
HyperParams<T> init_hyper_params(const SiteLayout& layout, std::size_t hidden, std::uint64_t seed);

// Per-site modulation tensors on a tape. An empty set means "no modulation"
// (the baselines' path), which the networks skip entirely.
template <typename T>
struct FiLMVars {
  std::vector<Var<T>> gamma;
  std::vector<Var<T>> beta;

  bool is_identity() const { return gamma.empty(); }
};

// Plain-value counterpart used for inspection and tests.
template <typename T>
struct FiLMParams {
  std::vector<Tensor<T>> gamma;
  std::vector<Tensor<T>> beta;
};

// Binds parameter blocks as tape leaves.
template <typename T>
std::vector<Var<T>> bind_blocks(Tape<T>& tape, const std::vector<Tensor<T>>& blocks,
                                bool requires_grad);

// ReLU(g W1^T + b1) W2^T + b2, split per site into [gamma | beta] with
// gamma = 1 + raw slice.
template <typename T>
FiLMVars<T> hyper_forward(const GeometryVector& g, const std::vector<Var<T>>& xi,
                          const SiteLayout& layout);

template <typename T>
FiLMParams<T> hyper_forward_values(const GeometryVector& g, const HyperParams<T>& xi,
                                   const SiteLayout& layout);

}  // namespace hyperfed
