#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hyperfed/autodiff.hpp"
#include "hyperfed/ct.hpp"
#include "hyperfed/hypernet.hpp"

namespace hyperfed {

enum class NetKind : std::uint8_t { kPostProcessing = 0, kUnrolled = 1 };
enum class UnrolledInit { kFbp, kZero };

UnrolledInit parse_unrolled_init(std::string_view name);
std::string to_string(UnrolledInit init);

struct NetworkConfig {
  NetKind kind = NetKind::kPostProcessing;
  // Post-processing encoder-decoder: 4 + 4 convolutions of this width.
  int channels = 32;
  // Unrolled reconstructor.
  int n_iterations = 8;
  int reg_channels = 16;
  UnrolledInit init = UnrolledInit::kFbp;
  FilterKind init_filter = FilterKind::kRamLak;
  // Hypernetwork hidden width.
  int hyper_hidden = 64;

  void validate() const;
  SiteLayout site_layout() const;
  std::vector<Shape> block_shapes() const;
};

// Shared imaging parameters w. Block order:
//   post-processing: (kernel, bias) for enc1..enc4 then dec1..dec4;
//   unrolled: per iteration (step_scale [1], reg kernel1, bias1, kernel2, bias2).
template <typename T>
struct ImagingParams {
  NetKind kind = NetKind::kPostProcessing;
  SiteLayout site_layout;
  std::vector<Tensor<T>> blocks;

  std::size_t flat_size() const;
  std::vector<T> flatten() const;
};

// Fan-in scaled normal kernels, zero biases, unit step scales. The last
// convolution of the post-processing net and of every regularizer starts at
// zero, so an untrained network with identity FiLM returns its starting image.
template <typename T>
ImagingParams<T> init_imaging_params(const NetworkConfig& cfg, std::uint64_t seed);

// out[n,c,h,w] = gamma[c] * feature[n,c,h,w] + beta[c].
template <typename T>
Var<T> film_modulate(Var<T> feature, Var<T> gamma, Var<T> beta);

// x: [N, 1, n, n]. Encoder-decoder with symmetric skips and global residual.
template <typename T>
Var<T> postproc_forward(Var<T> x, const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                        const FiLMVars<T>& film);

// Projector and its stable base step 0.8 / ||A||^2 for one geometry.
struct UnrolledOperator {
  explicit UnrolledOperator(const FanBeamGeometry& geometry, int power_iterations = 20);
  UnrolledOperator(const FanBeamGeometry& geometry, double base_step);

  FanBeamProjector projector;
  double base_step;
};

// Starting image of the unroll, [n, n].
template <typename T>
Tensor<T> unrolled_initial_image(const Tensor<T>& sino, const UnrolledOperator& op,
                                 const NetworkConfig& cfg);

// x_{t+1} = x_t - s_t * base_step * A^T(A x_t - y) + Reg_t(x_t), returns
// [1, 1, n, n].
template <typename T>
Var<T> unrolled_forward(Tape<T>& tape, const Tensor<T>& sino, const UnrolledOperator& op,
                        const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                        const FiLMVars<T>& film);

// Dispatches on cfg.kind. Post-processing input is an [n, n] image,
// reconstruction input an [views, bins] sinogram (op required). Result [n, n].
template <typename T>
Var<T> imaging_forward(Tape<T>& tape, const Tensor<T>& degraded_input,
                       const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                       const FiLMVars<T>& film, const UnrolledOperator* op);

// Inference without gradients.
template <typename T>
Tensor<T> imaging_predict(const Tensor<T>& degraded_input, const ImagingParams<T>& w,
                          const NetworkConfig& cfg, const FiLMParams<T>* film,
                          const UnrolledOperator* op);

// --- checkpoints --------------------------------------------------------------
//
// "HFCK", u8 version, u8 content kind, u8 network kind, u32 site count,
// u32 channels per site, u32 block count, then shape-prefixed f32 blocks.
// The federation payload is exactly this encoding of the shared w.

enum class CheckpointContent : std::uint8_t { kImaging = 0, kHypernet = 1 };
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  CheckpointContent content = CheckpointContent::kImaging;
  NetKind kind = NetKind::kPostProcessing;
  SiteLayout site_layout;
  std::vector<Tensor<float>> blocks;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const ImagingParams<float>& w);
Checkpoint to_checkpoint(const HyperParams<float>& xi, const SiteLayout& layout, NetKind kind);
ImagingParams<float> imaging_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& cfg);
HyperParams<float> hyper_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& cfg);

}  // namespace hyperfed
