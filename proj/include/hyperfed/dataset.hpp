#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hyperfed/ct.hpp"
#include "hyperfed/tensor.hpp"

namespace hyperfed {

enum class Task : std::uint8_t { kPostProcessing = 0, kReconstruction = 1 };

Task parse_task(std::string_view name);
std::string to_string(Task task);

// --- phantoms ---------------------------------------------------------------

struct Ellipse {
  double cx, cy;       // centre, normalized coordinates in [-1, 1]
  double a, b;         // semi-axes
  double angle_deg;    // counter-clockwise rotation
  double value;        // additive intensity
};

// Ten-ellipse modified Shepp-Logan table (values in [0, 1]).
const std::vector<Ellipse>& shepp_logan_ellipses();

// Pixel (i, j) of an n x n grid has normalized centre
// x = (j - (n-1)/2) / (n/2), y = ((n-1)/2 - i) / (n/2).
bool ellipse_contains(const Ellipse& e, double x, double y);

ImageTensor<double> rasterize_ellipses(int n, const std::vector<Ellipse>& ellipses);
ImageTensor<double> shepp_logan(int n);
// 5-12 random ellipses inside the unit disc, clipped to [0, 1].
ImageTensor<double> random_phantom(int n, std::uint64_t seed);

// --- Institution presets ----------------------------------------------------

// Reference grid on which the tabulated geometries are defined.
inline constexpr int kReferenceGridSize = 256;

// Five institution geometries (and dose levels) for one task, at the
// reference grid. Institution k is element k-1.
std::vector<FanBeamGeometry> institution_presets(Task task);

// --- simulation ---------------------------------------------------------------

struct InstitutionConfig {
  int id = 1;
  FanBeamGeometry geometry;  // desk-scaled acquisition actually simulated
  Task task = Task::kPostProcessing;
  int n_train = 0;
  int n_test = 0;
  std::uint64_t seed = 0;
  // Phantom units -> attenuation per mm.
  double mu_per_unit = 0.02;
  FilterKind filter = FilterKind::kRamLak;
  // When > 0, acquire with geometry.n_views * subsample_factor views and keep
  // every subsample_factor-th one. 0 disables.
  int subsample_factor = 0;

  void validate() const;
};

// Training triple. For the post-processing task degraded_input is the
// low-dose FBP image [n, n]; for reconstruction it is the noisy sinogram
// [views, bins] expressed in phantom units x mm (i.e. divided by mu_per_unit).
struct SampleRecord {
  Tensor<float> degraded_input;
  Tensor<float> target;
  std::array<double, 7> geometry_raw{};
};

struct SimulatedSplit {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

// Pure function of the config. Record r of split s uses phantom and noise
// streams derived from (cfg.seed, s, r), so records can be produced in any
// order or in parallel with identical results.
SimulatedSplit simulate_dataset(const InstitutionConfig& cfg);
SampleRecord simulate_record(const InstitutionConfig& cfg, const ImageTensor<double>& phantom,
                             std::uint64_t noise_seed);

// Low-dose FBP of `phantom` under cfg, in phantom units.
ImageTensor<double> degraded_fbp(const InstitutionConfig& cfg, const ImageTensor<double>& phantom,
                                 std::uint64_t noise_seed);

// --- HFDS files ---------------------------------------------------------------

struct DatasetFile {
  Task task = Task::kPostProcessing;
  FanBeamGeometry geometry;
  int institution_id = 0;
  std::vector<SampleRecord> records;
};

inline constexpr std::uint8_t kHfdsVersion = 1;

void save_dataset(const std::filesystem::path& path, const DatasetFile& file);
DatasetFile load_dataset(const std::filesystem::path& path);

// Optional ingestion of external 16-bit grayscale rasters (binary PGM,
// maxval up to 65535), rescaled to [0, 1].
ImageTensor<double> load_grayscale16(const std::filesystem::path& path);

}  // namespace hyperfed
