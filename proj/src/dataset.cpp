#include "hyperfed/dataset.hpp"

#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hyperfed/binary_io.hpp"
#include "hyperfed/rng.hpp"

namespace hyperfed {

Task parse_task(std::string_view name) {
  if (name == "post_processing") return Task::kPostProcessing;
  if (name == "reconstruction") return Task::kReconstruction;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected post_processing or reconstruction)");
}

std::string to_string(Task task) {
  return task == Task::kPostProcessing ? "post_processing" : "reconstruction";
}

// ---------------------------------------------------------------------------
// Phantoms

const std::vector<Ellipse>& shepp_logan_ellipses() {
  static const std::vector<Ellipse> table = {
      {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
      {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
      {0.22, 0.0, 0.11, 0.31, -18.0, -0.2},
      {-0.22, 0.0, 0.16, 0.41, 18.0, -0.2},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
      {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
      {0.0, -0.605, 0.023, 0.023, 0.0, 0.1},
      {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
  };
  return table;
}

bool ellipse_contains(const Ellipse& e, double x, double y) {
  const double phi = e.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(phi), s = std::sin(phi);
  const double dx = x - e.cx, dy = y - e.cy;
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

ImageTensor<double> rasterize_ellipses(int n, const std::vector<Ellipse>& ellipses) {
  if (n < 16) throw ConfigError("phantom size must be >= 16, got " + std::to_string(n));
  const auto side = static_cast<std::size_t>(n);
  ImageTensor<double> img({side, side});
  const double centre = 0.5 * (n - 1);
  const double half = 0.5 * n;
  for (int i = 0; i < n; ++i) {
    const double y = (centre - i) / half;
    for (int j = 0; j < n; ++j) {
      const double x = (j - centre) / half;
      double v = 0.0;
      for (const auto& e : ellipses) {
        if (ellipse_contains(e, x, y)) v += e.value;
      }
      img.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

ImageTensor<double> shepp_logan(int n) { return rasterize_ellipses(n, shepp_logan_ellipses()); }

ImageTensor<double> random_phantom(int n, std::uint64_t seed) {
  if (n < 16) throw ConfigError("phantom size must be >= 16, got " + std::to_string(n));
  Rng rng(seed);
  auto unif = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const int count = std::uniform_int_distribution<int>(5, 12)(rng);
  std::vector<Ellipse> ellipses;
  // Body outline first; every inner structure is placed inside it.
  Ellipse body{unif(-0.04, 0.04), unif(-0.04, 0.04), unif(0.6, 0.84), unif(0.5, 0.8),
               unif(-30.0, 30.0), unif(0.25, 0.45)};
  ellipses.push_back(body);
  for (int k = 1; k < count; ++k) {
    const double r = std::sqrt(unif(0.0, 1.0)) * 0.6;
    const double t = unif(0.0, 2.0 * std::numbers::pi);
    Ellipse e{body.cx + r * body.a * std::cos(t), body.cy + r * body.b * std::sin(t),
              unif(0.03, 0.25),  unif(0.03, 0.25),
              unif(0.0, 180.0),  unif(-0.2, 0.5)};
    ellipses.push_back(e);
  }
  return rasterize_ellipses(n, ellipses);
}

// ---------------------------------------------------------------------------
// Presets

std::vector<FanBeamGeometry> institution_presets(Task task) {
  struct Row {
    int views, bins;
    double pixel, bin, sod, dod, intensity;
  };
  static const Row post[5] = {
      {512, 368, 1.33, 2.57, 595.0, 491.0, 0.5e5},
      {512, 315, 1.40, 3.00, 450.0, 350.0, 0.6875e5},
      {384, 330, 1.39, 2.60, 400.0, 300.0, 0.875e5},
      {400, 350, 1.20, 2.20, 400.0, 350.0, 1.0625e5},
      {384, 350, 1.40, 2.50, 500.0, 300.0, 1.25e5},
  };
  static const Row recon[5] = {
      {1024, 512, 0.66, 0.72, 250.0, 250.0, 1e5},
      {88, 768, 0.78, 0.58, 350.0, 300.0, 1e6},
      {1024, 768, 1.00, 0.62, 500.0, 400.0, 5e4},
      {128, 512, 1.20, 1.40, 500.0, 500.0, 2.5e5},
      {108, 512, 0.50, 0.40, 400.0, 200.0, 5e5},
  };
  const Row* rows = task == Task::kPostProcessing ? post : recon;
  std::vector<FanBeamGeometry> out;
  for (int k = 0; k < 5; ++k) {
    const Row& r = rows[k];
    FanBeamGeometry g;
    g.n_views = r.views;
    g.n_bins = r.bins;
    g.pixel_length_mm = r.pixel;
    g.bin_length_mm = r.bin;
    g.source_to_center_mm = r.sod;
    g.detector_to_center_mm = r.dod;
    g.incident_intensity = r.intensity;
    g.image_size = kReferenceGridSize;
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

void InstitutionConfig::validate() const {
  geometry.validate();
  if (n_train < 0 || n_test < 0) throw ConfigError("institution: n_train and n_test must be >= 0");
  if (!(mu_per_unit > 0)) throw ConfigError("institution: mu_per_unit must be > 0");
  if (subsample_factor < 0) throw ConfigError("institution: subsample_factor must be >= 0");
}

namespace {

Sinogram<double> noisy_sinogram(const InstitutionConfig& cfg, const ImageTensor<double>& phantom,
                                std::uint64_t noise_seed) {
  FanBeamGeometry acquire = cfg.geometry;
  if (cfg.subsample_factor > 0) acquire.n_views *= cfg.subsample_factor;
  ImageTensor<double> mu = phantom;
  for (auto& v : mu.data()) v *= cfg.mu_per_unit;
  Sinogram<double> sino = forward_project(mu, acquire);
  sino = apply_low_dose(sino, cfg.geometry.incident_intensity, noise_seed);
  if (cfg.subsample_factor > 0) sino = sparse_view_subsample(sino, cfg.geometry.n_views);
  return sino;
}

}  // namespace

ImageTensor<double> degraded_fbp(const InstitutionConfig& cfg, const ImageTensor<double>& phantom,
                                 std::uint64_t noise_seed) {
  ImageTensor<double> img = fbp_reconstruct(noisy_sinogram(cfg, phantom, noise_seed), cfg.filter);
  for (auto& v : img.data()) v /= cfg.mu_per_unit;
  return img;
}

SampleRecord simulate_record(const InstitutionConfig& cfg, const ImageTensor<double>& phantom,
                             std::uint64_t noise_seed) {
  SampleRecord rec;
  rec.target = phantom.cast<float>();
  rec.geometry_raw = cfg.geometry.raw_vector();
  if (cfg.task == Task::kPostProcessing) {
    rec.degraded_input = degraded_fbp(cfg, phantom, noise_seed).cast<float>();
  } else {
    Sinogram<double> sino = noisy_sinogram(cfg, phantom, noise_seed);
    for (auto& v : sino.data.data()) v /= cfg.mu_per_unit;
    rec.degraded_input = sino.data.cast<float>();
  }
  return rec;
}

SimulatedSplit simulate_dataset(const InstitutionConfig& cfg) {
  cfg.validate();
  SimulatedSplit out;
  auto make = [&](std::uint64_t split, int count, std::vector<SampleRecord>& dst) {
    dst.reserve(static_cast<std::size_t>(count));
    for (int r = 0; r < count; ++r) {
      const auto idx = static_cast<std::uint64_t>(r);
      const auto phantom =
          random_phantom(cfg.geometry.image_size, derive_seed(cfg.seed, "phantom", {split, idx}));
      dst.push_back(simulate_record(cfg, phantom, derive_seed(cfg.seed, "noise", {split, idx})));
    }
  };
  make(0, cfg.n_train, out.train);
  make(1, cfg.n_test, out.test);
  return out;
}

// ---------------------------------------------------------------------------
// HFDS

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& file) {
  ByteWriter w;
  w.bytes("HFDS");
  w.put<std::uint8_t>(kHfdsVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(file.task));
  for (double v : file.geometry.raw_vector()) w.put<double>(v);
  w.put<std::int32_t>(file.geometry.image_size);
  w.put<std::int32_t>(file.institution_id);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.records.size()));
  for (const auto& rec : file.records) {
    w.tensor(rec.degraded_input);
    w.tensor(rec.target);
  }
  write_file_bytes(path, w.buffer());
}

DatasetFile load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4) != "HFDS") {
    throw FormatError("'" + path.string() + "' is not an HFDS dataset (bad magic)");
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kHfdsVersion) {
    throw FormatError("unsupported HFDS version " + std::to_string(version));
  }
  const auto task = r.get<std::uint8_t>();
  if (task > 1) throw FormatError("invalid HFDS task tag " + std::to_string(task));
  DatasetFile file;
  file.task = static_cast<Task>(task);
  std::array<double, 7> raw{};
  for (auto& v : raw) v = r.get<double>();
  file.geometry.n_views = static_cast<int>(raw[0]);
  file.geometry.n_bins = static_cast<int>(raw[1]);
  file.geometry.pixel_length_mm = raw[2];
  file.geometry.bin_length_mm = raw[3];
  file.geometry.source_to_center_mm = raw[4];
  file.geometry.detector_to_center_mm = raw[5];
  file.geometry.incident_intensity = raw[6];
  file.geometry.image_size = r.get<std::int32_t>();
  file.institution_id = r.get<std::int32_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    SampleRecord rec;
    rec.degraded_input = r.tensor();
    rec.target = r.tensor();
    rec.geometry_raw = raw;
    file.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after HFDS records");
  return file;
}

ImageTensor<double> load_grayscale16(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream header(text);
  std::string magic;
  header >> magic;
  if (magic != "P5") throw FormatError("'" + path.string() + "' is not a binary PGM");
  auto next_int = [&]() {
    std::string tok;
    while (header >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(header, rest);
        continue;
      }
      return std::stoi(tok);
    }
    throw FormatError("truncated PGM header");
  };
  const int width = next_int(), height = next_int(), maxval = next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw FormatError("invalid PGM header values");
  }
  header.get();  // single whitespace before the raster
  const auto offset = static_cast<std::size_t>(header.tellg());
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const auto count = static_cast<std::size_t>(width) * height;
  if (bytes.size() < offset + count * bpp) throw FormatError("truncated PGM raster");
  ImageTensor<double> img({static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  for (std::size_t i = 0; i < count; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset + i * bpp);
    const unsigned v = bpp == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
    img[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

}  // namespace hyperfed
