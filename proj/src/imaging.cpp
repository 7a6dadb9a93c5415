#include "hyperfed/imaging.hpp"

#include <cmath>
#include <random>

#include "hyperfed/binary_io.hpp"
#include "hyperfed/rng.hpp"

namespace hyperfed {

UnrolledInit parse_unrolled_init(std::string_view name) {
  if (name == "fbp") return UnrolledInit::kFbp;
  if (name == "zero") return UnrolledInit::kZero;
  throw ConfigError("unknown unrolled init '" + std::string(name) + "' (expected fbp or zero)");
}

std::string to_string(UnrolledInit init) { return init == UnrolledInit::kFbp ? "fbp" : "zero"; }

// ---------------------------------------------------------------------------
// Layout

void NetworkConfig::validate() const {
  if (channels <= 0) throw ConfigError("network.channels must be positive");
  if (n_iterations < 0) throw ConfigError("network.n_iterations must be >= 0");
  if (reg_channels <= 0) throw ConfigError("network.reg_channels must be positive");
  if (hyper_hidden <= 0) throw ConfigError("network.hyper_hidden must be positive");
}

SiteLayout NetworkConfig::site_layout() const {
  SiteLayout layout;
  if (kind == NetKind::kPostProcessing) {
    layout.channels.assign(7, static_cast<std::size_t>(channels));
    layout.channels.push_back(1);
  } else {
    layout.channels.assign(static_cast<std::size_t>(n_iterations),
                           static_cast<std::size_t>(reg_channels));
  }
  return layout;
}

std::vector<Shape> NetworkConfig::block_shapes() const {
  std::vector<Shape> shapes;
  if (kind == NetKind::kPostProcessing) {
    const auto c = static_cast<std::size_t>(channels);
    const std::size_t in[8] = {1, c, c, c, c, c, c, c};
    const std::size_t out[8] = {c, c, c, c, c, c, c, 1};
    for (int l = 0; l < 8; ++l) {
      shapes.push_back({out[l], in[l], 3, 3});
      shapes.push_back({out[l]});
    }
  } else {
    const auto r = static_cast<std::size_t>(reg_channels);
    for (int t = 0; t < n_iterations; ++t) {
      shapes.push_back({1});
      shapes.push_back({r, 1, 3, 3});
      shapes.push_back({r});
      shapes.push_back({1, r, 3, 3});
      shapes.push_back({1});
    }
  }
  return shapes;
}

template <typename T>
std::size_t ImagingParams<T>::flat_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

template <typename T>
std::vector<T> ImagingParams<T>::flatten() const {
  std::vector<T> flat;
  flat.reserve(flat_size());
  for (const auto& b : blocks) flat.insert(flat.end(), b.data().begin(), b.data().end());
  return flat;
}

template <typename T>
ImagingParams<T> init_imaging_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ImagingParams<T> p;
  p.kind = cfg.kind;
  p.site_layout = cfg.site_layout();
  Rng rng(seed);
  const auto shapes = cfg.block_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Shape& s = shapes[i];
    Tensor<T> block(s);
    bool zero_kernel = false;
    if (cfg.kind == NetKind::kPostProcessing) {
      zero_kernel = i == shapes.size() - 2;
    } else {
      zero_kernel = i % 5 == 3;
      if (i % 5 == 0) block.fill(T{1});
    }
    if (s.size() == 4 && !zero_kernel) {
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : block.data()) v = static_cast<T>(normal(rng));
    }
    p.blocks.push_back(std::move(block));
  }
  return p;
}

// ---------------------------------------------------------------------------
// FiLM

template <typename T>
Var<T> film_modulate(Var<T> feature, Var<T> gamma, Var<T> beta) {
  const Shape& fs = feature.shape();
  if (fs.size() != 4) {
    throw DimensionError("film_modulate: feature must be [N,C,H,W], got " + shape_to_string(fs));
  }
  const std::size_t n = fs[0], c = fs[1], plane = fs[2] * fs[3];
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw DimensionError("film_modulate: feature has " + std::to_string(c) +
                         " channels but gamma/beta have " + std::to_string(gamma.value().size()) +
                         "/" + std::to_string(beta.value().size()));
  }
  const auto& fv = feature.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(fs);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * plane;
      const T g = gv[ch], s = bv[ch];
      for (std::size_t k = 0; k < plane; ++k) out[base + k] = g * fv[base + k] + s;
    }
  }
  const auto i_f = feature.id(), i_g = gamma.id(), i_b = beta.id();
  return feature.tape().record(
      std::move(out), {feature, gamma, beta},
      [i_f, i_g, i_b, n, c, plane](Tape<T>& t, const Tensor<T>& g) {
        const auto& fv = t.value(i_f);
        const auto& gv = t.value(i_g);
        if (t.requires_grad(i_f)) {
          Tensor<T>& gf = t.grad_buffer(i_f);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (b * c + ch) * plane;
              for (std::size_t k = 0; k < plane; ++k) gf[base + k] += gv[ch] * g[base + k];
            }
          }
        }
        const bool need_g = t.requires_grad(i_g), need_b = t.requires_grad(i_b);
        if (!need_g && !need_b) return;
        Tensor<T>& gg = t.grad_buffer(i_g);
        Tensor<T>& gb = t.grad_buffer(i_b);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sg = 0.0, sb = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t k = 0; k < plane; ++k) {
              sg += static_cast<double>(g[base + k]) * fv[base + k];
              sb += g[base + k];
            }
          }
          if (need_g) gg[ch] += static_cast<T>(sg);
          if (need_b) gb[ch] += static_cast<T>(sb);
        }
      });
}

namespace {

template <typename T>
Var<T> modulate(Var<T> feature, const FiLMVars<T>& film, std::size_t site) {
  if (film.is_identity()) return feature;
  return film_modulate(feature, film.gamma.at(site), film.beta.at(site));
}

template <typename T>
void check_layout(const std::vector<Var<T>>& w, const NetworkConfig& cfg, const FiLMVars<T>& film) {
  const auto shapes = cfg.block_shapes();
  if (w.size() != shapes.size()) {
    throw DimensionError("imaging network expects " + std::to_string(shapes.size()) +
                         " parameter blocks, got " + std::to_string(w.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (w[i].shape() != shapes[i]) {
      throw DimensionError("parameter block " + std::to_string(i) + " has shape " +
                           shape_to_string(w[i].shape()) + ", expected " +
                           shape_to_string(shapes[i]));
    }
  }
  if (!film.is_identity()) {
    const SiteLayout layout = cfg.site_layout();
    if (film.gamma.size() != layout.site_count() || film.beta.size() != layout.site_count()) {
      throw DimensionError("FiLM parameters cover " + std::to_string(film.gamma.size()) +
                           " sites, network has " + std::to_string(layout.site_count()));
    }
  }
}

}  // namespace

template <typename T>
Var<T> postproc_forward(Var<T> x, const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                        const FiLMVars<T>& film) {
  if (cfg.kind != NetKind::kPostProcessing) {
    throw ContractError("postproc_forward called with an unrolled network config");
  }
  check_layout(w, cfg, film);
  if (x.shape().size() != 4 || x.shape()[1] != 1) {
    throw DimensionError("postproc_forward: input must be [N,1,H,W], got " +
                         shape_to_string(x.shape()));
  }
  auto layer = [&](Var<T> in, std::size_t l) {
    return modulate(conv2d(in, w[2 * l], w[2 * l + 1], 1, 1), film, l);
  };
  auto e1 = relu(layer(x, 0));
  auto e2 = relu(layer(e1, 1));
  auto e3 = relu(layer(e2, 2));
  auto e4 = relu(layer(e3, 3));
  auto d1 = relu(add(layer(e4, 4), e3));
  auto d2 = relu(layer(d1, 5));
  auto d3 = relu(add(layer(d2, 6), e1));
  return add(x, layer(d3, 7));
}

UnrolledOperator::UnrolledOperator(const FanBeamGeometry& geometry, int power_iterations)
    : projector(geometry),
      base_step(0.8 / estimate_operator_norm_sq(projector, power_iterations)) {}

UnrolledOperator::UnrolledOperator(const FanBeamGeometry& geometry, double step)
    : projector(geometry), base_step(step) {
  if (!(step > 0)) throw ConfigError("unrolled base step must be positive");
}

template <typename T>
Tensor<T> unrolled_initial_image(const Tensor<T>& sino, const UnrolledOperator& op,
                                 const NetworkConfig& cfg) {
  const FanBeamGeometry& g = op.projector.geometry();
  if (sino.size() != static_cast<std::size_t>(g.n_views) * g.n_bins) {
    throw DimensionError("unrolled_forward: sinogram " + shape_to_string(sino.shape()) +
                         " does not match geometry " + std::to_string(g.n_views) + "x" +
                         std::to_string(g.n_bins));
  }
  const auto n = static_cast<std::size_t>(g.image_size);
  if (cfg.init == UnrolledInit::kZero) return Tensor<T>({n, n});
  Sinogram<T> s{sino.reshaped({static_cast<std::size_t>(g.n_views),
                               static_cast<std::size_t>(g.n_bins)}),
                g};
  return fbp_reconstruct(s, cfg.init_filter);
}

template <typename T>
Var<T> unrolled_forward(Tape<T>& tape, const Tensor<T>& sino, const UnrolledOperator& op,
                        const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                        const FiLMVars<T>& film) {
  if (cfg.kind != NetKind::kUnrolled) {
    throw ContractError("unrolled_forward called with a post-processing network config");
  }
  check_layout(w, cfg, film);
  const FanBeamGeometry& g = op.projector.geometry();
  const auto n = static_cast<std::size_t>(g.image_size);
  const Shape image_shape{1, 1, n, n};
  const Shape sino_shape{static_cast<std::size_t>(g.n_views), static_cast<std::size_t>(g.n_bins)};
  Tensor<T> x0 = unrolled_initial_image(sino, op, cfg);

  Var<T> x = tape.constant(x0.reshaped(image_shape));
  if (cfg.n_iterations == 0) return x;
  Var<T> y = tape.constant(sino.reshaped(sino_shape));

  const FanBeamProjector* proj = &op.projector;
  const LinearMap<T> forward = [proj](const Tensor<T>& img) { return proj->forward(img); };
  const LinearMap<T> adjoint = [proj, image_shape](const Tensor<T>& s) {
    return proj->back(s).reshaped(image_shape);
  };
  const T base = static_cast<T>(op.base_step);
  for (int t = 0; t < cfg.n_iterations; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * 5;
    auto residual = sub(apply_linear(x, forward, adjoint), y);
    auto gradient = apply_linear(residual, adjoint, forward);
    auto step = scale(mul_by_scalar_var(gradient, w[o]), base);
    auto h = relu(modulate(conv2d(x, w[o + 1], w[o + 2], 1, 1), film,
                           static_cast<std::size_t>(t)));
    auto reg = conv2d(h, w[o + 3], w[o + 4], 1, 1);
    x = add(sub(x, step), reg);
  }
  return x;
}

template <typename T>
Var<T> imaging_forward(Tape<T>& tape, const Tensor<T>& degraded_input,
                       const std::vector<Var<T>>& w, const NetworkConfig& cfg,
                       const FiLMVars<T>& film, const UnrolledOperator* op) {
  Var<T> out;
  std::size_t n = 0;
  if (cfg.kind == NetKind::kPostProcessing) {
    if (degraded_input.rank() != 2 || degraded_input.dim(0) != degraded_input.dim(1)) {
      throw DimensionError("post-processing input must be a square image, got " +
                           shape_to_string(degraded_input.shape()));
    }
    n = degraded_input.dim(0);
    out = postproc_forward(tape.constant(degraded_input.reshaped({1, 1, n, n})), w, cfg, film);
  } else {
    if (op == nullptr) throw ContractError("unrolled network needs a projector");
    n = static_cast<std::size_t>(op->projector.geometry().image_size);
    out = unrolled_forward(tape, degraded_input, *op, w, cfg, film);
  }
  return reshape(out, {n, n});
}

template <typename T>
Tensor<T> imaging_predict(const Tensor<T>& degraded_input, const ImagingParams<T>& w,
                          const NetworkConfig& cfg, const FiLMParams<T>* film,
                          const UnrolledOperator* op) {
  if (cfg.kind == NetKind::kUnrolled && cfg.n_iterations == 0) {
    if (op == nullptr) throw ContractError("unrolled network needs a projector");
    return unrolled_initial_image(degraded_input, *op, cfg);
  }
  Tape<T> tape;
  auto wv = bind_blocks(tape, w.blocks, false);
  FiLMVars<T> fv;
  if (film != nullptr) {
    for (std::size_t i = 0; i < film->gamma.size(); ++i) {
      fv.gamma.push_back(tape.constant(film->gamma[i]));
      fv.beta.push_back(tape.constant(film->beta[i]));
    }
  }
  return imaging_forward(tape, degraded_input, wv, cfg, fv, op).value();
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes("HFCK");
  w.put<std::uint8_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.content));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.site_layout.site_count()));
  for (std::size_t c : ckpt.site_layout.channels) w.put<std::uint32_t>(static_cast<std::uint32_t>(c));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) w.tensor(b);
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const char> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4) != "HFCK") throw FormatError("not an HFCK checkpoint (bad magic)");
  const auto version = r.get<std::uint8_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported HFCK version " + std::to_string(version));
  }
  Checkpoint c;
  const auto content = r.get<std::uint8_t>();
  const auto kind = r.get<std::uint8_t>();
  if (content > 1 || kind > 1) throw FormatError("invalid HFCK content or network tag");
  c.content = static_cast<CheckpointContent>(content);
  c.kind = static_cast<NetKind>(kind);
  const auto sites = r.get<std::uint32_t>();
  if (sites > r.remaining() / 4) throw FormatError("HFCK site count exceeds file size");
  for (std::uint32_t i = 0; i < sites; ++i) c.site_layout.channels.push_back(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) c.blocks.push_back(r.tensor());
  if (!r.at_end()) throw FormatError("trailing bytes after HFCK blocks");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

Checkpoint to_checkpoint(const ImagingParams<float>& w) {
  return {CheckpointContent::kImaging, w.kind, w.site_layout, w.blocks};
}

Checkpoint to_checkpoint(const HyperParams<float>& xi, const SiteLayout& layout, NetKind kind) {
  return {CheckpointContent::kHypernet, kind, layout, xi.blocks};
}

namespace {

void check_blocks(const std::vector<Tensor<float>>& blocks, const std::vector<Shape>& shapes,
                  const char* what) {
  if (blocks.size() != shapes.size()) {
    throw FormatError(std::string(what) + " checkpoint has " + std::to_string(blocks.size()) +
                      " blocks, network expects " + std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (blocks[i].shape() != shapes[i]) {
      throw FormatError(std::string(what) + " checkpoint block " + std::to_string(i) + " is " +
                        shape_to_string(blocks[i].shape()) + ", expected " +
                        shape_to_string(shapes[i]));
    }
  }
}

}  // namespace

ImagingParams<float> imaging_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& cfg) {
  if (ckpt.content != CheckpointContent::kImaging || ckpt.kind != cfg.kind ||
      !(ckpt.site_layout == cfg.site_layout())) {
    throw FormatError("checkpoint does not hold imaging parameters for this network");
  }
  check_blocks(ckpt.blocks, cfg.block_shapes(), "imaging");
  return {ckpt.kind, ckpt.site_layout, ckpt.blocks};
}

HyperParams<float> hyper_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& cfg) {
  const SiteLayout layout = cfg.site_layout();
  if (ckpt.content != CheckpointContent::kHypernet || !(ckpt.site_layout == layout)) {
    throw FormatError("checkpoint does not hold hypernetwork parameters for this network");
  }
  const auto h = static_cast<std::size_t>(cfg.hyper_hidden);
  const std::size_t width = layout.film_width();
  check_blocks(ckpt.blocks, {{h, 7}, {h}, {width, h}, {width}}, "hypernetwork");
  return {ckpt.blocks};
}

#define HYPERFED_INSTANTIATE_IMAGING(T)                                                     \
  template struct ImagingParams<T>;                                                         \
  template ImagingParams<T> init_imaging_params<T>(const NetworkConfig&, std::uint64_t);    \
  template Var<T> film_modulate<T>(Var<T>, Var<T>, Var<T>);                                 \
  template Var<T> postproc_forward<T>(Var<T>, const std::vector<Var<T>>&,                   \
                                      const NetworkConfig&, const FiLMVars<T>&);            \
  template Tensor<T> unrolled_initial_image<T>(const Tensor<T>&, const UnrolledOperator&,   \
                                               const NetworkConfig&);                       \
  template Var<T> unrolled_forward<T>(Tape<T>&, const Tensor<T>&, const UnrolledOperator&,  \
                                      const std::vector<Var<T>>&, const NetworkConfig&,     \
                                      const FiLMVars<T>&);                                  \
  template Var<T> imaging_forward<T>(Tape<T>&, const Tensor<T>&, const std::vector<Var<T>>&, \
                                     const NetworkConfig&, const FiLMVars<T>&,              \
                                     const UnrolledOperator*);                              \
  template Tensor<T> imaging_predict<T>(const Tensor<T>&, const ImagingParams<T>&,          \
                                        const NetworkConfig&, const FiLMParams<T>*,         \
                                        const UnrolledOperator*);

HYPERFED_INSTANTIATE_IMAGING(float)
HYPERFED_INSTANTIATE_IMAGING(double)

#undef HYPERFED_INSTANTIATE_IMAGING

}  // namespace hyperfed
