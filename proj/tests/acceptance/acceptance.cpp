// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "hyperfed/autodiff.hpp"
#include "hyperfed/dataset.hpp"
#include "hyperfed/experiment.hpp"
#include "hyperfed/federation.hpp"
#include "hyperfed/hypernet.hpp"
#include "hyperfed/imaging.hpp"

using namespace hyperfed;
namespace fs = std::filesystem;

namespace {

// Collects failed checks of one criterion.
struct Outcome {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = unif(rng);
  return t;
}

Tensor<double> finite_difference(const std::function<double(const Tensor<double>&)>& f,
                                 const Tensor<double>& at, double h = 1e-5) {
  Tensor<double> grad(at.shape());
  Tensor<double> probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

FanBeamGeometry small_geometry(int n, int views, int bins) {
  FanBeamGeometry g;
  g.n_views = views;
  g.n_bins = bins;
  g.pixel_length_mm = 1.0;
  g.bin_length_mm = 2.0 * n * 1.6 / bins;
  g.source_to_center_mm = 3.0 * n;
  g.detector_to_center_mm = 3.0 * n;
  g.incident_intensity = 1e5;
  g.image_size = n;
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hyperfed_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path source_path(const std::string& rel) { return fs::path(HYPERFED_SOURCE_DIR) / rel; }

// ---------------------------------------------------------------- physics

void physics(Outcome& out) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (Task task : {Task::kPostProcessing, Task::kReconstruction}) {
    for (const auto& ref : institution_presets(task)) {
      const auto g = desk_scale(ref, 64);
      const auto n = static_cast<std::size_t>(g.image_size);
      auto x = random_tensor({n, n}, rng, 0.0, 1.0);
      auto y = random_tensor({static_cast<std::size_t>(g.n_views), static_cast<std::size_t>(g.n_bins)}, rng);
      auto ax = forward_project(x, g).data;
      const double lhs = dot(ax, y);
      const double rhs = dot(x, back_project(Sinogram<double>{y, g}, g));
      worst = std::max(worst, std::abs(lhs - rhs) / (l2_norm(ax) * l2_norm(y)));
    }
  }
  out.check(worst < 1e-8, "adjoint identity on presets: " + fmt("%.3g", worst));
  out.note("adjoint " + fmt("%.2g", worst));

  // Dense system matrix assembled from unit impulses.
  const auto g8 = small_geometry(8, 12, 15);
  std::vector<Tensor<double>> cols;
  for (std::size_t p = 0; p < 64; ++p) {
    Tensor<double> e({8, 8});
    e[p] = 1.0;
    cols.push_back(forward_project(e, g8).data);
  }
  auto x = random_tensor({8, 8}, rng);
  auto y = random_tensor({12, 15}, rng);
  Tensor<double> ax_dense({12, 15}), aty_dense({8, 8});
  for (std::size_t p = 0; p < cols.size(); ++p) {
    for (std::size_t r = 0; r < ax_dense.size(); ++r) ax_dense[r] += cols[p][r] * x[p];
    aty_dense[p] = dot(cols[p], y);
  }
  const double e_fwd = relative_error(forward_project(x, g8).data, ax_dense);
  const double e_bwd = relative_error(back_project(Sinogram<double>{y, g8}, g8), aty_dense);
  out.check(e_fwd < 1e-10, "dense A: " + fmt("%.3g", e_fwd));
  out.check(e_bwd < 1e-10, "dense A^T: " + fmt("%.3g", e_bwd));

  // Uniform disk, area-weighted edges: the central ray crosses 2 r mu.
  const int n = 128;
  const double radius = 40.0, mu = 0.02;
  auto gd = small_geometry(n, 8, 257);
  Tensor<double> disk({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  const double c = 0.5 * (n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int inside = 0;
      for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b) {
          const double px = (j - c - 0.5 + (b + 0.5) / 8) * gd.pixel_length_mm;
          const double py = (c - i - 0.5 + (a + 0.5) / 8) * gd.pixel_length_mm;
          if (px * px + py * py <= radius * radius) ++inside;
        }
      }
      disk.at(i, j) = mu * inside / 64.0;
    }
  }
  auto sino = forward_project(disk, gd);
  double disk_err = 0.0;
  for (int v = 0; v < gd.n_views; ++v) {
    const double got = sino.data.at(static_cast<std::size_t>(v), 128);
    disk_err = std::max(disk_err, std::abs(got - 2.0 * radius * mu) / (2.0 * radius * mu));
  }
  out.check(disk_err < 0.01, "disk line integral: " + fmt("%.3g", disk_err));
  out.note("disk " + fmt("%.2g", disk_err));
}

// -------------------------------------------------------------- gradients

template <typename Program>
double tape_vs_fd(Program program, const Tensor<double>& x) {
  Tape<double> tape;
  auto leaf = tape.leaf(x, true);
  tape.backward(program(tape, leaf));
  const auto analytic = tape.grad(leaf);
  const auto numeric = finite_difference([&](const Tensor<double>& p) {
    Tape<double> t;
    return program(t, t.leaf(p, false)).value()[0];
  }, x);
  return relative_error(analytic, numeric);
}

void gradients(Outcome& out) {
  std::mt19937_64 rng(7);

  const auto x = random_tensor({1, 2, 5, 5}, rng);
  const auto k = random_tensor({3, 2, 3, 3}, rng);
  const auto b = random_tensor({3}, rng);
  double conv = 0.0;
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      conv = std::max(conv, tape_vs_fd([&](Tape<double>& t, Var<double> in) {
        return sum(conv2d(in, t.constant(k), t.constant(b), stride, pad));
      }, x));
      conv = std::max(conv, tape_vs_fd([&](Tape<double>& t, Var<double> kern) {
        return sum(conv2d(t.constant(x), kern, t.constant(b), stride, pad));
      }, k));
      conv = std::max(conv, tape_vs_fd([&](Tape<double>& t, Var<double> bias) {
        auto y = conv2d(t.constant(x), t.constant(k), bias, stride, pad);
        return sum(mul(y, y));
      }, b));
    }
  }
  out.check(conv < 1e-4, "conv2d: " + fmt("%.3g", conv));

  const auto pred = random_tensor({3, 4}, rng), target = random_tensor({3, 4}, rng);
  const double mse = tape_vs_fd([&](Tape<double>& t, Var<double> p) {
    return mse_loss(p, t.constant(target));
  }, pred);
  out.check(mse < 1e-5, "mse: " + fmt("%.3g", mse));

  auto feature = random_tensor({2, 3, 4, 4}, rng);
  auto gamma = random_tensor({3}, rng), beta = random_tensor({3}, rng);
  auto fw = random_tensor({2, 3, 4, 4}, rng);
  double film = 0.0;
  film = std::max(film, tape_vs_fd([&](Tape<double>& t, Var<double> f) {
    return sum(mul(film_modulate(f, t.constant(gamma), t.constant(beta)), t.constant(fw)));
  }, feature));
  film = std::max(film, tape_vs_fd([&](Tape<double>& t, Var<double> gv) {
    return sum(mul(film_modulate(t.constant(feature), gv, t.constant(beta)), t.constant(fw)));
  }, gamma));
  film = std::max(film, tape_vs_fd([&](Tape<double>& t, Var<double> bv) {
    return sum(mul(film_modulate(t.constant(feature), t.constant(gamma), bv), t.constant(fw)));
  }, beta));
  out.check(film < 1e-4, "FiLM: " + fmt("%.3g", film));

  // Hypernetwork: every parameter block through a random linear readout.
  SiteLayout layout{{3, 2}};
  auto xi = init_hyper_params<double>(layout, 6, 5);
  for (auto& blk : xi.blocks) blk = random_tensor(blk.shape(), rng, -0.8, 0.8);
  GeometryVector gvec;
  gvec.values = {0.3, 0.1, 0.8, 0.5, 0.9, 0.2, 0.6};
  std::vector<Tensor<double>> cg, cb;
  for (std::size_t ch : layout.channels) {
    cg.push_back(random_tensor({ch}, rng));
    cb.push_back(random_tensor({ch}, rng));
  }
  auto hyper_objective = [&](const std::vector<Tensor<double>>& blocks, Tape<double>& tape,
                             std::vector<Var<double>>& vars) {
    vars = bind_blocks(tape, blocks, true);
    auto f = hyper_forward(gvec, vars, layout);
    Var<double> total;
    for (std::size_t s = 0; s < layout.site_count(); ++s) {
      auto term = add(sum(mul(f.gamma[s], tape.constant(cg[s]))), sum(mul(f.beta[s], tape.constant(cb[s]))));
      total = s == 0 ? term : add(total, term);
    }
    return total;
  };
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    tape.backward(hyper_objective(xi.blocks, tape, vars));
    double hyper = 0.0;
    for (std::size_t blk = 0; blk < xi.blocks.size(); ++blk) {
      auto numeric = finite_difference([&](const Tensor<double>& p) {
        auto blocks = xi.blocks;
        blocks[blk] = p;
        Tape<double> t;
        std::vector<Var<double>> v;
        return hyper_objective(blocks, t, v).value()[0];
      }, xi.blocks[blk]);
      hyper = std::max(hyper, relative_error(tape.grad(vars[blk]), numeric));
    }
    out.check(hyper < 1e-4, "hypernetwork: " + fmt("%.3g", hyper));
  }

  // Unrolled iterations, differentiated through A and A^T, every w block and
  // every FiLM gamma/beta.
  auto g = small_geometry(8, 12, 15);
  UnrolledOperator op(g);
  NetworkConfig cfg;
  cfg.kind = NetKind::kUnrolled;
  cfg.n_iterations = 2;
  cfg.reg_channels = 2;
  auto w = init_imaging_params<double>(cfg, 5);
  for (auto& blk : w.blocks) {
    if (blk.size() == 1 && blk.rank() == 1) continue;
    blk = random_tensor(blk.shape(), rng, -0.5, 0.5);
  }
  w.blocks[0][0] = 0.9;
  w.blocks[5][0] = 1.2;
  FiLMParams<double> fp;
  for (std::size_t ch : cfg.site_layout().channels) {
    fp.gamma.push_back(random_tensor({ch}, rng, 0.5, 1.5));
    fp.beta.push_back(random_tensor({ch}, rng, -0.2, 0.2));
  }
  auto phantom = random_phantom(16, 1);
  Tensor<double> small({8, 8});
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) small.at(i, j) = phantom.at(2 * i, 2 * j);
  }
  auto y = forward_project(small, g).data;
  auto constant_film = [](Tape<double>& t, const FiLMParams<double>& p) {
    FiLMVars<double> f;
    for (std::size_t s = 0; s < p.gamma.size(); ++s) {
      f.gamma.push_back(t.constant(p.gamma[s]));
      f.beta.push_back(t.constant(p.beta[s]));
    }
    return f;
  };
  auto loss_of = [&](const std::vector<Tensor<double>>& blocks, const FiLMParams<double>& f) {
    Tape<double> t;
    auto wv = bind_blocks(t, blocks, false);
    return mse_loss(imaging_forward(t, y, wv, cfg, constant_film(t, f), &op), t.constant(small)).value()[0];
  };
  Tape<double> tape;
  auto wv = bind_blocks(tape, w.blocks, true);
  FiLMVars<double> fv;
  for (std::size_t s = 0; s < fp.gamma.size(); ++s) {
    fv.gamma.push_back(tape.leaf(fp.gamma[s], true));
    fv.beta.push_back(tape.leaf(fp.beta[s], true));
  }
  tape.backward(mse_loss(imaging_forward(tape, y, wv, cfg, fv, &op), tape.constant(small)));
  double unrolled = 0.0;
  for (std::size_t blk = 0; blk < w.blocks.size(); ++blk) {
    auto numeric = finite_difference([&](const Tensor<double>& p) {
      auto blocks = w.blocks;
      blocks[blk] = p;
      return loss_of(blocks, fp);
    }, w.blocks[blk]);
    unrolled = std::max(unrolled, relative_error(tape.grad(wv[blk]), numeric));
  }
  for (std::size_t s = 0; s < fp.gamma.size(); ++s) {
    auto ng = finite_difference([&](const Tensor<double>& p) {
      auto f = fp;
      f.gamma[s] = p;
      return loss_of(w.blocks, f);
    }, fp.gamma[s]);
    auto nb = finite_difference([&](const Tensor<double>& p) {
      auto f = fp;
      f.beta[s] = p;
      return loss_of(w.blocks, f);
    }, fp.beta[s]);
    unrolled = std::max(unrolled, relative_error(tape.grad(fv.gamma[s]), ng));
    unrolled = std::max(unrolled, relative_error(tape.grad(fv.beta[s]), nb));
  }
  out.check(unrolled < 1e-3, "unrolled: " + fmt("%.3g", unrolled));
  out.note("conv " + fmt("%.1e", conv) + ", mse " + fmt("%.1e", mse) + ", film " + fmt("%.1e", film) +
           ", unrolled " + fmt("%.1e", unrolled));
}

// ------------------------------------------------------------- federation

std::string toy_config(const std::string& task, int institutions, int grid, const std::string& extra) {
  std::string insts;
  for (int i = 1; i <= institutions; ++i) {
    if (i > 1) insts += ",";
    insts += R"({"id": )" + std::to_string(i) + R"(, "preset": )" + std::to_string(i) + "}";
  }
  return R"({"schema_version": 1, "task": ")" + task + R"(", "seed": 11, "grid_size": )" +
         std::to_string(grid) + R"(,
    "network": {"channels": 4, "hyper_hidden": 8, "n_iterations": 2, "reg_channels": 4},
    "strategy": {"name": "hyperfed", "local_epochs": 2, "rounds": 2, "learning_rate": 0.001},
    "defaults": {"n_train": 3, "n_test": 2}, )" + extra + R"("institutions": [)" + insts + "]}";
}

std::vector<ClientData> toy_clients(const ExperimentConfig& cfg) { return simulate_clients(cfg); }

void federation(Outcome& out) {
  auto cfg = parse_config_text(toy_config("post_processing", 5, 16, ""));
  const auto& net = cfg.network;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size_dist(1, 200);
  std::vector<ImagingParams<double>> ws;
  std::vector<std::size_t> sizes;
  for (int k = 0; k < 5; ++k) {
    auto w = init_imaging_params<double>(net, 1);
    for (auto& blk : w.blocks) blk = random_tensor(blk.shape(), rng, -2.0, 2.0);
    ws.push_back(std::move(w));
    sizes.push_back(size_dist(rng));
  }
  const auto agg = aggregate<double>(ws, sizes).flatten();
  double total = 0.0;
  for (auto s : sizes) total += static_cast<double>(s);
  std::vector<std::vector<double>> flats;
  for (const auto& w : ws) flats.push_back(w.flatten());
  double worst = 0.0;
  bool convex = true;
  for (std::size_t i = 0; i < agg.size(); ++i) {
    double oracle = 0.0, lo = 1e300, hi = -1e300;
    for (std::size_t k = 0; k < 5; ++k) {
      oracle += static_cast<double>(sizes[k]) / total * flats[k][i];
      lo = std::min(lo, flats[k][i]);
      hi = std::max(hi, flats[k][i]);
    }
    worst = std::max(worst, std::abs(agg[i] - oracle));
    convex = convex && agg[i] >= lo && agg[i] <= hi;
  }
  out.check(worst < 1e-12, "flat weighted-sum oracle: " + fmt("%.3g", worst));
  out.check(convex, "convexity bound");
  double wsum = 0.0;
  for (double v : aggregation_weights(sizes)) wsum += v;
  out.check(std::abs(wsum - 1.0) < 1e-15, "weights sum to 1: " + fmt("%.3g", wsum - 1.0));

  // One institution: FedAvg and local training coincide bit for bit.
  {
    auto one = parse_config_text(toy_config("post_processing", 1, 16, ""));
    auto clients = toy_clients(one);
    std::vector<FanBeamGeometry> geoms{clients[0].geometry};
    auto bounds = GeometryBounds::from_geometries(geoms);
    auto s = one.strategy;
    s.strategy = Strategy::kFedAvg;
    auto fed = run_rounds(clients, s, net, bounds, 5);
    s.strategy = Strategy::kLocalOnly;
    auto local = run_rounds(clients, s, net, bounds, 5);
    bool same = fed.models[0].shared_w.blocks.size() == local.models[0].shared_w.blocks.size();
    for (std::size_t b = 0; same && b < fed.models[0].shared_w.blocks.size(); ++b) {
      same = fed.models[0].shared_w.blocks[b] == local.models[0].shared_w.blocks[b];
    }
    out.check(same && fed.history == local.history, "single-client FedAvg equals local training");
  }

  // Privacy: no 4-float window of any xi appears in any exchanged payload.
  {
    auto three = parse_config_text(toy_config("post_processing", 3, 16, ""));
    auto clients = toy_clients(three);
    PayloadChannel channel(true);
    RunOptions opts;
    opts.channel = &channel;
    opts.evaluate_rounds = false;
    auto res = run_rounds(clients, three.strategy, net, experiment_bounds(clients), 4, opts);
    std::vector<const HyperParams<float>*> xis{&res.initial_xi};
    for (const auto& m : res.models) xis.push_back(&m.private_xi);
    constexpr std::size_t kWindow = 4;
    std::size_t probes = 0, leaks = 0;
    for (const auto* xi : xis) {
      for (const auto& block : xi->blocks) {
        const auto* raw = reinterpret_cast<const char*>(block.raw());
        for (std::size_t i = 0; i + kWindow <= block.size(); i += kWindow) {
          bool all_zero = true;
          for (std::size_t j = 0; j < kWindow; ++j) all_zero = all_zero && block[i + j] == 0.0f;
          if (all_zero) continue;
          ++probes;
          const char* probe = raw + i * sizeof(float);
          for (const auto& msg : channel.messages()) {
            if (std::search(msg.bytes.begin(), msg.bytes.end(), probe, probe + kWindow * sizeof(float)) !=
                msg.bytes.end()) {
              ++leaks;
            }
          }
        }
      }
    }
    bool imaging_only = channel.message_count() == 2u * 2u * 3u;
    for (const auto& msg : channel.messages()) {
      imaging_only = imaging_only && decode_checkpoint(msg.bytes).content == CheckpointContent::kImaging;
    }
    out.check(probes > 50 && leaks == 0, "privacy probes " + std::to_string(probes) + ", leaks " +
                                             std::to_string(leaks));
    out.check(imaging_only, "payloads carry imaging parameters only");
    out.note("aggregation " + fmt("%.1e", worst) + ", " + std::to_string(probes) + " privacy probes");
  }
}

// ---------------------------------------------------------- identity FiLM

void identity_film(Outcome& out) {
  for (const std::string task : {"post_processing", "reconstruction"}) {
    auto cfg = parse_config_text(toy_config(task, 3, 32, ""));
    auto clients = toy_clients(cfg);
    const auto bounds = experiment_bounds(clients);
    auto s = cfg.strategy;
    s.rounds = 0;
    const auto res = run_rounds(clients, s, cfg.network, bounds, cfg.seed);
    auto hyper = s, avg = s;
    hyper.strategy = Strategy::kHyperFed;
    avg.strategy = Strategy::kFedAvg;
    std::size_t compared = 0, equal = 0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      const auto ctx = make_client_context(clients[k], cfg.network, bounds);
      for (const auto* set : {&clients[k].train, &clients[k].test}) {
        for (const auto& rec : *set) {
          const auto a = client_predict(res.models[k], ctx, hyper, cfg.network, rec.degraded_input);
          const auto b = client_predict(res.models[k], ctx, avg, cfg.network, rec.degraded_input);
          ++compared;
          if (a == b) ++equal;
        }
      }
    }
    out.check(compared > 0 && equal == compared,
              task + ": " + std::to_string(equal) + "/" + std::to_string(compared) + " identical");
    out.note(task + " " + std::to_string(equal) + "/" + std::to_string(compared));
  }
}

// -------------------------------------------------- directional ordering

double overall(const std::vector<StrategyColumn>& cols, const std::string& name) {
  for (const auto& c : cols) {
    if (c.name == name) return c.report.overall_psnr;
  }
  throw std::runtime_error("missing strategy " + name);
}

void directional(Outcome& out) {
  const auto base = parse_config(source_path("configs/directional_postproc.json"));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto cfg = base;
    cfg.seed = seed;
    cfg.output_dir = scratch("directional_seed" + std::to_string(seed)).string();
    std::vector<Strategy> strategies{Strategy::kHyperFed, Strategy::kFedAvg};
    if (seed == 1) {
      strategies.push_back(Strategy::kLocalOnly);
      strategies.push_back(Strategy::kFedProx);
    }
    const auto cols = compare_strategies(cfg, strategies);
    const double hf = overall(cols, "hyperfed"), fa = overall(cols, "fedavg");
    std::string line = "seed " + std::to_string(seed) + ": hyperfed " + fmt("%.3f", hf) + ", fedavg " +
                       fmt("%.3f", fa);
    out.check(hf - fa >= 0.3, "seed " + std::to_string(seed) + " gap " + fmt("%.3f", hf - fa) + " dB");
    if (seed == 1) {
      const double lo = overall(cols, "local_only"), fp = overall(cols, "fedprox");
      line += ", local_only " + fmt("%.3f", lo) + ", fedprox " + fmt("%.3f", fp);
      out.check(hf >= lo, "seed 1 hyperfed below local_only by " + fmt("%.3f", lo - hf) + " dB");
    }
    std::printf("  %s\n", line.c_str());
    std::fflush(stdout);
    out.note(line);
  }
}

// -------------------------------------------------------- dose monotonicity

void dose(Outcome& out) {
  InstitutionConfig cfg;
  cfg.task = Task::kPostProcessing;
  cfg.geometry = desk_scale(institution_presets(Task::kReconstruction)[0], 64);
  auto high = cfg, low = cfg;
  high.geometry.incident_intensity = 1e6;
  low.geometry.incident_intensity = 5e4;
  auto psnr_unit = [](const Tensor<double>& a, const Tensor<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(static_cast<double>(a.size()) / acc);
  };
  double p_high = 0.0, p_low = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto ph = random_phantom(64, 9000 + s);
    p_high += psnr_unit(degraded_fbp(high, ph, s), ph) / 20.0;
    p_low += psnr_unit(degraded_fbp(low, ph, s), ph) / 20.0;
  }
  out.check(p_high > p_low, "FBP PSNR at 1e6 " + fmt("%.3f", p_high) + " vs 5e4 " + fmt("%.3f", p_low));
  out.note("1e6: " + fmt("%.2f", p_high) + " dB, 5e4: " + fmt("%.2f", p_low) + " dB");
}

// ------------------------------------------------------------ determinism

void determinism(Outcome& out) {
  const auto a = scratch("run_a"), b = scratch("run_b");
  const std::string config = source_path("configs/toy.json").string();
  for (const auto& dir : {a, b}) {
    const std::string cmd = std::string("\"") + HYPERFED_CLI_PATH + "\" run --config \"" + config +
                            "\" --out \"" + dir.string() + "\" > /dev/null 2>&1";
    out.check(std::system(cmd.c_str()) == 0, "run into " + dir.string());
  }
  const auto ma = slurp(a / "metrics.json"), mb = slurp(b / "metrics.json");
  out.check(!ma.empty() && ma == mb, "metrics.json differs between identical runs");

  auto cfg = parse_config(config);
  auto clients = simulate_clients(cfg);
  DatasetFile file;
  file.task = cfg.task;
  file.geometry = clients[0].geometry;
  file.institution_id = clients[0].institution_id;
  file.records = clients[0].train;
  const auto hfds = a / "roundtrip.hfds";
  save_dataset(hfds, file);
  const auto loaded = load_dataset(hfds);
  bool same = loaded.records.size() == file.records.size() && loaded.geometry == file.geometry;
  for (std::size_t i = 0; same && i < file.records.size(); ++i) {
    same = loaded.records[i].degraded_input == file.records[i].degraded_input &&
           loaded.records[i].target == file.records[i].target &&
           loaded.records[i].geometry_raw == file.records[i].geometry_raw;
  }
  out.check(same, "HFDS round trip");

  const auto w = imaging_from_checkpoint(load_checkpoint(a / "checkpoints/global_w.hfck"), cfg.network);
  const auto again = a / "again.hfck";
  save_checkpoint(again, to_checkpoint(w));
  out.check(slurp(again) == slurp(a / "checkpoints/global_w.hfck"), "HFCK w round trip");
  const auto xi_path = a / "checkpoints/institution_1_xi.hfck";
  const auto xi = hyper_from_checkpoint(load_checkpoint(xi_path), cfg.network);
  save_checkpoint(again, to_checkpoint(xi, cfg.network.site_layout(), cfg.network.kind));
  out.check(slurp(again) == slurp(xi_path), "HFCK xi round trip");
  out.note("metrics.json " + std::to_string(ma.size()) + " bytes identical; HFDS and HFCK bit-exact");
}

// ------------------------------------------------------ geometry encoding

void encoding(Outcome& out) {
  const auto presets = institution_presets(Task::kPostProcessing);
  const auto bounds = GeometryBounds::from_geometries(presets);
  const auto lo = encode_geometry(bounds.min, bounds);
  const auto hi = encode_geometry(bounds.max, bounds);
  double end_err = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    if (bounds.max[i] == bounds.min[i]) continue;
    end_err = std::max({end_err, std::abs(lo.values[i]), std::abs(hi.values[i] - 1.0)});
  }
  out.check(end_err < 1e-12, "endpoints: " + fmt("%.3g", end_err));

  // Institution 1 post-processing pixel length 1.33 mm within [1.20, 1.40].
  out.check(bounds.min[2] == 1.20 && bounds.max[2] == 1.40, "pixel-length bounds from the presets");
  const double pixel = encode_geometry(presets[0].raw_vector(), bounds).values[2];
  out.check(std::abs(pixel - 0.65) < 1e-12, "pixel 1.33: " + fmt("%.17g", pixel));

  // Log-domain intensity: the geometric mean of the bounds lands at 0.5.
  auto raw = presets[0].raw_vector();
  raw[6] = std::sqrt(bounds.min[6] * bounds.max[6]);
  const double mid = encode_geometry(raw, bounds).values[6];
  out.check(std::abs(mid - 0.5) < 1e-12, "intensity geometric mean: " + fmt("%.17g", mid));
  out.note("pixel " + fmt("%.15f", pixel) + ", intensity " + fmt("%.15f", mid));
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "physics oracles", 60.0, physics},
      {2, "gradient checks", 300.0, gradients},
      {3, "federation oracles", 0.0, federation},
      {4, "identity FiLM at round 0", 0.0, identity_film},
      {5, "directional ordering", 0.0, directional},
      {6, "dose monotonicity", 0.0, dose},
      {7, "determinism and round trips", 0.0, determinism},
      {8, "geometry encoding", 0.0, encoding},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      out.failures.push_back("runtime " + fmt("%.1f", secs) + " s over budget");
    }
    const bool pass = out.failures.empty();
    if (!pass) ++failed;
    std::string detail;
    for (const auto& n : pass ? out.notes : out.failures) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("criterion %d %s: %s  [%.1f s] %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs,
                detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("hyperfed_acceptance_" + std::to_string(::getpid())));
  return failed == 0 ? 0 : 1;
}
