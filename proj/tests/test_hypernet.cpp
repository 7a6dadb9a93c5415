#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_check.hpp"
#include "hyperfed/dataset.hpp"
#include "hyperfed/hypernet.hpp"

using namespace hyperfed;
using hyperfed::testing::finite_difference;
using hyperfed::testing::random_tensor;
using hyperfed::testing::relative_error;

namespace {

GeometryBounds bounds_with(std::size_t element, double lo, double hi) {
  GeometryBounds b;
  b.min = {100, 100, 1.0, 1.0, 300, 300, 1e4};
  b.max = {200, 200, 2.0, 2.0, 600, 600, 1e6};
  b.min[element] = lo;
  b.max[element] = hi;
  return b;
}

GeometryRaw mid_raw() { return {150, 150, 1.5, 1.5, 450, 450, 1e5}; }

}  // namespace

TEST_CASE("encode_geometry endpoints") {
  const GeometryBounds b = bounds_with(0, 100, 200);
  GeometryRaw lo = b.min, hi = b.max;
  auto glo = encode_geometry(lo, b);
  auto ghi = encode_geometry(hi, b);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(glo.values[i] == 0.0);
    CHECK(ghi.values[i] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("encode_geometry interior values") {
  SUBCASE("pixel length 1.33 within (1.20, 1.40)") {
    auto b = bounds_with(2, 1.20, 1.40);
    auto raw = mid_raw();
    raw[2] = 1.33;
    CHECK(std::abs(encode_geometry(raw, b).values[2] - 0.65) < 1e-12);
  }
  SUBCASE("intensity at the lower log-domain bound") {
    auto b = bounds_with(6, 5e4, 1e6);
    auto raw = mid_raw();
    raw[6] = 5e4;
    CHECK(std::abs(encode_geometry(raw, b).values[6]) < 1e-12);
    raw[6] = std::sqrt(5e4 * 1e6);  // geometric mean sits at the middle
    CHECK(std::abs(encode_geometry(raw, b).values[6] - 0.5) < 1e-12);
  }
  SUBCASE("view count is log scaled") {
    auto b = bounds_with(0, 88, 1024);
    auto raw = mid_raw();
    raw[0] = 300;
    const double expected = (std::log(300.0) - std::log(88.0)) / (std::log(1024.0) - std::log(88.0));
    CHECK(std::abs(encode_geometry(raw, b).values[0] - expected) < 1e-12);
  }
}

TEST_CASE("encode_geometry rejects out-of-range input and bad bounds") {
  auto b = bounds_with(2, 1.20, 1.40);
  auto raw = mid_raw();
  raw[2] = 1.41;
  CHECK_THROWS_AS(encode_geometry(raw, b), RangeError);
  raw[2] = 1.19;
  CHECK_THROWS_AS(encode_geometry(raw, b), RangeError);
  auto bad = bounds_with(3, 2.0, 1.0);
  CHECK_THROWS_AS(encode_geometry(mid_raw(), bad), ConfigError);
}

TEST_CASE("bounds from the preset table are shared and injective") {
  for (Task task : {Task::kPostProcessing, Task::kReconstruction}) {
    auto presets = institution_presets(task);
    auto bounds = GeometryBounds::from_geometries(presets);
    std::vector<GeometryVector> encoded;
    for (const auto& g : presets) {
      auto v = encode_geometry(g.raw_vector(), bounds);
      for (double x : v.values) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
      CHECK(v.bounds == bounds);
      encoded.push_back(v);
    }
    for (std::size_t i = 0; i < encoded.size(); ++i) {
      for (std::size_t j = i + 1; j < encoded.size(); ++j) {
        CHECK(encoded[i].values != encoded[j].values);
      }
    }
  }
}

TEST_CASE("degenerate bounds map to zero") {
  FanBeamGeometry g = institution_presets(Task::kPostProcessing)[0];
  std::vector<FanBeamGeometry> same{g, g};
  auto b = GeometryBounds::from_geometries(same);
  auto v = encode_geometry(g.raw_vector(), b);
  for (double x : v.values) CHECK(x == 0.0);
}

TEST_CASE("zero second layer yields identity modulation") {
  SiteLayout layout{{4, 3, 1}};
  CHECK(layout.film_width() == 16);
  auto xi = init_hyper_params<float>(layout, 64, 9);
  CHECK(xi.hidden() == 64);
  CHECK(xi.output_width() == 16);
  GeometryVector g;
  g.values = {0.1, 0.9, 0.3, 0.5, 0.2, 0.7, 1.0};
  auto film = hyper_forward_values(g, xi, layout);
  REQUIRE(film.gamma.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(film.gamma[s].size() == layout.channels[s]);
    for (float v : film.gamma[s].data()) CHECK(v == 1.0f);
    for (float v : film.beta[s].data()) CHECK(v == 0.0f);
  }
}

TEST_CASE("hyper_forward is deterministic and shape-stable") {
  SiteLayout layout{{2, 5}};
  auto xi = init_hyper_params<double>(layout, 8, 3);
  std::mt19937_64 rng(1);
  xi.blocks[2] = random_tensor(xi.blocks[2].shape(), rng);
  xi.blocks[3] = random_tensor(xi.blocks[3].shape(), rng);
  GeometryVector g1, g2;
  g1.values = {0, 0.2, 0.4, 0.6, 0.8, 1, 0.5};
  g2.values = {1, 1, 1, 1, 1, 1, 1};
  auto a = hyper_forward_values(g1, xi, layout);
  auto b = hyper_forward_values(g1, xi, layout);
  auto c = hyper_forward_values(g2, xi, layout);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(a.gamma[s] == b.gamma[s]);
    CHECK(a.beta[s] == b.beta[s]);
    CHECK(c.gamma[s].shape() == a.gamma[s].shape());
  }
  CHECK_FALSE(a.gamma[1] == c.gamma[1]);
}

TEST_CASE("hyper_forward width mismatch") {
  SiteLayout layout{{2, 5}};
  auto xi = init_hyper_params<double>(layout, 8, 3);
  SiteLayout other{{2, 4}};
  Tape<double> tape;
  GeometryVector g;
  CHECK_THROWS_AS(hyper_forward(g, bind_blocks(tape, xi.blocks, false), other), DimensionError);
}

TEST_CASE("hypernetwork gradients match finite differences") {
  SiteLayout layout{{3, 2}};
  auto xi = init_hyper_params<double>(layout, 6, 5);
  std::mt19937_64 rng(17);
  for (auto& b : xi.blocks) b = random_tensor(b.shape(), rng, -0.8, 0.8);
  GeometryVector g;
  g.values = {0.3, 0.1, 0.8, 0.5, 0.9, 0.2, 0.6};

  // sum(gamma * c_g) + sum(beta * c_b) with fixed random weights so every
  // output element contributes differently.
  std::vector<Tensor<double>> cg, cb;
  for (std::size_t c : layout.channels) {
    cg.push_back(random_tensor({c}, rng));
    cb.push_back(random_tensor({c}, rng));
  }
  auto objective = [&](const std::vector<Tensor<double>>& blocks, Tape<double>& tape,
                       std::vector<Var<double>>& vars) {
    vars = bind_blocks(tape, blocks, true);
    auto film = hyper_forward(g, vars, layout);
    Var<double> total;
    for (std::size_t s = 0; s < layout.site_count(); ++s) {
      auto term = add(sum(mul(film.gamma[s], tape.constant(cg[s]))),
                      sum(mul(film.beta[s], tape.constant(cb[s]))));
      total = s == 0 ? term : add(total, term);
    }
    return total;
  };

  Tape<double> tape;
  std::vector<Var<double>> vars;
  tape.backward(objective(xi.blocks, tape, vars));
  for (std::size_t b = 0; b < 4; ++b) {
    auto numeric = finite_difference(
        [&](const Tensor<double>& probe) {
          auto blocks = xi.blocks;
          blocks[b] = probe;
          Tape<double> t;
          std::vector<Var<double>> v;
          return objective(blocks, t, v).value()[0];
        },
        xi.blocks[b]);
    CHECK(relative_error(tape.grad(vars[b]), numeric) < 1e-4);
  }
}
