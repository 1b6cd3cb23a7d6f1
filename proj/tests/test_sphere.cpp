#include <doctest.h>

#include <array>
#include <cmath>

#include "qftlab/rng.hpp"
#include "qftlab/sphere.hpp"

using namespace qftlab;

namespace {

SphereField random_field(int dim, int L, std::uint64_t seed) {
  SphereField f(dim, L);
  GaussianStream gs(seed, 0);
  for (double& c : f.coeffs) c = gs.next();
  return f;
}

// Deterministic rotation in R^3 built from Gram-Schmidt on seeded vectors.
std::array<std::array<double, 3>, 3> random_rotation3(std::uint64_t seed) {
  GaussianStream gs(seed, 1);
  std::array<std::array<double, 3>, 3> a{};
  for (auto& row : a)
    for (double& v : row) v = gs.next();
  auto dot = [](const std::array<double, 3>& u, const std::array<double, 3>& v) {
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  };
  auto scale = [](std::array<double, 3>& u, double s) {
    for (double& x : u) x *= s;
  };
  scale(a[0], 1.0 / std::sqrt(dot(a[0], a[0])));
  const double d01 = dot(a[0], a[1]);
  for (int i = 0; i < 3; ++i) a[1][i] -= d01 * a[0][i];
  scale(a[1], 1.0 / std::sqrt(dot(a[1], a[1])));
  a[2] = {a[0][1] * a[1][2] - a[0][2] * a[1][1], a[0][2] * a[1][0] - a[0][0] * a[1][2],
          a[0][0] * a[1][1] - a[0][1] * a[1][0]};
  return a;
}

}  // namespace

TEST_CASE("grid basics d=1") {
  const SphereGrid g = build_grid(1, 8);
  CHECK(g.nodes.size() == 8);
  for (double w : g.weights) CHECK(w == doctest::Approx(kTwoPi / 8).epsilon(1e-14));
  double sum = 0.0;
  for (double w : g.weights) sum += w;
  CHECK(std::abs(sum - kTwoPi) <= 1e-10 * kTwoPi);
  // Pole (0, 1) never among nodes.
  for (const auto& x : g.nodes) CHECK(std::abs(x[1] - 1.0) > 1e-3);
}

TEST_CASE("grid basics d=2") {
  const SphereGrid g = build_grid(2, 16);
  double sum = 0.0;
  for (double w : g.weights) sum += w;
  CHECK(std::abs(sum - kFourPi) <= 1e-10 * kFourPi);
  for (const auto& x : g.nodes) CHECK(std::abs(x[2] - 1.0) > 1e-4);

  // Quadrature orthonormality of Y_{1,0}.
  SphereField y10(2, 1);
  y10.at({1, 0}) = 1.0;
  const auto samples = synthesize(y10, g);
  double ip = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) ip += g.weights[i] * samples[i] * samples[i];
  CHECK(std::abs(ip - 1.0) <= 1e-10);
}

TEST_CASE("build_grid rejects bad input") {
  CHECK_THROWS_AS(build_grid(3, 8), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(2, 3), std::invalid_argument);
}

TEST_CASE("synthesize basics") {
  const SphereGrid g = build_grid(2, 12);
  SphereField zero(2, 4);
  for (double v : synthesize(zero, g)) CHECK(v == 0.0);

  SphereField c(2, 4);
  c.at({0, 0}) = 1.0;
  for (double v : synthesize(c, g))
    CHECK(v == doctest::Approx(1.0 / std::sqrt(kFourPi)).epsilon(1e-12));

  SphereField y10(2, 4);
  y10.at({1, 0}) = 1.0;
  const auto s = synthesize(y10, g);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const double expect = std::sqrt(3.0 / kFourPi) * g.nodes[i][2];
    CHECK(std::abs(s[i] - expect) <= 1e-12);
  }
  CHECK_THROWS_AS(synthesize(SphereField(2, 30), g), std::invalid_argument);
}

TEST_CASE("analyze round trip and constants") {
  for (int dim : {1, 2}) {
    const int L = 8;
    const SphereGrid g = default_grid(dim, L);
    const SphereField f = random_field(dim, L, 13u + dim);
    const SphereField back = analyze(synthesize(f, g), g, L);
    CHECK((back - f).norm() <= 1e-10 * f.norm());
  }
  const SphereGrid g = build_grid(2, 10);
  std::vector<double> samples(g.nodes.size(), 2.5);
  const SphereField f = analyze(samples, g, 3);
  CHECK(f.at({0, 0}) == doctest::Approx(2.5 * std::sqrt(kFourPi)).epsilon(1e-12));
  for (int flat = 1; flat < num_coeffs(2, 3); ++flat)
    CHECK(std::abs(f.coeffs[flat]) <= 1e-12);
  CHECK_THROWS_AS(analyze(samples, g, 10), std::invalid_argument);
}

TEST_CASE("analyze matches dense quadrature projection") {
  // Band-limited weight (1 - x_d): both quadratures are exact, values match
  // to machine precision.
  const int L = 16;
  const SphereGrid g = default_grid(2, L);
  const SphereGrid dense = build_grid(2, 80);
  auto weight = [](const std::array<double, 3>& x) { return 1.0 - x[2]; };
  std::vector<double> s1(g.nodes.size()), s2(dense.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) s1[i] = weight(g.nodes[i]);
  for (std::size_t i = 0; i < dense.nodes.size(); ++i) s2[i] = weight(dense.nodes[i]);
  const SphereField a = analyze(s1, g, L);
  const SphereField b = analyze(s2, dense, L);
  CHECK((a - b).norm() <= 1e-10);

  // Smooth non-band-limited function: projections agree to aliasing level.
  auto smooth = [](const std::array<double, 3>& x) { return std::exp(x[2]); };
  for (std::size_t i = 0; i < g.nodes.size(); ++i) s1[i] = smooth(g.nodes[i]);
  for (std::size_t i = 0; i < dense.nodes.size(); ++i) s2[i] = smooth(dense.nodes[i]);
  const SphereField a2 = analyze(s1, g, L);
  const SphereField b2 = analyze(s2, dense, L);
  CHECK((a2 - b2).norm() <= 1e-8 * b2.norm());
}

TEST_CASE("inner product") {
  SphereField f(2, 3), h(2, 3);
  f.at({2, 1}) = 1.0;
  h.at({2, 1}) = 1.0;
  CHECK(inner_product(f, h) == 1.0);
  h.at({2, 1}) = 0.0;
  h.at({3, -2}) = 4.0;
  CHECK(inner_product(f, h) == 0.0);
  CHECK_THROWS_AS(inner_product(f, SphereField(2, 5)), std::invalid_argument);

  // Parseval against grid quadrature.
  for (int dim : {1, 2}) {
    const int L = 8;
    const SphereGrid g = default_grid(dim, L);
    const SphereField a = random_field(dim, L, 21u + dim);
    const SphereField b = random_field(dim, L, 22u + dim);
    const auto sa = synthesize(a, g);
    const auto sb = synthesize(b, g);
    double quad = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) quad += g.weights[i] * sa[i] * sb[i];
    CHECK(std::abs(inner_product(a, b) - quad) <= 1e-10 * (a.norm() * b.norm()));
  }
}

TEST_CASE("addition theorem") {
  const int L = 12;
  const SphereGrid g = build_grid(2, 14);
  BasisEvaluator eval(2, L);
  std::vector<double> row(num_coeffs(2, L));
  for (std::size_t i = 0; i < g.nodes.size(); i += 7) {
    eval.eval(g.nodes[i], row);
    for (int l = 0; l <= L; ++l) {
      double s = 0.0;
      for (int m = -l; m <= l; ++m) s += sqr(row[flat_index(2, {l, m})]);
      CHECK(std::abs(s - (2.0 * l + 1.0) / kFourPi) <= 1e-10);
    }
  }
}

TEST_CASE("rotation invariance of the grid integral") {
  const int L = 6;
  const SphereGrid g = build_grid(2, 16);
  const SphereField f = random_field(2, L, 31);
  const auto rot = random_rotation3(7);
  BasisEvaluator eval(2, L);
  double direct = 0.0, rotated = 0.0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& x = g.nodes[i];
    std::array<double, 3> rx{};
    for (int r = 0; r < 3; ++r)
      rx[r] = rot[r][0] * x[0] + rot[r][1] * x[1] + rot[r][2] * x[2];
    direct += g.weights[i] * synthesize_at(f, x, eval);
    rotated += g.weights[i] * synthesize_at(f, rx, eval);
  }
  CHECK(std::abs(direct - rotated) <= 1e-8 * (1.0 + std::abs(direct)));
}

TEST_CASE("index flattening round trips") {
  for (int dim : {1, 2}) {
    const int L = 5;
    for (int flat = 0; flat < num_coeffs(dim, L); ++flat) {
      const HarmonicIndex idx = unflatten_index(dim, flat);
      CHECK(flat_index(dim, idx) == flat);
      CHECK(idx.degree <= L);
    }
  }
}
