#include <doctest.h>

#include <cmath>

#include "qftlab/conformal.hpp"
#include "qftlab/rng.hpp"

using namespace qftlab;

TEST_CASE("stereographic projection values") {
  auto r = stereo_project({0.0, 0.0, -1.0}, 2);
  CHECK(r.y[0] == 0.0);
  CHECK(r.y[1] == 0.0);
  CHECK(r.conformal_factor == doctest::Approx(0.5).epsilon(1e-15));

  r = stereo_project({1.0, 0.0, 0.0}, 2);
  CHECK(r.y[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.y[1] == 0.0);
  CHECK(r.conformal_factor == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(stereo_project({0.0, 0.0, 1.0}, 2), std::invalid_argument);
}

TEST_CASE("stereographic inverse values and reciprocal identity") {
  auto r = stereo_inverse({0.0, 0.0}, 2);
  CHECK(r.x[0] == 0.0);
  CHECK(r.x[2] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(r.conformal_factor == doctest::Approx(2.0).epsilon(1e-15));

  r = stereo_inverse({1.0, 0.0}, 2);
  CHECK(std::abs(r.x[2]) <= 1e-15);  // equator

  GaussianStream gs(99, 0);
  for (int dim : {1, 2}) {
    for (int trial = 0; trial < 20; ++trial) {
      const PlanePoint y{2.0 * gs.next(), dim == 2 ? 2.0 * gs.next() : 0.0};
      const auto inv = stereo_inverse(y, dim);
      const auto fwd = stereo_project(inv.x, dim);
      CHECK(std::abs(fwd.y[0] - y[0]) <= 1e-14 * (1.0 + std::abs(y[0])));
      if (dim == 2) CHECK(std::abs(fwd.y[1] - y[1]) <= 1e-14 * (1.0 + std::abs(y[1])));
      CHECK(std::abs(inv.conformal_factor * fwd.conformal_factor - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("gaussian mixture closed forms") {
  const auto f = PlaneTestFunction::bump(2, 1.3, {0.4, -0.2}, 0.7);
  CHECK(l2_norm2(f) == doctest::Approx(1.3 * 1.3 * kPi * 0.7 * 0.7).epsilon(1e-12));

  // Closed-form inner product against 2D quadrature.
  const auto g = PlaneTestFunction::bump(2, 0.8, {-0.3, 0.5}, 1.1);
  double quad = 0.0;
  const int n = 400;
  const double lo = -8.0, hi = 8.0, h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const PlanePoint y{lo + (i + 0.5) * h, lo + (j + 0.5) * h};
      quad += f.value(y) * g.value(y) * h * h;
    }
  }
  CHECK(l2_inner(f, g) == doctest::Approx(quad).epsilon(1e-8));

  // Dilations track the closed-form bump mapping.
  const auto scaled = scale_u_beta(f, 3.0);
  const PlanePoint y{0.21, 0.05};
  CHECK(scaled.value(y) == doctest::Approx(3.0 * f.value({3.0 * y[0], 3.0 * y[1]})).epsilon(1e-13));
  CHECK(l2_norm2(scaled) == doctest::Approx(l2_norm2(f)).epsilon(1e-12));
}

TEST_CASE("rotation g_k basics") {
  const Rotation id = rotation_g_k({0.0, 0.0}, 2.0, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(id.mat[i][j] == (i == j ? 1.0 : 0.0));

  const double t = 0.7, k = 3.0;
  const Rotation r1 = rotation_g_k({t, 0.0}, k, 1);
  CHECK(r1.mat[0][0] == doctest::Approx(std::cos(2.0 * t / k)).epsilon(1e-14));

  const Rotation r2 = rotation_g_k({0.4, -1.1}, 2.5, 2);
  CHECK(r2.orthogonality_error() <= 1e-12);
  CHECK(std::abs(r2.determinant() - 1.0) <= 1e-12);
}

TEST_CASE("apply_isometry structure") {
  const int L = 8;
  const SphereGrid grid = default_grid(2, L);
  SphereField f(2, L);
  GaussianStream gs(5, 0);
  for (double& c : f.coeffs) c = gs.next();

  const SphereField same = apply_isometry(f, Rotation{}, grid);
  CHECK((same - f).norm() <= 1e-12 * f.norm());

  const Rotation r = rotation_g_k({0.9, 0.3}, 2.0, 2);
  const SphereField moved = apply_isometry(f, r, grid);
  CHECK(std::abs(moved.norm() - f.norm()) <= 1e-10 * f.norm());
  CHECK(moved.at({0, 0}) == doctest::Approx(f.at({0, 0})).epsilon(1e-12));
}

TEST_CASE("theta_sphere is an exact involution matching resampling") {
  for (int dim : {1, 2}) {
    const int L = 7;
    const SphereGrid grid = default_grid(dim, L);
    SphereField f(dim, L);
    GaussianStream gs(17 + dim, 0);
    for (double& c : f.coeffs) c = gs.next();

    const SphereField twice = theta_sphere(theta_sphere(f));
    CHECK((twice - f).norm() == 0.0);

    Rotation refl;
    refl.dim = dim;
    refl.mat[0][0] = -1.0;
    const SphereField resampled = apply_isometry(f, refl, grid);
    CHECK((theta_sphere(f) - resampled).norm() <= 1e-12 * f.norm());
  }
}

TEST_CASE("lift of the unit bump is near-unitary") {
  const auto f = PlaneTestFunction::bump(2, 1.0, {0.0, 0.0}, 1.0);
  const ConformalPipeline pipe(2, 32, 1.0);
  const LiftResult lift = lift_to_sphere(f, pipe);
  CHECK(std::abs(lift.field.norm2() - kPi) <= 0.01 * kPi);

  const ConformalPipeline coarse(2, 16, 1.0);
  const LiftResult lc = lift_to_sphere(f, coarse);
  CHECK(lc.residual > lift.residual);

  const PlaneTestFunction zero(2, {});
  CHECK(lift_to_sphere(zero, pipe).field.norm() == 0.0);
}

TEST_CASE("lift residual cap trips for unresolvable functions") {
  const auto sharp = PlaneTestFunction::bump(2, 1.0, {3.0, 0.0}, 0.05);
  const ConformalPipeline pipe(2, 8, 1.0);
  CHECK_THROWS_AS(lift_to_sphere(sharp, pipe), NumericalHealthError);
}

TEST_CASE("O(d) equivariance of the lift") {
  const auto f = PlaneTestFunction::bump(2, 1.0, {0.5, -0.2}, 0.8) +
                 PlaneTestFunction::bump(2, -0.4, {-0.3, 0.6}, 1.2);
  const double k = 2.0;
  const ConformalPipeline pipe(2, 24, k);
  const auto r2 = plane_rotation(0.83);
  const SphereField lhs = lift_to_sphere(rotate_plane(f, r2), pipe).field;
  const SphereField rhs =
      apply_isometry(lift_to_sphere(f, pipe).field, embed_plane_rotation(r2, 2), *pipe.grid);
  CHECK((lhs - rhs).norm() <= 1e-6 * rhs.norm());
}

TEST_CASE("translation composite") {
  const PlanePoint x{0.37, -0.8};
  const auto same = translation_composite(x, {0.0, 0.0}, 5.0, 2);
  CHECK(same[0] == doctest::Approx(x[0]).epsilon(1e-14));
  CHECK(same[1] == doctest::Approx(x[1]).epsilon(1e-14));

  const auto shifted = translation_composite({0.0, 0.0}, {1.0, 0.0}, 10.0, 1);
  CHECK(std::abs(shifted[0] - 10.0 * std::tan(0.1)) <= 1e-12);

  // O(k^-2) approach to x + T in d = 1.
  auto err = [](double k) {
    const auto y = translation_composite({0.5, 0.0}, {1.0, 0.0}, k, 1);
    return std::abs(y[0] - 1.5);
  };
  for (double k : {10.0, 20.0, 40.0}) {
    const double ratio = err(2.0 * k) / err(k);
    CHECK(ratio >= 0.2);
    CHECK(ratio <= 0.3);
  }

  // d = 2 limit, checked numerically on a small grid of base points.
  double worst_k8 = 0.0, worst_k32 = 0.0;
  for (double x0 : {-1.0, 0.0, 1.0}) {
    for (double x1 : {-1.0, 0.5}) {
      const auto a = translation_composite({x0, x1}, {0.7, -0.4}, 8.0, 2);
      const auto b = translation_composite({x0, x1}, {0.7, -0.4}, 32.0, 2);
      worst_k8 = std::max(worst_k8, std::hypot(a[0] - (x0 + 0.7), a[1] - (x1 - 0.4)));
      worst_k32 = std::max(worst_k32, std::hypot(b[0] - (x0 + 0.7), b[1] - (x1 - 0.4)));
    }
  }
  CHECK(worst_k32 < 0.1 * worst_k8);
}
