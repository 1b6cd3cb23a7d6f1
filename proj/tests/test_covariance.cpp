#include <doctest.h>

#include <cmath>

#include "qftlab/covariance.hpp"
#include "qftlab/rng.hpp"

using namespace qftlab;

namespace {

SphereField random_field(int dim, int L, std::uint64_t seed) {
  SphereField f(dim, L);
  GaussianStream gs(seed, 0);
  for (double& c : f.coeffs) c = gs.next();
  return f;
}

// Ambient Gaussian bump restricted to the sphere, projected to degrees <= L.
SphereField sphere_bump(const std::array<double, 3>& center, double sigma, int L,
                        const SphereGrid& grid) {
  std::vector<double> samples(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const auto& x = grid.nodes[i];
    const double d2 =
        sqr(x[0] - center[0]) + sqr(x[1] - center[1]) + sqr(x[2] - center[2]);
    samples[i] = std::exp(-d2 / (2.0 * sigma * sigma));
  }
  return analyze(samples, grid, L);
}

}  // namespace

TEST_CASE("free covariance multipliers") {
  CHECK(free_covariance(1.0, 2, 4).multipliers[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(free_covariance(1.0, 2, 4).multipliers[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(free_covariance(2.0, 1, 4).multipliers[3] == doctest::Approx(1.0 / 13.0).epsilon(1e-15));
  CHECK_THROWS_AS(free_covariance(0.0, 2, 4), std::invalid_argument);
}

TEST_CASE("operator square roots") {
  SpectralOperator diag(2, 3);
  diag.multipliers = {4.0, 1.0, 0.25, 9.0};
  const auto root = operator_sqrt(diag);
  CHECK(root.multipliers[0] == 2.0);
  CHECK(root.multipliers[2] == 0.5);

  DenseOperator ident(1, 3);
  ident.mat.setIdentity();
  CHECK((operator_sqrt(ident).mat - ident.mat).norm() <= 1e-12);

  // Random PSD matrix: sqrt * sqrt reconstructs within 1e-8 ||A||.
  const int n = num_coeffs(1, 6);
  Eigen::MatrixXd b(n, n);
  GaussianStream gs(3, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = gs.next();
  DenseOperator a(1, 6);
  a.mat = b * b.transpose();
  const auto s = operator_sqrt(a);
  CHECK((s.mat * s.mat - a.mat).norm() <= 1e-8 * a.mat.norm());

  DenseOperator bad(1, 1);
  bad.mat.setIdentity();
  bad.mat(0, 0) = -1.0;
  CHECK_THROWS_AS(operator_sqrt(bad), NumericalHealthError);
}

TEST_CASE("scaled covariance structure") {
  const int L = 16;
  const SphereGrid grid = default_grid(2, L);
  const ScaledCovariance cov = scaled_covariance(2.0, 1.0, 2, L, grid);
  const DenseOperator dense = cov.to_dense();
  CHECK(dense.symmetry_error() <= 1e-10);
  CHECK(cov.min_eigenvalue() >= -1e-8 * cov.operator_norm());
  CHECK(cov.operator_norm() <= 1.0 + 1e-9);  // bounded by 1/m^2

  // Block application agrees with the dense matrix.
  const SphereField f = random_field(2, L, 8);
  CHECK((cov.apply(f) - dense.apply(f)).norm() <= 1e-12 * f.norm());
  CHECK(cov.quadratic_form(f) == doctest::Approx(dense.quadratic_form(f)).epsilon(1e-12));

  // sqrt_apply squares back to apply.
  const SphereField sq = cov.sqrt_apply(cov.sqrt_apply(f));
  CHECK((sq - cov.apply(f)).norm() <= 1e-10 * cov.apply(f).norm());
}

TEST_CASE("free-field transfer identity: quadratic form matches plane side") {
  const auto f = PlaneTestFunction::bump(2, 1.0, {0.0, 0.0}, 1.0);
  const double mass = 1.0;
  const double plane = green_form(f, mass);
  for (double k : {1.0, 2.0, 4.0}) {
    const int L = std::max(16, static_cast<int>(8 * k));
    const ConformalPipeline pipe(2, L, k);
    const ScaledCovariance cov = scaled_covariance(k, mass, 2, L, *pipe.grid);
    const SphereField u = lift_to_sphere(f, pipe).field;
    const double sphere_side = cov.quadratic_form(u);
    CHECK(std::abs(sphere_side - plane) <= 0.02 * plane);
  }
}

TEST_CASE("plane-side conjugation route cross-validates the assembly") {
  // Polarized probe set: lifts of two bumps and their sum at k = 2, d = 2.
  const auto fa = PlaneTestFunction::bump(2, 1.0, {0.3, -0.1}, 0.9);
  const auto fb = PlaneTestFunction::bump(2, -0.6, {-0.4, 0.5}, 1.2);
  const double mass = 1.0, k = 2.0;
  const int L = 24;
  const ConformalPipeline pipe(2, L, k);
  const ScaledCovariance cov = scaled_covariance(k, mass, 2, L, *pipe.grid);
  const SphereField ua = lift_to_sphere(fa, pipe).field;
  const SphereField ub = lift_to_sphere(fb, pipe).field;
  const double cross_sphere =
      0.5 * (cov.quadratic_form(ua + ub) - cov.quadratic_form(ua) - cov.quadratic_form(ub));
  const double cross_plane = green_pairing(fa, fb, mass);
  CHECK(std::abs(cross_sphere - cross_plane) <= 0.02 * std::abs(cross_plane));
}

TEST_CASE("scaling identity via Fourier quadrature") {
  const auto u = PlaneTestFunction::bump(2, 1.0, {0.6, 0.2}, 0.8);
  const double mass = 1.3;
  for (double k : {2.0, 5.0}) {
    const double lhs = green_form(scale_u_beta(u, 1.0 / k), mass);
    const double rhs = fourier_pairing(
        u, u, [&](double p2) { return k * k / (p2 + k * k * mass * mass); });
    CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(rhs));
  }
}

TEST_CASE("conformal covariance of the Laplacian") {
  for (int dim : {1, 2}) {
    const int L = 28;
    const auto u = PlaneTestFunction::bump(dim, 1.0, {0.4, 0.0}, 1.1);
    const auto v = PlaneTestFunction::bump(dim, 0.7, {-0.2, dim == 2 ? 0.3 : 0.0}, 0.9);
    const double lhs = fourier_pairing(u, v, [](double p2) { return p2; });

    // w = Lambda^{-1} U_alpha u sampled on the sphere, paired through the
    // conformal Laplacian spectrum.
    const SphereGrid grid = default_grid(dim, L);
    auto transfer = [&](const PlaneTestFunction& fn) {
      std::vector<double> samples(grid.nodes.size());
      for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
        const auto pr = stereo_project(grid.nodes[i], dim);
        samples[i] =
            std::pow(pr.conformal_factor, 0.5 * dim - 1.0) * fn.value(pr.y);
      }
      return analyze(samples, grid, L);
    };
    const SphereField wu = transfer(u);
    const SphereField wv = transfer(v);
    double rhs = 0.0;
    for (int i = 0; i < num_coeffs(dim, L); ++i)
      rhs += conformal_laplacian_eigenvalue(dim, unflatten_index(dim, i).degree) *
             wu.coeffs[i] * wv.coeffs[i];
    CHECK(std::abs(lhs - rhs) <= 5e-3 * std::max(std::abs(lhs), 1e-12));
  }
}

TEST_CASE("theta commutes with degree-diagonal covariances exactly") {
  const auto c = free_covariance(1.0, 2, 10);
  const SphereField f = random_field(2, 10, 77);
  const SphereField a = c.apply(theta_sphere(f));
  const SphereField b = theta_sphere(c.apply(f));
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("conjugation drift") {
  const int L = 12;
  const SphereGrid grid = default_grid(2, L);
  CHECK(conjugation_drift(2.0, {0.0, 0.0}, 1.0, 2, L, grid) <= 1e-13);

  double prev = std::numeric_limits<double>::infinity();
  for (double k : {2.0, 4.0, 8.0}) {
    const double d = conjugation_drift(k, {1.0, 0.0}, 1.0, 2, L, grid);
    CHECK(d < prev);
    prev = d;
  }

  const double plus = conjugation_drift(3.0, {0.8, 0.0}, 1.0, 2, L, grid);
  const double minus = conjugation_drift(3.0, {-0.8, 0.0}, 1.0, 2, L, grid);
  CHECK(std::abs(plus - minus) <= 1e-10 * std::max(plus, 1e-12));
}

TEST_CASE("uniform spectral bounds on the probe subspace") {
  const int L = 16, probe = 8;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double k : {1.0, 2.0, 4.0, 8.0}) {
    const SphereGrid grid = default_grid(2, L);
    const auto range = scaled_covariance(k, 1.0, 2, L, grid).probe_eigenvalue_range(probe);
    lo = std::min(lo, range.first);
    hi = std::max(hi, range.second);
  }
  MESSAGE("probe eigenvalue range over k in {1,2,4,8}: [", lo, ", ", hi, "]");
  CHECK(lo > 1e-4);        // stays away from zero, k-uniformly
  CHECK(hi <= 1.0 + 1e-9);  // bounded by 1/m^2
}

TEST_CASE("rp gram check for the gaussian free field on S^2") {
  const int L = 32;
  const SphereGrid grid = default_grid(2, L);
  const auto cov = free_covariance(1.0, 2, L);
  auto s_fn = [&](const SphereField& h) {
    return cplx(std::exp(-0.5 * cov.quadratic_form(h)), 0.0);
  };
  auto theta = [](const SphereField& h) { return theta_sphere(h); };

  const double sigma = 0.2;
  std::vector<SphereField> bumps;
  for (double a : {0.08, 0.16, 0.24, 0.32}) {
    const std::array<double, 3> c{std::cos(a), std::sin(a) * std::cos(7.0 * a),
                                  std::sin(a) * std::sin(7.0 * a)};
    bumps.push_back(sphere_bump(c, sigma, L, grid));
  }
  const auto res = rp_gram_check(s_fn, bumps, theta);
  MESSAGE("free-field gram min eigenvalue: ", res.min_eigenvalue, " norm ", res.matrix_norm);
  CHECK(res.pass);

  // Single test function: the 1x1 matrix has a positive entry.
  const auto single = rp_gram_check(s_fn, std::vector<SphereField>{bumps[0]}, theta);
  CHECK(single.gram(0, 0).real() > 0.0);

  // Duplicated test function: singular but still PSD within tolerance.
  const auto dup =
      rp_gram_check(s_fn, std::vector<SphereField>{bumps[1], bumps[1]}, theta);
  CHECK(dup.pass);
}

TEST_CASE("rp operator check") {
  const int L = 32;
  const SphereGrid grid = default_grid(2, L);
  const double a = 0.2;  // angle from the +x0 axis; margin 6 sigma from equator
  const SphereField bump =
      sphere_bump({std::cos(a), std::sin(a), 0.0}, 0.2, L, grid);
  const ReflectionTheta theta{2};

  SpectralOperator ident(2, L);
  for (double& c : ident.multipliers) c = 1.0;
  const auto id_res = rp_operator_check(ident, {bump}, theta);
  CHECK(std::abs(id_res.pairings[0]) <= 1e-6 * bump.norm2());

  const auto cov = free_covariance(1.0, 2, L);
  const auto cov_res = rp_operator_check(cov, {bump}, theta);
  CHECK(cov_res.pairings[0] >= -1e-8);
  CHECK(cov_res.pass);

  const SphereField zero(2, L);
  const auto zero_res = rp_operator_check(cov, {zero}, theta);
  CHECK(zero_res.pairings[0] == 0.0);
}

