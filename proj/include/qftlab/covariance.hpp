#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "qftlab/conformal.hpp"
#include "qftlab/core.hpp"
#include "qftlab/sphere.hpp"

namespace qftlab {

// ---------------------------------------------------------------------------
// Degree-diagonal operators
// ---------------------------------------------------------------------------

struct SpectralOperator {
  int dim = 2;
  int cutoff = 0;
  std::vector<double> multipliers;  // one per degree l = 0..cutoff

  SpectralOperator() = default;
  SpectralOperator(int d, int L) : dim(d), cutoff(L), multipliers(L + 1, 0.0) {}

  SphereField apply(const SphereField& f) const {
    require(f.dim == dim && f.cutoff == cutoff, "SpectralOperator::apply: shape mismatch");
    SphereField out = f;
    for (int i = 0; i < num_coeffs(dim, cutoff); ++i)
      out.coeffs[i] *= multipliers[unflatten_index(dim, i).degree];
    return out;
  }

  double quadratic_form(const SphereField& f) const {
    require(f.dim == dim && f.cutoff == cutoff, "SpectralOperator: shape mismatch");
    double s = 0.0;
    for (int i = 0; i < num_coeffs(dim, cutoff); ++i)
      s += multipliers[unflatten_index(dim, i).degree] * sqr(f.coeffs[i]);
    return s;
  }

  double max_multiplier() const {
    double v = multipliers.empty() ? 0.0 : multipliers[0];
    for (double c : multipliers) v = std::max(v, c);
    return v;
  }

  // Integral kernel evaluated at geodesic angle gamma (rotation-invariant).
  double kernel(double gamma) const {
    if (dim == 2) {
      double s = 0.0;
      for (int l = 0; l <= cutoff; ++l)
        s += multipliers[l] * (2.0 * l + 1.0) / kFourPi * legendre_p(l, std::cos(gamma));
      return s;
    }
    double s = multipliers[0];
    for (int l = 1; l <= cutoff; ++l) s += 2.0 * multipliers[l] * std::cos(l * gamma);
    return s / kTwoPi;
  }
};

// Free covariance (m^2 + Laplacian)^{-1} at spectral truncation L.
inline SpectralOperator free_covariance(double mass, int dim, int cutoff) {
  require(mass > 0.0, "free_covariance: mass must be positive");
  SpectralOperator op(dim, cutoff);
  for (int l = 0; l <= cutoff; ++l)
    op.multipliers[l] = 1.0 / (mass * mass + laplace_eigenvalue(dim, l));
  return op;
}

// Conformal Laplacian (Yamabe) eigenvalue l(l+d-1) + d(d-2)/4.
inline double conformal_laplacian_eigenvalue(int dim, int l) {
  return laplace_eigenvalue(dim, l) + dim * (dim - 2) / 4.0;
}

inline SpectralOperator operator_sqrt(const SpectralOperator& a) {
  SpectralOperator out = a;
  for (double& c : out.multipliers) {
    require(c >= 0.0, "operator_sqrt: negative multiplier");
    c = std::sqrt(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense symmetric operators in the truncated harmonic basis
// ---------------------------------------------------------------------------

struct DenseOperator {
  int dim = 2;
  int cutoff = 0;
  Eigen::MatrixXd mat;

  DenseOperator() = default;
  DenseOperator(int d, int L)
      : dim(d), cutoff(L), mat(Eigen::MatrixXd::Zero(num_coeffs(d, L), num_coeffs(d, L))) {}

  double symmetry_error() const { return (mat - mat.transpose()).norm() / std::max(1e-300, mat.norm()); }

  SphereField apply(const SphereField& f) const {
    require(f.dim == dim && f.cutoff == cutoff, "DenseOperator::apply: shape mismatch");
    SphereField out(dim, cutoff);
    Eigen::Map<Eigen::VectorXd>(out.coeffs.data(), out.coeffs.size()) =
        mat * Eigen::Map<const Eigen::VectorXd>(f.coeffs.data(), f.coeffs.size());
    return out;
  }

  double quadratic_form(const SphereField& f) const {
    require(f.dim == dim && f.cutoff == cutoff, "DenseOperator: shape mismatch");
    Eigen::Map<const Eigen::VectorXd> v(f.coeffs.data(), f.coeffs.size());
    return v.dot(mat * v);
  }

  double operator_norm() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mat + mat.transpose()),
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mat + mat.transpose()),
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
};

// Symmetric PSD square root by eigendecomposition. Eigenvalues below
// -tol * ||A|| are an error; small negatives from roundoff clip to zero.
inline DenseOperator operator_sqrt(const DenseOperator& a, double tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a.mat + a.mat.transpose()));
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  DenseOperator out(a.dim, a.cutoff);
  Eigen::VectorXd roots = es.eigenvalues();
  for (int i = 0; i < roots.size(); ++i) {
    if (roots[i] < -tol * scale)
      throw NumericalHealthError("operator_sqrt: eigenvalue " + std::to_string(roots[i]) +
                                 " below PSD tolerance");
    roots[i] = std::sqrt(std::max(0.0, roots[i]));
  }
  out.mat = es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Scaled covariances C_{S,k} = k^2 Lambda (Delta_S^c + k^2 m^2 Lambda^2)^{-1} Lambda
//
// Assembled through the algebraically identical resolvent form
//   C_{S,k} = k^2 (Lambda^{-1} Delta_S^c Lambda^{-1} + k^2 m^2)^{-1},
// where Lambda^{-1} = (1 - x_d) is a degree-one multiplier whose Gram matrix
// the pole-excluded quadrature integrates exactly. For dim == 2 the Gram is
// block-diagonal in the azimuthal order m (cosine and sine blocks coincide),
// so everything stays cheap at large cutoffs. Cross-validation against the
// plane-side conjugation route lives in the test suite.
// ---------------------------------------------------------------------------

class ScaledCovariance {
 public:
  struct Block {
    Eigen::MatrixXd cov;        // covariance block
    Eigen::MatrixXd sqrt_cov;   // symmetric square root
    Eigen::VectorXd eigenvalues;
  };

  static ScaledCovariance build(double k, double mass, int dim, int cutoff,
                                const SphereGrid& grid) {
    require(k > 0.0 && mass > 0.0, "scaled_covariance: k and mass must be positive");
    require(grid.dim == dim, "scaled_covariance: grid dimension mismatch");
    require(grid.exact_degree() >= 2 * cutoff + 1,
            "scaled_covariance: grid must integrate degree 2L+1 products");
    ScaledCovariance out;
    out.dim_ = dim;
    out.cutoff_ = cutoff;
    out.k_ = k;
    out.mass_ = mass;
    if (dim == 1) {
      out.blocks_.push_back(make_block(lambda_inverse_gram_d1(cutoff, grid), dim, cutoff, 0, k, mass));
    } else {
      const auto grams = lambda_inverse_grams_d2(cutoff, grid);
      out.blocks_.reserve(cutoff + 1);
      for (int m = 0; m <= cutoff; ++m)
        out.blocks_.push_back(make_block(grams[m], dim, cutoff, m, k, mass));
    }
    return out;
  }

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }
  double scale_k() const { return k_; }
  double mass() const { return mass_; }

  SphereField apply(const SphereField& f) const { return transform(f, &Block::cov); }
  SphereField sqrt_apply(const SphereField& f) const { return transform(f, &Block::sqrt_cov); }

  double quadratic_form(const SphereField& f) const {
    return inner_product(f, apply(f));
  }

  // Coefficients of a mean-zero Gaussian sample given iid standard normals.
  SphereField sample_transform(std::span<const double> xi) const {
    require(static_cast<int>(xi.size()) == num_coeffs(dim_, cutoff_),
            "sample_transform: wrong normal count");
    SphereField f(dim_, cutoff_);
    for (int i = 0; i < static_cast<int>(xi.size()); ++i) f.coeffs[i] = xi[i];
    return sqrt_apply(f);
  }

  double operator_norm() const {
    double v = 0.0;
    for (const auto& b : blocks_) v = std::max(v, b.eigenvalues.maxCoeff());
    return v;
  }

  double min_eigenvalue() const {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks_) v = std::min(v, b.eigenvalues.minCoeff());
    return v;
  }

  // Extreme eigenvalues of the compression to degrees <= probe_cutoff.
  std::pair<double, double> probe_eigenvalue_range(int probe_cutoff) const {
    require(probe_cutoff <= cutoff_, "probe_eigenvalue_range: probe exceeds cutoff");
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    if (dim_ == 1) {
      const int n = num_coeffs(1, probe_cutoff);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blocks_[0].cov.topLeftCorner(n, n),
                                                        Eigen::EigenvaluesOnly);
      return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
    }
    for (int m = 0; m <= probe_cutoff; ++m) {
      const int n = probe_cutoff - m + 1;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blocks_[m].cov.topLeftCorner(n, n),
                                                        Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
      hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    return {lo, hi};
  }

  DenseOperator to_dense() const {
    DenseOperator out(dim_, cutoff_);
    if (dim_ == 1) {
      out.mat = blocks_[0].cov;
      return out;
    }
    for (int m = 0; m <= cutoff_; ++m) {
      const auto& c = blocks_[m].cov;
      for (int l = m; l <= cutoff_; ++l) {
        for (int lp = m; lp <= cutoff_; ++lp) {
          out.mat(flat_index(2, {l, m}), flat_index(2, {lp, m})) = c(l - m, lp - m);
          if (m > 0)
            out.mat(flat_index(2, {l, -m}), flat_index(2, {lp, -m})) = c(l - m, lp - m);
        }
      }
    }
    return out;
  }

 private:
  template <class Member>
  SphereField transform(const SphereField& f, Member member) const {
    require(f.dim == dim_ && f.cutoff == cutoff_, "ScaledCovariance: shape mismatch");
    SphereField out(dim_, cutoff_);
    if (dim_ == 1) {
      Eigen::Map<Eigen::VectorXd>(out.coeffs.data(), out.coeffs.size()) =
          (blocks_[0].*member) * Eigen::Map<const Eigen::VectorXd>(f.coeffs.data(), f.coeffs.size());
      return out;
    }
    for (int m = 0; m <= cutoff_; ++m) {
      const int n = cutoff_ - m + 1;
      Eigen::VectorXd vc(n), vs(n);
      for (int l = m; l <= cutoff_; ++l) {
        vc[l - m] = f.coeffs[flat_index(2, {l, m})];
        if (m > 0) vs[l - m] = f.coeffs[flat_index(2, {l, -m})];
      }
      const Eigen::MatrixXd& a = blocks_[m].*member;
      const Eigen::VectorXd rc = a * vc;
      for (int l = m; l <= cutoff_; ++l) out.coeffs[flat_index(2, {l, m})] = rc[l - m];
      if (m > 0) {
        const Eigen::VectorXd rs = a * vs;
        for (int l = m; l <= cutoff_; ++l) out.coeffs[flat_index(2, {l, -m})] = rs[l - m];
      }
    }
    return out;
  }

  // Gram matrix of multiplication by (1 - x_d) within one azimuthal block,
  // over degrees l = m..L. Exact: the integrand is band-limited.
  static std::vector<Eigen::MatrixXd> lambda_inverse_grams_d2(int cutoff,
                                                              const SphereGrid& grid) {
    const int L = cutoff;
    std::vector<Eigen::MatrixXd> grams(L + 1);
    for (int m = 0; m <= L; ++m) grams[m] = Eigen::MatrixXd::Zero(L - m + 1, L - m + 1);
    BasisEvaluator eval(2, L);
    std::vector<double> q(L + 1);
    for (std::size_t iz = 0; iz < grid.z_nodes.size(); ++iz) {
      const double z = grid.z_nodes[iz];
      const double w = kTwoPi * grid.z_weights[iz] * (1.0 - z);
      eval.legendre_column(z, std::sqrt(std::max(0.0, 1.0 - z * z)));
      for (int m = 0; m <= L; ++m) {
        for (int l = m; l <= L; ++l) q[l - m] = eval.legendre_value(m, l);
        auto& g = grams[m];
        const int n = L - m + 1;
        for (int i = 0; i < n; ++i)
          for (int j = i; j < n; ++j) g(i, j) += w * q[i] * q[j];
      }
    }
    for (auto& g : grams) g = g.selfadjointView<Eigen::Upper>();
    return grams;
  }

  static Eigen::MatrixXd lambda_inverse_gram_d1(int cutoff, const SphereGrid& grid) {
    const int nc = num_coeffs(1, cutoff);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nc, nc);
    BasisEvaluator eval(1, cutoff);
    std::vector<double> row(nc);
    for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
      eval.eval(grid.nodes[i], row);
      const double w = grid.weights[i] * (1.0 - grid.nodes[i][1]);
      for (int a = 0; a < nc; ++a)
        for (int b = a; b < nc; ++b) gram(a, b) += w * row[a] * row[b];
    }
    return gram.selfadjointView<Eigen::Upper>();
  }

  static Block make_block(const Eigen::MatrixXd& gram, int dim, int cutoff, int m_block,
                          double k, double mass) {
    const int n = static_cast<int>(gram.rows());
    Eigen::VectorXd dc(n);
    for (int i = 0; i < n; ++i) {
      const int l = dim == 1 ? unflatten_index(1, i).degree : m_block + i;
      dc[i] = conformal_laplacian_eigenvalue(dim, l);
    }
    const Eigen::MatrixXd resolvent =
        gram * dc.asDiagonal() * gram + (k * k * mass * mass) * Eigen::MatrixXd::Identity(n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (resolvent + resolvent.transpose()));
    const Eigen::VectorXd& lam = es.eigenvalues();
    if (lam.minCoeff() <= 0.0)
      throw NumericalHealthError(
          "scaled_covariance: resolvent lost positivity (smallest eigenvalue " +
          std::to_string(lam.minCoeff()) + "); truncation breakdown");
    Block b;
    b.eigenvalues = (k * k) * lam.cwiseInverse();
    b.cov = es.eigenvectors() * b.eigenvalues.asDiagonal() * es.eigenvectors().transpose();
    b.sqrt_cov = es.eigenvectors() * b.eigenvalues.cwiseSqrt().asDiagonal() *
                 es.eigenvectors().transpose();
    return b;
  }

  int dim_ = 2;
  int cutoff_ = 0;
  double k_ = 1.0;
  double mass_ = 1.0;
  std::vector<Block> blocks_;
};

inline ScaledCovariance scaled_covariance(double k, double mass, int dim, int cutoff,
                                          const SphereGrid& grid) {
  return ScaledCovariance::build(k, mass, dim, cutoff, grid);
}

// ---------------------------------------------------------------------------
// Rotation action in the coefficient basis and covariance drift
// ---------------------------------------------------------------------------

// Matrix of phi -> phi o R^{-1} in the truncated basis via quadrature;
// orthogonal up to quadrature roundoff since rotations preserve degrees.
inline Eigen::MatrixXd isometry_matrix(const Rotation& rot, int cutoff,
                                       const SphereGrid& grid) {
  const int dim = rot.dim;
  require(grid.dim == dim, "isometry_matrix: grid mismatch");
  require(grid.exact_degree() >= 2 * cutoff, "isometry_matrix: grid too coarse");
  const int nc = num_coeffs(dim, cutoff);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(nc, nc);
  BasisEvaluator eval(dim, cutoff);
  Eigen::VectorXd row_x(nc), row_rx(nc);
  std::vector<double> buf(nc);
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    eval.eval(grid.nodes[i], buf);
    for (int a = 0; a < nc; ++a) row_x[a] = buf[a];
    eval.eval(rot.apply_transpose(grid.nodes[i]), buf);
    for (int a = 0; a < nc; ++a) row_rx[a] = buf[a];
    r.noalias() += grid.weights[i] * row_x * row_rx.transpose();
  }
  return r;
}

// || R_k C R_k^{-1} - C || for the rotation g_k(T): how far the scaled
// covariance is from commuting with near-translations.
inline double conjugation_drift(double k, const PlanePoint& translation, double mass,
                                int dim, int cutoff, const SphereGrid& grid) {
  const Rotation g = rotation_g_k(translation, k, dim);
  if (translation[0] == 0.0 && (dim == 1 || translation[1] == 0.0)) return 0.0;
  const Eigen::MatrixXd c = scaled_covariance(k, mass, dim, cutoff, grid).to_dense().mat;
  const Eigen::MatrixXd r = isometry_matrix(g, cutoff, grid);
  const Eigen::MatrixXd diff = r * c * r.transpose() - c;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (diff + diff.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Reflection positivity checks
// ---------------------------------------------------------------------------

struct ReflectionTheta {
  int dim = 2;
  PlaneTestFunction plane(const PlaneTestFunction& f) const { return reflect_time(f); }
  SphereField sphere(const SphereField& f) const { return theta_sphere(f); }
};

struct RpGramResult {
  Eigen::MatrixXcd gram;
  double min_eigenvalue = 0.0;
  double matrix_norm = 0.0;
  bool pass = false;
};

// Gram matrix S(f_i - Theta f_j) for a characteristic functional handle.
// The support requirement on the f_i is the caller's responsibility (checked
// via the optional predicate).
template <class TestFn, class FunctionalFn, class ThetaFn>
RpGramResult rp_gram_check(FunctionalFn&& s_fn, const std::vector<TestFn>& fs,
                           ThetaFn&& theta, double tol = 1e-8,
                           const std::function<bool(const TestFn&)>& support_ok = nullptr) {
  require(!fs.empty(), "rp_gram_check: empty test family");
  if (support_ok)
    for (const auto& f : fs)
      require(support_ok(f), "rp_gram_check: test function fails the support requirement");
  const int n = static_cast<int>(fs.size());
  RpGramResult out;
  out.gram.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const auto ti = theta(fs[i]);
    for (int j = 0; j < n; ++j) out.gram(j, i) = s_fn(fs[j] - ti);
  }
  const Eigen::MatrixXcd herm = 0.5 * (out.gram + out.gram.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.matrix_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  out.pass = out.min_eigenvalue >= -tol * out.matrix_norm;
  return out;
}

struct RpOperatorResult {
  std::vector<double> pairings;  // <A f, Theta f> per test function
  double commutator_error = 0.0;
  bool pass = false;
};

template <class Op>
RpOperatorResult rp_operator_check(const Op& a, const std::vector<SphereField>& fs,
                                   const ReflectionTheta& theta, double tol = 1e-8) {
  RpOperatorResult out;
  double scale = 0.0;
  for (const auto& f : fs) {
    const SphereField af = a.apply(f);
    const SphereField theta_f = theta.sphere(f);
    out.commutator_error =
        std::max(out.commutator_error,
                 (a.apply(theta_f) - theta.sphere(af)).norm() / std::max(1e-300, af.norm()));
    out.pairings.push_back(inner_product(af, theta_f));
    scale = std::max(scale, inner_product(af, f));
  }
  if (out.commutator_error > 1e-8)
    throw NumericalHealthError("rp_operator_check: operator does not commute with Theta");
  out.pass = true;
  for (double v : out.pairings)
    if (v < -tol * std::max(1.0, scale)) out.pass = false;
  return out;
}

// ---------------------------------------------------------------------------
// Plane-side Fourier oracles
// ---------------------------------------------------------------------------

namespace detail {

struct PanelRule {
  std::vector<double> nodes, weights;  // composite Gauss rule on [-P, P]
};

inline PanelRule composite_gauss(double half_width, double panel) {
  static const auto base = [] {
    std::pair<std::vector<double>, std::vector<double>> nw;
    gauss_legendre(12, nw.first, nw.second);
    return nw;
  }();
  const auto& gl_nodes = base.first;
  const auto& gl_weights = base.second;
  PanelRule r;
  const int panels = std::max(2, static_cast<int>(std::ceil(2.0 * half_width / panel)));
  const double h = 2.0 * half_width / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = -half_width + p * h;
    for (std::size_t i = 0; i < gl_nodes.size(); ++i) {
      r.nodes.push_back(a + 0.5 * h * (gl_nodes[i] + 1.0));
      r.weights.push_back(0.5 * h * gl_weights[i]);
    }
  }
  return r;
}

}  // namespace detail

// integral of Re(f_hat conj(g_hat)) * weight(|p|^2) over R^d, by composite
// Gauss quadrature on a box that captures the Gaussian decay of the factors.
inline double fourier_pairing(const PlaneTestFunction& f, const PlaneTestFunction& g,
                              const std::function<double(double)>& weight) {
  require(f.dim == g.dim, "fourier_pairing: dimension mismatch");
  if (f.terms.empty() || g.terms.empty()) return 0.0;
  double min_width = std::numeric_limits<double>::infinity();
  double max_center = 0.0;
  for (const auto* fn : {&f, &g}) {
    for (const auto& t : fn->terms) {
      min_width = std::min(min_width, t.width);
      max_center = std::max(max_center, std::abs(t.center[0]));
      if (f.dim == 2) max_center = std::max(max_center, std::abs(t.center[1]));
    }
  }
  const double half_width = 12.0 / min_width;
  const double panel = std::min(1.5, 3.0 / (1.0 + max_center));
  const auto rule = detail::composite_gauss(half_width, panel);
  double total = 0.0;
  if (f.dim == 1) {
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const PlanePoint p{rule.nodes[i], 0.0};
      const cplx val = f.fourier(p) * std::conj(g.fourier(p));
      total += rule.weights[i] * val.real() * weight(p[0] * p[0]);
    }
    return total;
  }
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const PlanePoint p{rule.nodes[i], rule.nodes[j]};
      const cplx val = f.fourier(p) * std::conj(g.fourier(p));
      inner += rule.weights[j] * val.real() * weight(p[0] * p[0] + p[1] * p[1]);
    }
    total += rule.weights[i] * inner;
  }
  return total;
}

// <(Delta_E + m^2)^{-1} f, g>_{L^2(R^d)}.
inline double green_pairing(const PlaneTestFunction& f, const PlaneTestFunction& g,
                            double mass) {
  const double m2 = mass * mass;
  return fourier_pairing(f, g, [m2](double p2) { return 1.0 / (p2 + m2); });
}

inline double green_form(const PlaneTestFunction& f, double mass) {
  return green_pairing(f, f, mass);
}

// ---------------------------------------------------------------------------
// Smoothed time-slab test functions chi_(0,t) (x) h for the small-t moment scan
// ---------------------------------------------------------------------------

struct TimeSlabFunction {
  double t = 0.4;         // slab length in time
  double ramp = 0.04;     // linear ramp width at both ends
  GaussianTerm h;         // transverse bump (d-1 = 1 dimensional)

  double profile(double y0) const {
    if (y0 <= 0.0 || y0 >= t) return 0.0;
    return std::min(1.0, std::min(y0, t - y0) / ramp);
  }

  double value(const PlanePoint& y) const {
    const double dy = y[1] - h.center[0];
    return profile(y[0]) * h.amplitude * std::exp(-dy * dy / (2.0 * h.width * h.width));
  }

  double l2_norm2() const {
    const double profile_mass = t - 4.0 * ramp / 3.0;
    return profile_mass * h.amplitude * h.amplitude * std::sqrt(kPi) * h.width;
  }

  // |profile_hat(p)|^2 with the unitary Fourier convention: the trapezoid is
  // the convolution of an indicator of length t - ramp with a unit box.
  double profile_ft_sq(double p) const {
    auto boxcar2 = [p](double len) {
      const double a = 0.5 * p * len;
      if (std::abs(a) < 1e-5) return len * len * (1.0 - a * a / 3.0);
      const double s = std::sin(a);
      return 4.0 * s * s / (p * p);
    };
    return boxcar2(t - ramp) * boxcar2(ramp) / (ramp * ramp) / kTwoPi;
  }
};

// <(Delta_E + m^2)^{-1} f_t, f_t> for f_t = profile (x) h on R^2, via the
// separable Fourier representation.
inline double slab_green_form(const TimeSlabFunction& slab, double mass) {
  const double p0_half_width = std::max(150.0, 50.0 / slab.t);
  const double lobe = kTwoPi / std::max(1e-12, slab.t - slab.ramp);
  const auto rule0 = detail::composite_gauss(p0_half_width, std::max(0.5, lobe / 8.0));
  const auto rule1 = detail::composite_gauss(12.0 / slab.h.width, 1.0);
  const double m2 = mass * mass;
  double total = 0.0;
  for (std::size_t j = 0; j < rule1.nodes.size(); ++j) {
    const double p1 = rule1.nodes[j];
    const double s = slab.h.width;
    const double h_ft = slab.h.amplitude * s * std::exp(-0.5 * s * s * p1 * p1);
    const double h_sq = h_ft * h_ft;
    double inner = 0.0;
    for (std::size_t i = 0; i < rule0.nodes.size(); ++i) {
      const double p0 = rule0.nodes[i];
      inner += rule0.weights[i] * slab.profile_ft_sq(p0) / (p0 * p0 + p1 * p1 + m2);
    }
    total += rule1.weights[j] * h_sq * inner;
  }
  return total;
}

}  // namespace qftlab
