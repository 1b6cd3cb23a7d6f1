#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/sphere.hpp"

namespace qftlab {

// Points in R^d are carried as array<double, 2> with the second component
// unused when dim == 1. The first component is Euclidean time throughout.
using PlanePoint = std::array<double, 2>;

inline double plane_norm2(const PlanePoint& y, int dim) {
  return dim == 1 ? y[0] * y[0] : y[0] * y[0] + y[1] * y[1];
}

struct StereoResult {
  PlanePoint y{};
  double conformal_factor = 0.0;
};

struct StereoInverseResult {
  std::array<double, 3> x{};
  double conformal_factor = 0.0;
};

// y_i = x_i / (1 - x_d), Lambda = (1 - x_d)^{-1}; undefined at the pole.
inline StereoResult stereo_project(const std::array<double, 3>& x, int dim) {
  const double xd = dim == 1 ? x[1] : x[2];
  require(xd != 1.0, "stereo_project: north pole input");
  StereoResult r;
  r.conformal_factor = 1.0 / (1.0 - xd);
  r.y[0] = x[0] * r.conformal_factor;
  if (dim == 2) r.y[1] = x[1] * r.conformal_factor;
  return r;
}

inline StereoInverseResult stereo_inverse(const PlanePoint& y, int dim) {
  const double n2 = plane_norm2(y, dim);
  StereoInverseResult r;
  r.conformal_factor = 2.0 / (n2 + 1.0);
  r.x[0] = y[0] * r.conformal_factor;
  if (dim == 2) {
    r.x[1] = y[1] * r.conformal_factor;
    r.x[2] = (n2 - 1.0) / (n2 + 1.0);
  } else {
    r.x[1] = (n2 - 1.0) / (n2 + 1.0);
    r.x[2] = 0.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Plane test functions: finite mixtures of isotropic Gaussian bumps, chosen
// so that L^2 pairings, Fourier transforms, reflections and dilations all
// have closed forms.
// ---------------------------------------------------------------------------

struct GaussianTerm {
  double amplitude = 1.0;
  PlanePoint center{};
  double width = 1.0;
};

struct PlaneTestFunction {
  int dim = 2;
  std::vector<GaussianTerm> terms;

  PlaneTestFunction() = default;
  PlaneTestFunction(int d, std::vector<GaussianTerm> t) : dim(d), terms(std::move(t)) {
    for (const auto& term : terms)
      require(term.width > 0.0, "PlaneTestFunction: widths must be positive");
  }

  static PlaneTestFunction bump(int d, double amplitude, PlanePoint center, double width) {
    return PlaneTestFunction(d, {GaussianTerm{amplitude, center, width}});
  }

  double value(const PlanePoint& y) const {
    double s = 0.0;
    for (const auto& t : terms) {
      PlanePoint r{y[0] - t.center[0], dim == 2 ? y[1] - t.center[1] : 0.0};
      s += t.amplitude * std::exp(-plane_norm2(r, dim) / (2.0 * t.width * t.width));
    }
    return s;
  }

  // Fourier transform with the unitary convention (2 pi)^{-d/2} integral.
  cplx fourier(const PlanePoint& p) const {
    cplx s = 0.0;
    const double p2 = plane_norm2(p, dim);
    for (const auto& t : terms) {
      const double dot = p[0] * t.center[0] + (dim == 2 ? p[1] * t.center[1] : 0.0);
      const double mag = t.amplitude * std::pow(t.width, dim) *
                         std::exp(-0.5 * t.width * t.width * p2);
      s += mag * cplx(std::cos(dot), -std::sin(dot));
    }
    return s;
  }

  PlaneTestFunction& operator*=(double a) {
    for (auto& t : terms) t.amplitude *= a;
    return *this;
  }
  PlaneTestFunction operator-() const {
    PlaneTestFunction r = *this;
    for (auto& t : r.terms) t.amplitude = -t.amplitude;
    return r;
  }
  friend PlaneTestFunction operator+(PlaneTestFunction a, const PlaneTestFunction& b) {
    require(a.dim == b.dim, "PlaneTestFunction +: dimension mismatch");
    a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
    return a;
  }
  friend PlaneTestFunction operator-(PlaneTestFunction a, const PlaneTestFunction& b) {
    return a + (-b);
  }
};

// <f, g>_{L^2(R^d)} in closed form (Gaussian-Gaussian overlap integrals).
inline double l2_inner(const PlaneTestFunction& f, const PlaneTestFunction& g) {
  require(f.dim == g.dim, "l2_inner: dimension mismatch");
  const int d = f.dim;
  double s = 0.0;
  for (const auto& a : f.terms) {
    for (const auto& b : g.terms) {
      const double v2 = a.width * a.width + b.width * b.width;
      const double pref = std::pow(kTwoPi * a.width * a.width * b.width * b.width / v2,
                                   0.5 * d);
      PlanePoint dc{a.center[0] - b.center[0], d == 2 ? a.center[1] - b.center[1] : 0.0};
      s += a.amplitude * b.amplitude * pref * std::exp(-plane_norm2(dc, d) / (2.0 * v2));
    }
  }
  return s;
}

inline double l2_norm2(const PlaneTestFunction& f) { return l2_inner(f, f); }

inline PlaneTestFunction translate(PlaneTestFunction f, const PlanePoint& shift) {
  for (auto& t : f.terms) {
    t.center[0] += shift[0];
    if (f.dim == 2) t.center[1] += shift[1];
  }
  return f;
}

// Pullback under an O(d) element R: (f o R^{-1}) for isotropic bumps just
// moves the centers through R.
inline PlaneTestFunction rotate_plane(PlaneTestFunction f,
                                      const std::array<std::array<double, 2>, 2>& r) {
  require(f.dim == 2, "rotate_plane: dim 2 only");
  for (auto& t : f.terms) {
    const PlanePoint c = t.center;
    t.center = {r[0][0] * c[0] + r[0][1] * c[1], r[1][0] * c[0] + r[1][1] * c[1]};
  }
  return f;
}

// Time reflection Theta on the plane side: t -> -t.
inline PlaneTestFunction reflect_time(PlaneTestFunction f) {
  for (auto& t : f.terms) t.center[0] = -t.center[0];
  return f;
}

// U_{beta_k} f = k^{d/2} f(k .): bump centers shrink by 1/k, widths by 1/k,
// amplitudes scale by k^{d/2}.
inline PlaneTestFunction scale_u_beta(PlaneTestFunction f, double k) {
  require(k > 0.0, "scale_u_beta: k must be positive");
  const double amp = std::pow(k, 0.5 * f.dim);
  for (auto& t : f.terms) {
    t.amplitude *= amp;
    t.center[0] /= k;
    if (f.dim == 2) t.center[1] /= k;
    t.width /= k;
  }
  return f;
}

// Distance of the effective support (radius 6 width) from the time-zero
// hyperplane; positive when the whole effective support sits at t > 0.
inline double positive_time_margin(const PlaneTestFunction& f) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& t : f.terms)
    margin = std::min(margin, t.center[0] - 6.0 * t.width);
  return margin;
}

// ---------------------------------------------------------------------------
// Rotations of S^d c R^{d+1}
// ---------------------------------------------------------------------------

struct Rotation {
  int dim = 2;  // sphere dimension d; matrix acts on R^{d+1}
  std::array<std::array<double, 3>, 3> mat{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  std::array<double, 3> apply(const std::array<double, 3>& x) const {
    std::array<double, 3> y{};
    for (int i = 0; i < 3; ++i)
      y[i] = mat[i][0] * x[0] + mat[i][1] * x[1] + mat[i][2] * x[2];
    return y;
  }
  std::array<double, 3> apply_transpose(const std::array<double, 3>& x) const {
    std::array<double, 3> y{};
    for (int i = 0; i < 3; ++i)
      y[i] = mat[0][i] * x[0] + mat[1][i] * x[1] + mat[2][i] * x[2];
    return y;
  }

  double orthogonality_error() const {
    double err = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += mat[k][i] * mat[k][j];
        err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    }
    return err;
  }

  double determinant() const {
    const auto& a = mat;
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
           a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  }

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    require(a.dim == b.dim, "Rotation *: dimension mismatch");
    Rotation r;
    r.dim = a.dim;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a.mat[i][k] * b.mat[k][j];
        r.mat[i][j] = s;
      }
    return r;
  }
};

// g_k(T) = exp(2 k^{-1} sum_j t_j L_j): the one-parameter rotation in the
// plane spanned by the embedded translation direction and the pole axis e_d,
// evaluated in closed form (the exponential of a planar generator is exact).
inline Rotation rotation_g_k(const PlanePoint& translation, double k, int dim) {
  require(k > 0.0, "rotation_g_k: k must be positive");
  Rotation r;
  r.dim = dim;
  std::array<double, 3> v{2.0 * translation[0] / k,
                          dim == 2 ? 2.0 * translation[1] / k : 0.0, 0.0};
  const double theta = std::sqrt(v[0] * v[0] + v[1] * v[1]);
  if (theta == 0.0) return r;
  std::array<double, 3> n1{v[0] / theta, v[1] / theta, 0.0};
  std::array<double, 3> n2{0.0, 0.0, 0.0};
  n2[dim] = 1.0;
  const double c = std::cos(theta), s = std::sin(theta);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r.mat[i][j] = (i == j ? 1.0 : 0.0) + s * (n2[i] * n1[j] - n1[i] * n2[j]) +
                    (c - 1.0) * (n1[i] * n1[j] + n2[i] * n2[j]);
    }
  }
  return r;
}

// Embeds an O(d) element acting on the first d coordinates of R^{d+1}.
inline Rotation embed_plane_rotation(const std::array<std::array<double, 2>, 2>& r2,
                                     int dim) {
  Rotation r;
  r.dim = dim;
  if (dim == 1) {
    r.mat[0][0] = r2[0][0];
    return r;
  }
  r.mat[0][0] = r2[0][0];
  r.mat[0][1] = r2[0][1];
  r.mat[1][0] = r2[1][0];
  r.mat[1][1] = r2[1][1];
  return r;
}

inline std::array<std::array<double, 2>, 2> plane_rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{{c, -s}, {s, c}}};
}

// Resamples phi o R^{-1} through the grid and reprojects. Rotations preserve
// degree, so this is exact up to quadrature error for band-limited fields.
inline SphereField apply_isometry(const SphereField& f, const Rotation& rot,
                                  const SphereGrid& grid) {
  require(f.dim == rot.dim && f.dim == grid.dim, "apply_isometry: dimension mismatch");
  require(grid.exact_degree() >= 2 * f.cutoff, "apply_isometry: grid too coarse");
  BasisEvaluator eval(f.dim, f.cutoff);
  std::vector<double> samples(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i)
    samples[i] = synthesize_at(f, rot.apply_transpose(grid.nodes[i]), eval);
  return analyze(samples, grid, f.cutoff);
}

// The sphere-side reflection (x_0 -> -x_0) acts exactly on coefficients:
// azimuthal order m picks up (-1)^m on cosine components and (-1)^{m+1} on
// sine components (degree parity for dim == 1).
inline SphereField theta_sphere(const SphereField& f) {
  SphereField out = f;
  if (f.dim == 1) {
    for (int l = 1; l <= f.cutoff; ++l) {
      const double sign = (l % 2 == 0) ? 1.0 : -1.0;
      out.coeffs[flat_index(1, {l, 1})] *= sign;
      out.coeffs[flat_index(1, {l, -1})] *= -sign;
    }
    return out;
  }
  for (int l = 0; l <= f.cutoff; ++l) {
    for (int m = 1; m <= l; ++m) {
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      out.coeffs[flat_index(2, {l, m})] *= sign;
      out.coeffs[flat_index(2, {l, -m})] *= -sign;
    }
  }
  return out;
}

// k alpha(g_k(T) alpha^{-1}(x / k)): the composite that realizes translations
// as large-sphere rotations.
inline PlanePoint translation_composite(const PlanePoint& x, const PlanePoint& t,
                                        double k, int dim) {
  const PlanePoint scaled{x[0] / k, dim == 2 ? x[1] / k : 0.0};
  const auto up = stereo_inverse(scaled, dim);
  const Rotation g = rotation_g_k(t, k, dim);
  const auto rotated = g.apply(up.x);
  const double xd = dim == 1 ? rotated[1] : rotated[2];
  if (!(xd < 1.0 - 1e-14))
    throw NumericalHealthError("translation_composite: intermediate point at projection pole");
  const auto down = stereo_project(rotated, dim);
  return {k * down.y[0], dim == 2 ? k * down.y[1] : 0.0};
}

// ---------------------------------------------------------------------------
// Lifting plane functions to the sphere: U_alpha U_{beta_k}
// ---------------------------------------------------------------------------

struct ConformalPipeline {
  int dim = 2;
  int cutoff = 0;
  double scale_k = 1.0;
  std::shared_ptr<const SphereGrid> grid;

  ConformalPipeline(int d, int L, double k, std::shared_ptr<const SphereGrid> g = nullptr)
      : dim(d), cutoff(L), scale_k(k), grid(std::move(g)) {
    require(k > 0.0, "ConformalPipeline: k must be positive");
    if (!grid) grid = std::make_shared<SphereGrid>(default_grid(d, L));
    require(grid->dim == d, "ConformalPipeline: grid dimension mismatch");
    require(grid->exact_degree() >= 2 * L, "ConformalPipeline: grid too coarse for cutoff");
  }
};

struct LiftResult {
  SphereField field;
  double residual = 0.0;  // | ||lift||^2 - ||f||^2 | / ||f||^2
};

inline constexpr double kDefaultLiftResidualCap = 0.05;

// Projection of Lambda_alpha^{d/2} k^{d/2} f(k alpha(x)) onto degrees <= L
// for an arbitrary scalar callable f. Pass the known L^2(R^d) norm^2 to get
// the truncation residual (NaN skips the residual bookkeeping).
template <class F>
LiftResult lift_scalar(F&& f, const ConformalPipeline& pipe, double f_norm2,
                       double residual_cap = kDefaultLiftResidualCap) {
  const SphereGrid& g = *pipe.grid;
  const double k = pipe.scale_k;
  const double power = 0.5 * pipe.dim;
  std::vector<double> samples(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto pr = stereo_project(g.nodes[i], pipe.dim);
    const PlanePoint y{k * pr.y[0], pipe.dim == 2 ? k * pr.y[1] : 0.0};
    samples[i] = std::pow(pr.conformal_factor * k, power) * f(y);
  }
  LiftResult out{analyze(samples, g, pipe.cutoff), 0.0};
  if (std::isfinite(f_norm2) && f_norm2 > 0.0) {
    out.residual = std::abs(out.field.norm2() - f_norm2) / f_norm2;
    if (residual_cap > 0.0 && out.residual > residual_cap)
      throw NumericalHealthError("lift: truncation residual " +
                                 std::to_string(out.residual) +
                                 " exceeds cap; cutoff too small for this (f, k)");
  }
  return out;
}

inline LiftResult lift_to_sphere(const PlaneTestFunction& f, const ConformalPipeline& pipe,
                                 double residual_cap = kDefaultLiftResidualCap) {
  require(f.dim == pipe.dim, "lift_to_sphere: dimension mismatch");
  const double n2 = f.terms.empty() ? 0.0 : l2_norm2(f);
  return lift_scalar([&f](const PlanePoint& y) { return f.value(y); }, pipe, n2,
                     residual_cap);
}

}  // namespace qftlab
