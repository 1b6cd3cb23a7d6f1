#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qftlab/core.hpp"

namespace qftlab {

// Real harmonic basis label. For dim == 2 this is the usual (l, m) with
// |m| <= l, m > 0 cosine-type and m < 0 sine-type. For dim == 1 the degree-l
// pair is labelled m = +1 (cosine) / m = -1 (sine), with m = 0 at l = 0.
struct HarmonicIndex {
  int degree = 0;
  int order = 0;
};

inline int num_coeffs(int dim, int cutoff) {
  require(dim == 1 || dim == 2, "num_coeffs: dim must be 1 or 2");
  require(cutoff >= 0, "num_coeffs: cutoff must be nonnegative");
  return dim == 1 ? 2 * cutoff + 1 : (cutoff + 1) * (cutoff + 1);
}

inline int degree_multiplicity(int dim, int l) {
  return dim == 1 ? (l == 0 ? 1 : 2) : 2 * l + 1;
}

// Eigenvalue of the (nonnegative) Laplacian on S^d at degree l.
inline double laplace_eigenvalue(int dim, int l) {
  return static_cast<double>(l) * (l + dim - 1);
}

inline int flat_index(int dim, HarmonicIndex idx) {
  const int l = idx.degree, m = idx.order;
  if (dim == 1) {
    require(l >= 0 && ((l == 0 && m == 0) || (l > 0 && (m == 1 || m == -1))),
            "flat_index: bad circle harmonic index");
    if (l == 0) return 0;
    return m == 1 ? 2 * l - 1 : 2 * l;
  }
  require(l >= 0 && std::abs(m) <= l, "flat_index: need |m| <= l");
  return l * l + l + m;
}

inline HarmonicIndex unflatten_index(int dim, int flat) {
  if (dim == 1) {
    if (flat == 0) return {0, 0};
    const int l = (flat + 1) / 2;
    return {l, flat % 2 == 1 ? 1 : -1};
  }
  int l = static_cast<int>(std::sqrt(static_cast<double>(flat)));
  while ((l + 1) * (l + 1) <= flat) ++l;
  while (l * l > flat) --l;
  return {l, flat - l * l - l};
}

// Truncated real field on S^d in the orthonormal harmonic basis; the
// computational stand-in for a distribution at spectral cutoff `cutoff`.
struct SphereField {
  int dim = 2;
  int cutoff = 0;
  std::vector<double> coeffs;

  SphereField() = default;
  SphereField(int d, int L) : dim(d), cutoff(L), coeffs(num_coeffs(d, L), 0.0) {}

  double& at(HarmonicIndex idx) { return coeffs[flat_index(dim, idx)]; }
  double at(HarmonicIndex idx) const { return coeffs[flat_index(dim, idx)]; }

  double norm2() const {
    double s = 0.0;
    for (double c : coeffs) s += c * c;
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }

  SphereField& operator+=(const SphereField& o) {
    require(dim == o.dim && cutoff == o.cutoff, "SphereField +=: shape mismatch");
    for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] += o.coeffs[i];
    return *this;
  }
  SphereField& operator-=(const SphereField& o) {
    require(dim == o.dim && cutoff == o.cutoff, "SphereField -=: shape mismatch");
    for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] -= o.coeffs[i];
    return *this;
  }
  SphereField& operator*=(double a) {
    for (double& c : coeffs) c *= a;
    return *this;
  }

  friend SphereField operator+(SphereField a, const SphereField& b) { return a += b; }
  friend SphereField operator-(SphereField a, const SphereField& b) { return a -= b; }
  friend SphereField operator*(double a, SphereField f) { return f *= a; }
};

inline double inner_product(const SphereField& f, const SphereField& g) {
  require(f.dim == g.dim && f.cutoff == g.cutoff,
          "inner_product: dimension/cutoff mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.coeffs.size(); ++i) s += f.coeffs[i] * g.coeffs[i];
  return s;
}

// Gauss-Legendre nodes (ascending) and weights on [-1, 1], by Newton
// iteration on the degree-n Legendre polynomial.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  require(n >= 1, "gauss_legendre: n >= 1");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int l = 2; l <= n; ++l) {
        const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Plain Legendre polynomial P_l(x), used in closed-form kernel sums.
inline double legendre_p(int l, double x) {
  if (l == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int j = 2; j <= l; ++j) {
    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Quadrature grid on S^d embedded in R^{d+1} (third coordinate unused when
// dim == 1). dim == 2 grids are Gauss-Legendre x uniform-longitude products
// with nodes ordered z-major (node = q * n_phi + p); dim == 1 grids are
// uniform with a half-step offset so the projection pole is never a node.
struct SphereGrid {
  int dim = 2;
  int resolution = 0;
  bool pole_excluded = true;
  std::vector<std::array<double, 3>> nodes;
  std::vector<double> weights;
  // Product structure (dim == 2 only).
  std::vector<double> z_nodes, z_weights;
  int n_phi = 0;

  // Highest polynomial/trigonometric degree integrated exactly.
  int exact_degree() const { return dim == 2 ? 2 * resolution - 1 : resolution - 1; }
};

inline SphereGrid build_grid(int dim, int n) {
  require(dim == 1 || dim == 2, "build_grid: unsupported dimension");
  require(n >= 4, "build_grid: resolution must be at least 4");
  SphereGrid g;
  g.dim = dim;
  g.resolution = n;
  if (dim == 1) {
    g.nodes.resize(n);
    g.weights.assign(n, kTwoPi / n);
    for (int j = 0; j < n; ++j) {
      const double tau = kTwoPi * (j + 0.5) / n;
      g.nodes[j] = {std::cos(tau), std::sin(tau), 0.0};
    }
    return g;
  }
  gauss_legendre(n, g.z_nodes, g.z_weights);
  g.n_phi = 2 * n;
  g.nodes.resize(static_cast<std::size_t>(n) * g.n_phi);
  g.weights.resize(g.nodes.size());
  for (int q = 0; q < n; ++q) {
    const double z = g.z_nodes[q];
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double w = g.z_weights[q] * kTwoPi / g.n_phi;
    for (int p = 0; p < g.n_phi; ++p) {
      const double phi = kTwoPi * p / g.n_phi;
      g.nodes[static_cast<std::size_t>(q) * g.n_phi + p] = {rho * std::cos(phi),
                                                            rho * std::sin(phi), z};
      g.weights[static_cast<std::size_t>(q) * g.n_phi + p] = w;
    }
  }
  return g;
}

// Grid resolution policy: resolution >= 2L, which keeps band-limited products
// exact with headroom for the smooth non-band-limited integrands appearing in
// lifts and interaction densities. dim == 1 sizes are multiples of 4 so the
// node set is symmetric under the equatorial reflection.
inline int default_grid_resolution(int dim, int cutoff) {
  if (dim == 2) return std::max(4, 2 * cutoff + 2);
  return std::max(8, ((4 * cutoff + 7) / 4) * 4);
}

inline SphereGrid default_grid(int dim, int cutoff) {
  return build_grid(dim, default_grid_resolution(dim, cutoff));
}

// Evaluates the full harmonic basis at arbitrary points. Holds workspace so
// hot loops do not allocate; not safe for concurrent use of one instance.
class BasisEvaluator {
 public:
  BasisEvaluator(int dim, int cutoff) : dim_(dim), cutoff_(cutoff) {
    require(dim == 1 || dim == 2, "BasisEvaluator: dim must be 1 or 2");
    if (dim == 2) {
      q_.resize(static_cast<std::size_t>(cutoff + 1) * (cutoff + 2) / 2);
      cos_m_.resize(cutoff + 1);
      sin_m_.resize(cutoff + 1);
    }
  }

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }

  // Normalized associated Legendre values Q_l^m(z) for each 0 <= m <= l <= L,
  // with Y_{l,0} = Q_l^0 and Y_{l,+-m} = sqrt(2) Q_l^m {cos,sin}(m phi).
  void legendre_column(double z, double rho) {
    const int L = cutoff_;
    q_[tri(0, 0)] = std::sqrt(1.0 / kFourPi);
    for (int m = 1; m <= L; ++m)
      q_[tri(m, m)] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * rho * q_[tri(m - 1, m - 1)];
    for (int m = 0; m < L; ++m)
      q_[tri(m, m + 1)] = std::sqrt(2.0 * m + 3.0) * z * q_[tri(m, m)];
    for (int m = 0; m <= L; ++m) {
      for (int l = m + 2; l <= L; ++l) {
        const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
        const double b = std::sqrt((sqr(l - 1.0) - static_cast<double>(m) * m) / (4.0 * sqr(l - 1.0) - 1.0));
        q_[tri(m, l)] = a * (z * q_[tri(m, l - 1)] - b * q_[tri(m, l - 2)]);
      }
    }
  }

  double legendre_value(int m, int l) const { return q_[tri(m, l)]; }

  // All basis values at one point, written into out (size num_coeffs).
  void eval(const std::array<double, 3>& x, std::span<double> out) {
    if (dim_ == 1) {
      const double tau = std::atan2(x[1], x[0]);
      out[0] = 1.0 / std::sqrt(kTwoPi);
      const double inv_sqrt_pi = 1.0 / std::sqrt(kPi);
      for (int l = 1; l <= cutoff_; ++l) {
        out[2 * l - 1] = std::cos(l * tau) * inv_sqrt_pi;
        out[2 * l] = std::sin(l * tau) * inv_sqrt_pi;
      }
      return;
    }
    const double z = x[2];
    const double rho = std::hypot(x[0], x[1]);
    double c1 = 1.0, s1 = 0.0;
    if (rho > 0.0) {
      c1 = x[0] / rho;
      s1 = x[1] / rho;
    }
    legendre_column(z, rho);
    cos_m_[0] = 1.0;
    sin_m_[0] = 0.0;
    for (int m = 1; m <= cutoff_; ++m) {
      cos_m_[m] = cos_m_[m - 1] * c1 - sin_m_[m - 1] * s1;
      sin_m_[m] = sin_m_[m - 1] * c1 + cos_m_[m - 1] * s1;
    }
    const double rt2 = std::sqrt(2.0);
    for (int l = 0; l <= cutoff_; ++l) {
      out[flat_index(2, {l, 0})] = q_[tri(0, l)];
      for (int m = 1; m <= l; ++m) {
        const double v = rt2 * q_[tri(m, l)];
        out[flat_index(2, {l, m})] = v * cos_m_[m];
        out[flat_index(2, {l, -m})] = v * sin_m_[m];
      }
    }
  }

 private:
  std::size_t tri(int m, int l) const {
    // Column-major triangular storage: column m holds degrees l = m..L.
    return static_cast<std::size_t>(m) * (2 * cutoff_ + 3 - m) / 2 + (l - m);
  }

  int dim_;
  int cutoff_;
  std::vector<double> q_;
  std::vector<double> cos_m_, sin_m_;
};

// Pointwise synthesis sum_{l,m} c_{l,m} Y_{l,m}(x) at one point.
inline double synthesize_at(const SphereField& f, const std::array<double, 3>& x,
                            BasisEvaluator& eval) {
  require(eval.dim() == f.dim && eval.cutoff() == f.cutoff,
          "synthesize_at: evaluator mismatch");
  thread_local std::vector<double> row;
  row.resize(f.coeffs.size());
  eval.eval(x, row);
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * f.coeffs[i];
  return s;
}

inline double synthesize_at(const SphereField& f, const std::array<double, 3>& x) {
  BasisEvaluator eval(f.dim, f.cutoff);
  return synthesize_at(f, x, eval);
}

namespace detail {

// Two-stage synthesis on product grids: collapse degrees at each z ring, then
// sweep longitudes. Cuts the cost from O(nodes * coeffs) to
// O(nz * coeffs + nodes * L).
inline void synthesize_product(const SphereField& f, const SphereGrid& g,
                               std::vector<double>& out) {
  const int L = f.cutoff;
  const int nz = static_cast<int>(g.z_nodes.size());
  const int nphi = g.n_phi;
  BasisEvaluator eval(2, L);
  std::vector<double> ring_cos(static_cast<std::size_t>(nz) * (L + 1));
  std::vector<double> ring_sin(static_cast<std::size_t>(nz) * (L + 1));
  const double rt2 = std::sqrt(2.0);
  for (int q = 0; q < nz; ++q) {
    const double z = g.z_nodes[q];
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    eval.legendre_column(z, rho);
    for (int m = 0; m <= L; ++m) {
      double sc = 0.0, ss = 0.0;
      for (int l = m; l <= L; ++l) {
        const double qv = eval.legendre_value(m, l);
        if (m == 0) {
          sc += f.coeffs[flat_index(2, {l, 0})] * qv;
        } else {
          sc += f.coeffs[flat_index(2, {l, m})] * rt2 * qv;
          ss += f.coeffs[flat_index(2, {l, -m})] * rt2 * qv;
        }
      }
      ring_cos[static_cast<std::size_t>(q) * (L + 1) + m] = sc;
      ring_sin[static_cast<std::size_t>(q) * (L + 1) + m] = ss;
    }
  }
  out.assign(g.nodes.size(), 0.0);
  for (int q = 0; q < nz; ++q) {
    for (int p = 0; p < nphi; ++p) {
      const double phi = kTwoPi * p / nphi;
      const double c1 = std::cos(phi), s1 = std::sin(phi);
      double cm = 1.0, sm = 0.0;
      double acc = ring_cos[static_cast<std::size_t>(q) * (L + 1)];
      for (int m = 1; m <= L; ++m) {
        const double cn = cm * c1 - sm * s1;
        const double sn = sm * c1 + cm * s1;
        cm = cn;
        sm = sn;
        acc += ring_cos[static_cast<std::size_t>(q) * (L + 1) + m] * cm +
               ring_sin[static_cast<std::size_t>(q) * (L + 1) + m] * sm;
      }
      out[static_cast<std::size_t>(q) * nphi + p] = acc;
    }
  }
}

inline void analyze_product(std::span<const double> samples, const SphereGrid& g, int L,
                            SphereField& out) {
  const int nz = static_cast<int>(g.z_nodes.size());
  const int nphi = g.n_phi;
  BasisEvaluator eval(2, L);
  // Stage 1: weighted Fourier sums over each longitude ring.
  std::vector<double> ring_cos(static_cast<std::size_t>(nz) * (L + 1), 0.0);
  std::vector<double> ring_sin(static_cast<std::size_t>(nz) * (L + 1), 0.0);
  const double wphi = kTwoPi / nphi;
  for (int q = 0; q < nz; ++q) {
    for (int p = 0; p < nphi; ++p) {
      const double v = samples[static_cast<std::size_t>(q) * nphi + p] * wphi;
      const double phi = kTwoPi * p / nphi;
      const double c1 = std::cos(phi), s1 = std::sin(phi);
      double cm = 1.0, sm = 0.0;
      ring_cos[static_cast<std::size_t>(q) * (L + 1)] += v;
      for (int m = 1; m <= L; ++m) {
        const double cn = cm * c1 - sm * s1;
        const double sn = sm * c1 + cm * s1;
        cm = cn;
        sm = sn;
        ring_cos[static_cast<std::size_t>(q) * (L + 1) + m] += v * cm;
        ring_sin[static_cast<std::size_t>(q) * (L + 1) + m] += v * sm;
      }
    }
  }
  // Stage 2: Legendre quadrature in z.
  out = SphereField(2, L);
  const double rt2 = std::sqrt(2.0);
  for (int q = 0; q < nz; ++q) {
    const double z = g.z_nodes[q];
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    eval.legendre_column(z, rho);
    const double wz = g.z_weights[q];
    for (int m = 0; m <= L; ++m) {
      const double fc = ring_cos[static_cast<std::size_t>(q) * (L + 1) + m] * wz;
      const double fs = ring_sin[static_cast<std::size_t>(q) * (L + 1) + m] * wz;
      for (int l = m; l <= L; ++l) {
        const double qv = eval.legendre_value(m, l);
        if (m == 0) {
          out.coeffs[flat_index(2, {l, 0})] += qv * fc;
        } else {
          out.coeffs[flat_index(2, {l, m})] += rt2 * qv * fc;
          out.coeffs[flat_index(2, {l, -m})] += rt2 * qv * fs;
        }
      }
    }
  }
}

}  // namespace detail

// samples[i] = sum_{l,m} c_{l,m} Y_{l,m}(node_i).
inline std::vector<double> synthesize(const SphereField& f, const SphereGrid& g) {
  require(f.dim == g.dim, "synthesize: dimension mismatch");
  require(g.resolution >= f.cutoff + 1, "synthesize: grid resolution insufficient for cutoff");
  std::vector<double> out;
  if (g.dim == 2) {
    detail::synthesize_product(f, g, out);
    return out;
  }
  out.assign(g.nodes.size(), 0.0);
  BasisEvaluator eval(f.dim, f.cutoff);
  std::vector<double> row(f.coeffs.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    eval.eval(g.nodes[i], row);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * f.coeffs[j];
    out[i] = s;
  }
  return out;
}

// Quadrature projection onto degrees <= L; the left inverse of synthesize on
// band-limited inputs when the grid is exact through degree 2L.
inline SphereField analyze(std::span<const double> samples, const SphereGrid& g, int L) {
  require(static_cast<std::size_t>(samples.size()) == g.nodes.size(),
          "analyze: sample count does not match grid");
  require(g.exact_degree() >= 2 * L, "analyze: cutoff exceeds grid capability");
  SphereField out(g.dim, L);
  if (g.dim == 2) {
    detail::analyze_product(samples, g, L, out);
    return out;
  }
  BasisEvaluator eval(g.dim, L);
  std::vector<double> row(out.coeffs.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    eval.eval(g.nodes[i], row);
    const double w = g.weights[i] * samples[i];
    for (std::size_t j = 0; j < row.size(); ++j) out.coeffs[j] += w * row[j];
  }
  return out;
}

inline double quadrature_integral(std::span<const double> samples, const SphereGrid& g) {
  require(samples.size() == g.nodes.size(), "quadrature_integral: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) s += g.weights[i] * samples[i];
  return s;
}

}  // namespace qftlab
