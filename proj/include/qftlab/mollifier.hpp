#pragma once

#include <cmath>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/sphere.hpp"

namespace qftlab {

// Isometry-invariant smoothing family: heat-kernel multipliers
// a_l = exp(-t_k l(l+d-1)) with t_k = k^{-exponent}. Invariance under the
// full isometry group is exact by construction (degree-diagonal), and the
// kernel width shrinks like sqrt(t_k), fast enough that k * width -> 0.
struct MollifierFamily {
  int dim = 2;
  int cutoff = 0;
  int index = 1;       // k
  double time = 1.0;   // t_k
  std::vector<double> multipliers;  // a_l per degree
};

inline MollifierFamily build_mollifier(int k, int dim, int cutoff, double exponent = 4.0) {
  require(k >= 1, "build_mollifier: k must be at least 1");
  MollifierFamily a;
  a.dim = dim;
  a.cutoff = cutoff;
  a.index = k;
  a.time = std::pow(static_cast<double>(k), -exponent);
  a.multipliers.resize(cutoff + 1);
  for (int l = 0; l <= cutoff; ++l)
    a.multipliers[l] = std::exp(-a.time * laplace_eigenvalue(dim, l));
  return a;
}

inline SphereField mollify(const MollifierFamily& a, const SphereField& f) {
  require(a.dim == f.dim && a.cutoff == f.cutoff, "mollify: shape mismatch");
  SphereField out = f;
  for (int i = 0; i < num_coeffs(f.dim, f.cutoff); ++i)
    out.coeffs[i] *= a.multipliers[unflatten_index(f.dim, i).degree];
  return out;
}

// Rotation-invariant kernel A_k(x, y) as a function of geodesic angle.
inline double mollifier_kernel(const MollifierFamily& a, double gamma) {
  if (a.dim == 2) {
    const double x = std::cos(gamma);
    double p0 = 1.0, p1 = x;
    double s = a.multipliers[0] / kFourPi;
    if (a.cutoff >= 1) s += a.multipliers[1] * 3.0 / kFourPi * x;
    for (int l = 2; l <= a.cutoff; ++l) {
      const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
      p0 = p1;
      p1 = p2;
      s += a.multipliers[l] * (2.0 * l + 1.0) / kFourPi * p1;
    }
    return s;
  }
  double s = a.multipliers[0];
  for (int l = 1; l <= a.cutoff; ++l) s += 2.0 * a.multipliers[l] * std::cos(l * gamma);
  return s / kTwoPi;
}

struct MollifierDiagnostics {
  double trace = 0.0;
  double diagonal = 0.0;        // A_k(x, x), constant in x by invariance
  double effective_width = 0.0; // radius holding all but 1e-6 of squared-kernel mass
};

// Smallest radius r with the squared-kernel mass outside r below `tail_fraction`
// of the total, found by scanning the cumulative distribution in gamma.
inline double mollifier_effective_width(const MollifierFamily& a,
                                        double tail_fraction = 1e-6) {
  const int n = 20000;
  std::vector<double> density(n);
  for (int i = 0; i < n; ++i) {
    const double gamma = kPi * (i + 0.5) / n;
    const double ring = a.dim == 2 ? kTwoPi * std::sin(gamma) : 2.0;
    density[i] = sqr(mollifier_kernel(a, gamma)) * ring;
  }
  double total = 0.0;
  for (double v : density) total += v;
  double tail = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    tail += density[i];
    if (tail > tail_fraction * total) return kPi * (i + 1.5) / n;
  }
  return 0.0;
}

inline MollifierDiagnostics mollifier_diagnostics(const MollifierFamily& a) {
  MollifierDiagnostics d;
  for (int l = 0; l <= a.cutoff; ++l) {
    d.trace += a.multipliers[l] * degree_multiplicity(a.dim, l);
    d.diagonal += a.multipliers[l] * degree_multiplicity(a.dim, l) / sphere_volume(a.dim);
  }
  d.effective_width = mollifier_effective_width(a);
  return d;
}

}  // namespace qftlab
