#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/covariance.hpp"
#include "qftlab/mollifier.hpp"
#include "qftlab/sphere.hpp"

namespace qftlab {

enum class InteractionKind { None, Bounded, RegularizedUnbounded, WickPolynomial };

// Interaction density specification. Bounded: rho = exp(+ integral g F(A_k phi));
// RegularizedUnbounded: rho = exp(- lambda_k integral F_k(A_k phi));
// WickPolynomial: rho = exp(- integral sum_n p_n :(A_k phi)^n:_{C_k}).
struct InteractionSpec {
  InteractionKind kind = InteractionKind::None;
  std::string name = "none";
  std::function<double(double)> f;            // F (Bounded / RegularizedUnbounded)
  double sup_bound = 0.0;                     // declared sup |F| for the Bounded kind
  std::vector<double> poly;                   // poly[n] multiplies :x^n: (Wick)
  std::function<double(const std::array<double, 3>&)> weight;  // g; null = constant 1
};

inline InteractionSpec no_interaction() { return {}; }

inline InteractionSpec bounded_interaction(std::string name, std::function<double(double)> f,
                                           double sup_bound) {
  require(static_cast<bool>(f), "bounded_interaction: F required");
  require(sup_bound > 0.0, "bounded_interaction: declared sup bound must be positive");
  for (int i = 0; i <= 400; ++i) {
    const double x = -10.0 + 0.05 * i;
    require(std::abs(f(x)) <= sup_bound * (1.0 + 1e-12),
            "bounded_interaction: |F| exceeds the declared bound on the probe grid");
  }
  InteractionSpec s;
  s.kind = InteractionKind::Bounded;
  s.name = std::move(name);
  s.f = std::move(f);
  s.sup_bound = sup_bound;
  return s;
}

inline InteractionSpec bounded_cos(double epsilon) {
  return bounded_interaction("bounded_cos(" + std::to_string(epsilon) + ")",
                             [epsilon](double x) { return epsilon * std::cos(x); },
                             std::abs(epsilon));
}

inline InteractionSpec regularized_power(int power = 4) {
  require(power >= 1, "regularized_power: power >= 1");
  InteractionSpec s;
  s.kind = InteractionKind::RegularizedUnbounded;
  s.name = "power" + std::to_string(power);
  s.f = [power](double x) { return std::pow(x, power); };
  return s;
}

inline InteractionSpec wick_polynomial(std::vector<double> coeffs) {
  require(coeffs.size() >= 2, "wick_polynomial: need a nonconstant polynomial");
  require(coeffs.size() <= 9, "wick_polynomial: degree limited to 8");
  const int degree = static_cast<int>(coeffs.size()) - 1;
  require(degree % 2 == 0 && coeffs.back() > 0.0,
          "wick_polynomial: bounded-below polynomials need positive even leading term");
  InteractionSpec s;
  s.kind = InteractionKind::WickPolynomial;
  s.name = "wick_deg" + std::to_string(degree);
  s.poly = std::move(coeffs);
  return s;
}

// F_k(x) = F(x) on V_k = {|F| <= k}, and k outside V_k.
inline std::function<double(double)> truncate_f(std::function<double(double)> f, double k) {
  require(k >= 1.0, "truncate_f: k >= 1");
  return [f = std::move(f), k](double x) {
    const double v = f(x);
    return std::abs(v) <= k ? v : k;
  };
}

// lambda_k = 1 / sup{|F(x)| : x in V_k}. The sup runs over an adaptive probe
// grid that doubles its range until the clip threshold is bracketed (or the
// observed sup stabilizes, for bounded F), then sharpens the V_k boundary by
// bisection so continuous unbounded F yields exactly 1/k.
inline double coupling_lambda(const std::function<double(double)>& f, double k) {
  require(static_cast<bool>(f), "coupling_lambda: F required");
  require(k >= 1.0, "coupling_lambda: k >= 1");
  const int probes = 4096;
  double sup_in = 0.0;
  double prev_sup = -1.0;
  bool clipped = false;
  double range = 1.0;
  for (int round = 0; round < 40; ++round) {
    sup_in = 0.0;
    clipped = false;
    double x_prev = -range;
    double v_prev = std::abs(f(x_prev));
    if (v_prev <= k) sup_in = std::max(sup_in, v_prev);
    for (int i = 1; i <= probes; ++i) {
      const double x = -range + 2.0 * range * i / probes;
      const double v = std::abs(f(x));
      if (v <= k) sup_in = std::max(sup_in, v);
      clipped = clipped || v > k;
      if ((v_prev <= k) != (v <= k)) {
        // Bisect the V_k boundary; its |F| value is k for continuous F.
        double lo = x_prev, hi = x;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          if ((std::abs(f(mid)) <= k) == (v_prev <= k))
            lo = mid;
          else
            hi = mid;
        }
        const double boundary = std::abs(f(std::abs(f(lo)) <= k ? lo : hi));
        if (boundary <= k) sup_in = std::max(sup_in, boundary);
      }
      x_prev = x;
      v_prev = v;
    }
    if (clipped) break;
    if (prev_sup >= 0.0 && std::abs(sup_in - prev_sup) <= 1e-12 * std::max(1.0, sup_in)) break;
    prev_sup = sup_in;
    range *= 2.0;
  }
  if (sup_in <= 0.0)
    throw std::invalid_argument("coupling_lambda: F vanishes on V_k probe grid");
  return 1.0 / sup_in;
}

// Coefficient of c^j f^{n-2j} in the n-th Wick power.
inline double wick_coefficient(int n, int j) {
  auto fact = [](int v) {
    double r = 1.0;
    for (int i = 2; i <= v; ++i) r *= i;
    return r;
  };
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return sign * fact(n) / (fact(n - 2 * j) * fact(j) * std::pow(2.0, j));
}

// Node-wise n-th Wick power with variance parameter c.
inline std::vector<double> wick_power(std::span<const double> values, int n, double c) {
  require(n >= 0 && n <= 12, "wick_power: n out of range [0, 12]");
  require(c >= 0.0, "wick_power: variance parameter must be nonnegative");
  std::vector<double> out(values.size(), 0.0);
  for (int j = 0; 2 * j <= n; ++j) {
    const double coef = wick_coefficient(n, j) * std::pow(c, j);
    const int power = n - 2 * j;
    for (std::size_t i = 0; i < values.size(); ++i)
      out[i] += coef * std::pow(values[i], power);
  }
  return out;
}

// Diagonal C_k(x, x) of C_k = A_k^* C A_k; constant in x by invariance.
inline double c_k_diagonal(const SpectralOperator& c, const MollifierFamily& a) {
  require(c.dim == a.dim && c.cutoff == a.cutoff, "c_k_diagonal: shape mismatch");
  double s = 0.0;
  for (int l = 0; l <= c.cutoff; ++l)
    s += sqr(a.multipliers[l]) * c.multipliers[l] * degree_multiplicity(c.dim, l);
  return s / sphere_volume(c.dim);
}

// Off-diagonal kernel C_k(x, y) as a function of geodesic angle.
inline double c_k_kernel(const SpectralOperator& c, const MollifierFamily& a, double gamma) {
  SpectralOperator damped = c;
  for (int l = 0; l <= c.cutoff; ++l) damped.multipliers[l] *= sqr(a.multipliers[l]);
  return damped.kernel(gamma);
}

// Precomputed state for evaluating log rho_k over an ensemble: the mollifier,
// the renormalized coupling, and the Wick variance constant.
struct DensityContext {
  InteractionSpec spec;
  int index_k = 1;
  MollifierFamily mollifier;
  const SphereGrid* grid = nullptr;
  double lambda_k = 0.0;
  double wick_c = 0.0;

  double log_density(const SphereField& phi) const {
    if (spec.kind == InteractionKind::None) return 0.0;
    require(grid != nullptr, "DensityContext: grid required");
    const SphereField smoothed = mollify(mollifier, phi);
    const std::vector<double> values = synthesize(smoothed, *grid);
    double integral = 0.0;
    switch (spec.kind) {
      case InteractionKind::Bounded:
        for (std::size_t i = 0; i < values.size(); ++i) {
          const double g = spec.weight ? spec.weight(grid->nodes[i]) : 1.0;
          integral += grid->weights[i] * g * spec.f(values[i]);
        }
        break;
      case InteractionKind::RegularizedUnbounded: {
        const double k = static_cast<double>(index_k);
        for (std::size_t i = 0; i < values.size(); ++i) {
          const double v = spec.f(values[i]);
          integral -= lambda_k * grid->weights[i] * (std::abs(v) <= k ? v : k);
        }
        break;
      }
      case InteractionKind::WickPolynomial: {
        for (int n = 1; n < static_cast<int>(spec.poly.size()); ++n) {
          if (spec.poly[n] == 0.0) continue;
          const std::vector<double> wp = wick_power(values, n, wick_c);
          double term = 0.0;
          for (std::size_t i = 0; i < wp.size(); ++i) term += grid->weights[i] * wp[i];
          integral -= spec.poly[n] * term;
        }
        break;
      }
      case InteractionKind::None:
        break;
    }
    if (!std::isfinite(integral))
      throw NumericalHealthError("log_density: non-finite integrand");
    // Bounded interactions with the default constant weight obey the sup
    // bracket |log rho| <= B Vol exactly.
    if (spec.kind == InteractionKind::Bounded && !spec.weight && spec.sup_bound > 0.0 &&
        std::abs(integral) > spec.sup_bound * sphere_volume(spec_dim()) * (1.0 + 1e-12))
      throw NumericalHealthError("log_density: bounded density exceeded its declared sup");
    return integral;
  }

  int spec_dim() const { return mollifier.dim; }
};

inline DensityContext make_density_context(const InteractionSpec& spec, int k, int dim,
                                           int cutoff, const SphereGrid& grid,
                                           const SpectralOperator* wick_cov = nullptr) {
  require(k >= 1, "make_density_context: k >= 1");
  DensityContext ctx;
  ctx.spec = spec;
  ctx.index_k = k;
  ctx.mollifier = build_mollifier(k, dim, cutoff);
  ctx.grid = &grid;
  if (spec.kind == InteractionKind::RegularizedUnbounded)
    ctx.lambda_k = coupling_lambda(spec.f, static_cast<double>(k));
  if (spec.kind == InteractionKind::WickPolynomial) {
    require(wick_cov != nullptr, "make_density_context: Wick kind needs a covariance");
    ctx.wick_c = c_k_diagonal(*wick_cov, ctx.mollifier);
  }
  return ctx;
}

// One-shot evaluation of log rho_k(phi).
inline double log_density(const InteractionSpec& spec, const SphereField& phi, int k,
                          const SphereGrid& grid, const SpectralOperator* wick_cov = nullptr) {
  DensityContext ctx = make_density_context(spec, k, phi.dim, phi.cutoff, grid, wick_cov);
  return ctx.log_density(phi);
}

}  // namespace qftlab
