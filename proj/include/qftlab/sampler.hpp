#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qftlab/covariance.hpp"
#include "qftlab/interaction.hpp"
#include "qftlab/rng.hpp"

namespace qftlab {

// ---------------------------------------------------------------------------
// Covariance handle: one sampling/quadratic-form interface over the three
// operator representations used as Gaussian reference measures.
// ---------------------------------------------------------------------------

class CovarianceHandle {
 public:
  static CovarianceHandle spectral(SpectralOperator c) {
    CovarianceHandle h;
    h.dim_ = c.dim;
    h.cutoff_ = c.cutoff;
    h.spectral_ = std::make_shared<SpectralOperator>(std::move(c));
    h.spectral_sqrt_ = std::make_shared<SpectralOperator>(operator_sqrt(*h.spectral_));
    return h;
  }

  static CovarianceHandle scaled(std::shared_ptr<const ScaledCovariance> c) {
    CovarianceHandle h;
    h.dim_ = c->dim();
    h.cutoff_ = c->cutoff();
    h.scaled_ = std::move(c);
    return h;
  }

  static CovarianceHandle dense(DenseOperator c) {
    CovarianceHandle h;
    h.dim_ = c.dim;
    h.cutoff_ = c.cutoff;
    h.dense_ = std::make_shared<DenseOperator>(std::move(c));
    h.dense_sqrt_ = std::make_shared<DenseOperator>(operator_sqrt(*h.dense_));
    return h;
  }

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }

  double quadratic_form(const SphereField& f) const {
    if (spectral_) return spectral_->quadratic_form(f);
    if (scaled_) return scaled_->quadratic_form(f);
    return dense_->quadratic_form(f);
  }

  // Bilinear cross pairing <C f, g>.
  double cross_form(const SphereField& f, const SphereField& g) const {
    if (spectral_) return inner_product(spectral_->apply(f), g);
    if (scaled_) return inner_product(scaled_->apply(f), g);
    return inner_product(dense_->apply(f), g);
  }

  SphereField sample_transform(std::span<const double> xi) const {
    if (scaled_) return scaled_->sample_transform(xi);
    SphereField f(dim_, cutoff_);
    for (int i = 0; i < num_coeffs(dim_, cutoff_); ++i) f.coeffs[i] = xi[i];
    return spectral_ ? spectral_sqrt_->apply(f) : dense_sqrt_->apply(f);
  }

  double operator_norm() const {
    if (spectral_) return spectral_->max_multiplier();
    if (scaled_) return scaled_->operator_norm();
    return dense_->operator_norm();
  }

 private:
  int dim_ = 2;
  int cutoff_ = 0;
  std::shared_ptr<const SpectralOperator> spectral_, spectral_sqrt_;
  std::shared_ptr<const ScaledCovariance> scaled_;
  std::shared_ptr<const DenseOperator> dense_, dense_sqrt_;
};

// The distribution pairing phi(f) in the orthonormal basis.
inline double pair_field(const SphereField& phi, const SphereField& f) {
  return inner_product(phi, f);
}

// ---------------------------------------------------------------------------
// Gaussian sampling: sample i is a pure function of (seed, i, covariance).
// ---------------------------------------------------------------------------

struct GaussianSampler {
  CovarianceHandle covariance;
  std::uint64_t seed = 0;

  SphereField sample(std::uint64_t index) const {
    GaussianStream gs(seed, index);
    std::vector<double> xi(num_coeffs(covariance.dim(), covariance.cutoff()));
    for (double& x : xi) x = gs.next();
    return covariance.sample_transform(xi);
  }
};

inline std::vector<SphereField> sample_gaussian(const GaussianSampler& sampler, int n) {
  std::vector<SphereField> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sampler.sample(i));
  return out;
}

// ---------------------------------------------------------------------------
// Weighted ensembles representing mu_k = N_k rho_k mu_C via importance
// sampling from the Gaussian reference measure.
// ---------------------------------------------------------------------------

struct WeightedEnsemble {
  int dim = 2;
  int cutoff = 0;
  int index_k = 1;
  std::uint64_t seed = 0;
  std::string interaction_name = "none";
  std::vector<SphereField> fields;
  std::vector<double> log_weights;

  bool is_gaussian() const {
    for (double w : log_weights)
      if (w != 0.0) return false;
    return true;
  }
};

// Effective sample size (sum w)^2 / sum w^2 with max-log shifted weights.
inline double effective_sample_size(std::span<const double> log_weights) {
  if (log_weights.empty()) return 0.0;
  double max_lw = log_weights[0];
  for (double lw : log_weights) max_lw = std::max(max_lw, lw);
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - max_lw);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

inline constexpr double kEssFloor = 10.0;

inline WeightedEnsemble build_weighted_ensemble(const GaussianSampler& sampler,
                                                const DensityContext* density, int k, int n) {
  require(n >= 100, "build_weighted_ensemble: need at least 100 samples");
  WeightedEnsemble e;
  e.dim = sampler.covariance.dim();
  e.cutoff = sampler.covariance.cutoff();
  e.index_k = k;
  e.seed = sampler.seed;
  if (density) e.interaction_name = density->spec.name;
  e.fields.reserve(n);
  e.log_weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    e.fields.push_back(sampler.sample(i));
    e.log_weights.push_back(density ? density->log_density(e.fields.back()) : 0.0);
  }
  const double ess = effective_sample_size(e.log_weights);
  if (ess < kEssFloor)
    throw NumericalHealthError("build_weighted_ensemble: effective sample size " +
                               std::to_string(ess) + " below floor " +
                               std::to_string(kEssFloor) +
                               "; density too peaked for this sample count");
  return e;
}

// ---------------------------------------------------------------------------
// Estimators. All reductions are block-wise pairwise sums followed by a
// 20-block jackknife for ratio estimators, so outputs are bit-reproducible.
// ---------------------------------------------------------------------------

inline constexpr int kJackknifeBlocks = 20;

struct CharFuncEstimate {
  cplx value{1.0, 0.0};
  double stderr_combined = 0.0;
  int n_samples = 0;
  double ess = 0.0;
};

struct MeanErr {
  double mean = 0.0;
  double err = 0.0;
};

namespace detail {

// Per-block sums of a complex numerator and a real denominator; jackknife of
// the ratio across blocks.
struct RatioBlocks {
  std::vector<double> num_re, num_im, den;

  static RatioBlocks accumulate(int n, const std::function<cplx(int)>& numerator,
                                const std::function<double(int)>& denominator) {
    RatioBlocks rb;
    const int nb = std::min(kJackknifeBlocks, n);
    rb.num_re.assign(nb, 0.0);
    rb.num_im.assign(nb, 0.0);
    rb.den.assign(nb, 0.0);
    std::vector<double> re(n), im(n), dn(n);
    for (int i = 0; i < n; ++i) {
      const cplx z = numerator(i);
      re[i] = z.real();
      im[i] = z.imag();
      dn[i] = denominator(i);
    }
    for (int b = 0; b < nb; ++b) {
      const int lo = static_cast<int>(static_cast<long long>(b) * n / nb);
      const int hi = static_cast<int>(static_cast<long long>(b + 1) * n / nb);
      rb.num_re[b] = pairwise_sum(std::span<const double>(re).subspan(lo, hi - lo));
      rb.num_im[b] = pairwise_sum(std::span<const double>(im).subspan(lo, hi - lo));
      rb.den[b] = pairwise_sum(std::span<const double>(dn).subspan(lo, hi - lo));
    }
    return rb;
  }

  CharFuncEstimate estimate(int n, double ess) const {
    const int nb = static_cast<int>(den.size());
    const double tot_den = pairwise_sum(den);
    const double tot_re = pairwise_sum(num_re);
    const double tot_im = pairwise_sum(num_im);
    CharFuncEstimate est;
    est.n_samples = n;
    est.ess = ess;
    est.value = cplx(tot_re / tot_den, tot_im / tot_den);
    if (nb < 2) return est;
    double mean_re = 0.0, mean_im = 0.0;
    std::vector<double> jre(nb), jim(nb);
    for (int b = 0; b < nb; ++b) {
      jre[b] = (tot_re - num_re[b]) / (tot_den - den[b]);
      jim[b] = (tot_im - num_im[b]) / (tot_den - den[b]);
      mean_re += jre[b];
      mean_im += jim[b];
    }
    mean_re /= nb;
    mean_im /= nb;
    double var_re = 0.0, var_im = 0.0;
    for (int b = 0; b < nb; ++b) {
      var_re += sqr(jre[b] - mean_re);
      var_im += sqr(jim[b] - mean_im);
    }
    const double factor = static_cast<double>(nb - 1) / nb;
    est.stderr_combined = std::sqrt(factor * (var_re + var_im));
    return est;
  }
};

}  // namespace detail

// Monte Carlo characteristic functional with optional complexified argument
// f_re + i f_im: estimates E[w e^{i phi(f_re) - phi(f_im)}] / E[w].
inline CharFuncEstimate char_functional(const WeightedEnsemble& e, const SphereField& f_re,
                                        const SphereField* f_im = nullptr) {
  const int n = static_cast<int>(e.fields.size());
  const double ess = effective_sample_size(e.log_weights);
  if (ess < kEssFloor)
    throw NumericalHealthError("char_functional: effective sample size below floor");
  double max_lw = e.log_weights[0];
  for (double lw : e.log_weights) max_lw = std::max(max_lw, lw);
  const auto rb = detail::RatioBlocks::accumulate(
      n,
      [&](int i) {
        const double w = std::exp(e.log_weights[i] - max_lw);
        const double re_arg = pair_field(e.fields[i], f_re);
        const double damp = f_im ? std::exp(-pair_field(e.fields[i], *f_im)) : 1.0;
        return cplx(w * damp * std::cos(re_arg), w * damp * std::sin(re_arg));
      },
      [&](int i) { return std::exp(e.log_weights[i] - max_lw); });
  return rb.estimate(n, ess);
}

// Closed-form Gaussian characteristic functional with the bilinear complex
// extension: S(f1 + i f2) = exp(-(Q(f1) - Q(f2))/2 - i <C f1, f2>).
inline cplx gaussian_char_exact(const CovarianceHandle& c, const SphereField& f_re,
                                const SphereField* f_im = nullptr) {
  const double q11 = c.quadratic_form(f_re);
  if (!f_im) return std::exp(-0.5 * q11);
  const double q22 = c.quadratic_form(*f_im);
  const double q12 = c.cross_form(f_re, *f_im);
  return std::exp(cplx(-0.5 * (q11 - q22), -q12));
}

inline cplx gaussian_char_exact(const SpectralOperator& c, const SphereField& f_re,
                                const SphereField* f_im = nullptr) {
  const double q11 = c.quadratic_form(f_re);
  if (!f_im) return std::exp(-0.5 * q11);
  const double q22 = c.quadratic_form(*f_im);
  const double q12 = inner_product(c.apply(f_re), *f_im);
  return std::exp(cplx(-0.5 * (q11 - q22), -q12));
}

struct DensityMoments {
  MeanErr first;    // E[rho]
  MeanErr second;   // E[rho^2]
  double lambda_k = 0.0;
};

// Unweighted Monte Carlo moments of the density under the reference measure.
inline DensityMoments density_moments(const GaussianSampler& sampler,
                                      const DensityContext& density, int n) {
  require(n >= 1000, "density_moments: need at least 1000 samples");
  std::vector<double> rho(n), rho2(n);
  for (int i = 0; i < n; ++i) {
    const double r = std::exp(density.log_density(sampler.sample(i)));
    rho[i] = r;
    rho2[i] = r * r;
  }
  auto mean_err = [n](const std::vector<double>& v) {
    const double mean = pairwise_sum(v) / n;
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = sqr(v[i] - mean);
    return MeanErr{mean, std::sqrt(pairwise_sum(dev) / (static_cast<double>(n) * (n - 1)))};
  };
  return DensityMoments{mean_err(rho), mean_err(rho2), density.lambda_k};
}

// Weighted second moment E_mu[phi(f)^2] with jackknife error.
inline MeanErr second_moment(const WeightedEnsemble& e, const SphereField& f) {
  const int n = static_cast<int>(e.fields.size());
  const double ess = effective_sample_size(e.log_weights);
  if (ess < kEssFloor)
    throw NumericalHealthError("second_moment: effective sample size below floor");
  double max_lw = e.log_weights[0];
  for (double lw : e.log_weights) max_lw = std::max(max_lw, lw);
  const auto rb = detail::RatioBlocks::accumulate(
      n,
      [&](int i) {
        const double w = std::exp(e.log_weights[i] - max_lw);
        return cplx(w * sqr(pair_field(e.fields[i], f)), 0.0);
      },
      [&](int i) { return std::exp(e.log_weights[i] - max_lw); });
  const auto est = rb.estimate(n, ess);
  return {est.value.real(), est.stderr_combined};
}

// Weighted fourth cumulant of phi(f): m4 - 3 m2^2 (exploratory diagnostic).
inline MeanErr fourth_cumulant(const WeightedEnsemble& e, const SphereField& f) {
  const int n = static_cast<int>(e.fields.size());
  double max_lw = e.log_weights[0];
  for (double lw : e.log_weights) max_lw = std::max(max_lw, lw);
  const int nb = std::min(kJackknifeBlocks, n);
  std::vector<double> w2(nb, 0.0), w4(nb, 0.0), wt(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(b) * n / nb);
    const int hi = static_cast<int>(static_cast<long long>(b + 1) * n / nb);
    std::vector<double> a2(hi - lo), a4(hi - lo), aw(hi - lo);
    for (int i = lo; i < hi; ++i) {
      const double w = std::exp(e.log_weights[i] - max_lw);
      const double x = pair_field(e.fields[i], f);
      a2[i - lo] = w * x * x;
      a4[i - lo] = w * x * x * x * x;
      aw[i - lo] = w;
    }
    w2[b] = pairwise_sum(a2);
    w4[b] = pairwise_sum(a4);
    wt[b] = pairwise_sum(aw);
  }
  const double t2 = pairwise_sum(w2), t4 = pairwise_sum(w4), tw = pairwise_sum(wt);
  auto kappa = [](double m2, double m4) { return m4 - 3.0 * m2 * m2; };
  const double value = kappa(t2 / tw, t4 / tw);
  std::vector<double> jk(nb);
  double mean = 0.0;
  for (int b = 0; b < nb; ++b) {
    jk[b] = kappa((t2 - w2[b]) / (tw - wt[b]), (t4 - w4[b]) / (tw - wt[b]));
    mean += jk[b];
  }
  mean /= nb;
  double var = 0.0;
  for (double v : jk) var += sqr(v - mean);
  return {value, std::sqrt(var * (nb - 1.0) / nb)};
}

// ---------------------------------------------------------------------------
// Streaming pairing tables: per-sample pairings against a fixed probe set
// plus log weights, without retaining the fields (memory stays O(n * probes)
// at any cutoff).
// ---------------------------------------------------------------------------

struct PairingTable {
  int n = 0;
  double ess = 0.0;
  std::vector<double> log_weights;
  std::vector<std::vector<double>> columns;  // columns[j][i] = <phi_i, probe_j>
};

inline PairingTable build_pairing_table(const GaussianSampler& sampler,
                                        const DensityContext* density,
                                        const std::vector<const SphereField*>& probes, int n) {
  require(n >= 100, "build_pairing_table: need at least 100 samples");
  PairingTable t;
  t.n = n;
  t.log_weights.resize(n);
  t.columns.assign(probes.size(), std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    const SphereField phi = sampler.sample(i);
    t.log_weights[i] = density ? density->log_density(phi) : 0.0;
    for (std::size_t j = 0; j < probes.size(); ++j)
      t.columns[j][i] = pair_field(phi, *probes[j]);
  }
  t.ess = effective_sample_size(t.log_weights);
  if (t.ess < kEssFloor)
    throw NumericalHealthError("build_pairing_table: effective sample size " +
                               std::to_string(t.ess) + " below floor");
  return t;
}

// Characteristic functional from a pairing table column pair (im_col < 0 for
// a real argument).
inline CharFuncEstimate char_estimate(const PairingTable& t, int re_col, int im_col = -1) {
  double max_lw = t.log_weights[0];
  for (double lw : t.log_weights) max_lw = std::max(max_lw, lw);
  const auto rb = detail::RatioBlocks::accumulate(
      t.n,
      [&](int i) {
        const double w = std::exp(t.log_weights[i] - max_lw);
        const double re_arg = t.columns[re_col][i];
        const double damp = im_col >= 0 ? std::exp(-t.columns[im_col][i]) : 1.0;
        return cplx(w * damp * std::cos(re_arg), w * damp * std::sin(re_arg));
      },
      [&](int i) { return std::exp(t.log_weights[i] - max_lw); });
  return rb.estimate(t.n, t.ess);
}

// Weighted fourth cumulant of a pairing column: m4 - 3 m2^2 with jackknife.
inline MeanErr fourth_cumulant_from_table(const PairingTable& t, int col) {
  double max_lw = t.log_weights[0];
  for (double lw : t.log_weights) max_lw = std::max(max_lw, lw);
  const int nb = std::min(kJackknifeBlocks, t.n);
  std::vector<double> w2(nb, 0.0), w4(nb, 0.0), wt(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(b) * t.n / nb);
    const int hi = static_cast<int>(static_cast<long long>(b + 1) * t.n / nb);
    std::vector<double> a2(hi - lo), a4(hi - lo), aw(hi - lo);
    for (int i = lo; i < hi; ++i) {
      const double w = std::exp(t.log_weights[i] - max_lw);
      const double x = t.columns[col][i];
      a2[i - lo] = w * x * x;
      a4[i - lo] = w * x * x * x * x;
      aw[i - lo] = w;
    }
    w2[b] = pairwise_sum(a2);
    w4[b] = pairwise_sum(a4);
    wt[b] = pairwise_sum(aw);
  }
  const double t2 = pairwise_sum(w2), t4 = pairwise_sum(w4), tw = pairwise_sum(wt);
  auto kappa = [](double m2, double m4) { return m4 - 3.0 * m2 * m2; };
  const double value = kappa(t2 / tw, t4 / tw);
  std::vector<double> jk(nb);
  double mean = 0.0;
  for (int b = 0; b < nb; ++b) {
    jk[b] = kappa((t2 - w2[b]) / (tw - wt[b]), (t4 - w4[b]) / (tw - wt[b]));
    mean += jk[b];
  }
  mean /= nb;
  double var = 0.0;
  for (double v : jk) var += sqr(v - mean);
  return {value, std::sqrt(var * (nb - 1.0) / nb)};
}

// Weighted second moment E_mu[phi(probe)^2] from a pairing table column.
inline MeanErr second_moment_from_table(const PairingTable& t, int col) {
  double max_lw = t.log_weights[0];
  for (double lw : t.log_weights) max_lw = std::max(max_lw, lw);
  const auto rb = detail::RatioBlocks::accumulate(
      t.n,
      [&](int i) {
        return cplx(std::exp(t.log_weights[i] - max_lw) * sqr(t.columns[col][i]), 0.0);
      },
      [&](int i) { return std::exp(t.log_weights[i] - max_lw); });
  const auto est = rb.estimate(t.n, t.ess);
  return {est.value.real(), est.stderr_combined};
}

// Difference of two characteristic functionals on common random numbers:
// jackknife of (S[col_a] - S[col_b]) directly, so shared noise cancels.
inline MeanErr char_difference_estimate(const PairingTable& t, int col_a, int col_b) {
  double max_lw = t.log_weights[0];
  for (double lw : t.log_weights) max_lw = std::max(max_lw, lw);
  const int nb = std::min(kJackknifeBlocks, t.n);
  std::vector<double> are(nb, 0.0), aim(nb, 0.0), bre(nb, 0.0), bim(nb, 0.0), den(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(b) * t.n / nb);
    const int hi = static_cast<int>(static_cast<long long>(b + 1) * t.n / nb);
    std::vector<double> v0(hi - lo), v1(hi - lo), v2(hi - lo), v3(hi - lo), v4(hi - lo);
    for (int i = lo; i < hi; ++i) {
      const double w = std::exp(t.log_weights[i] - max_lw);
      v0[i - lo] = w * std::cos(t.columns[col_a][i]);
      v1[i - lo] = w * std::sin(t.columns[col_a][i]);
      v2[i - lo] = w * std::cos(t.columns[col_b][i]);
      v3[i - lo] = w * std::sin(t.columns[col_b][i]);
      v4[i - lo] = w;
    }
    are[b] = pairwise_sum(v0);
    aim[b] = pairwise_sum(v1);
    bre[b] = pairwise_sum(v2);
    bim[b] = pairwise_sum(v3);
    den[b] = pairwise_sum(v4);
  }
  const double ta_re = pairwise_sum(are), ta_im = pairwise_sum(aim);
  const double tb_re = pairwise_sum(bre), tb_im = pairwise_sum(bim);
  const double tden = pairwise_sum(den);
  const double value = std::abs(cplx(ta_re - tb_re, ta_im - tb_im)) / tden;
  std::vector<double> jk(nb);
  double mean = 0.0;
  for (int b = 0; b < nb; ++b) {
    const double d = tden - den[b];
    jk[b] = std::abs(cplx((ta_re - are[b]) - (tb_re - bre[b]),
                          (ta_im - aim[b]) - (tb_im - bim[b]))) / d;
    mean += jk[b];
  }
  mean /= nb;
  double var = 0.0;
  for (double v : jk) var += sqr(v - mean);
  return {value, std::sqrt(var * (nb - 1.0) / nb)};
}

// ---------------------------------------------------------------------------
// Text export: header line then one whitespace-separated coefficient line per
// field. Doubles carry 17 significant digits, so a parse-back is bit-exact.
// ---------------------------------------------------------------------------

inline void write_ensemble(std::ostream& os, const WeightedEnsemble& e) {
  os << "# d=" << e.dim << " L=" << e.cutoff << " seed=" << e.seed << " k=" << e.index_k
     << " n=" << e.fields.size() << "\n";
  char buf[40];
  for (const auto& f : e.fields) {
    for (std::size_t i = 0; i < f.coeffs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f.coeffs[i]);
      os << (i ? " " : "") << buf;
    }
    os << "\n";
  }
}

inline WeightedEnsemble read_ensemble(std::istream& is) {
  WeightedEnsemble e;
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line.rfind("# ", 0) == 0,
          "read_ensemble: missing header");
  std::size_t n = 0;
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      require(eq != std::string::npos, "read_ensemble: malformed header token");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "d") e.dim = std::stoi(val);
      else if (key == "L") e.cutoff = std::stoi(val);
      else if (key == "seed") e.seed = std::stoull(val);
      else if (key == "k") e.index_k = std::stoi(val);
      else if (key == "n") n = std::stoul(val);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    require(static_cast<bool>(std::getline(is, line)), "read_ensemble: truncated file");
    SphereField f(e.dim, e.cutoff);
    std::istringstream ls(line);
    for (double& c : f.coeffs)
      require(static_cast<bool>(ls >> c), "read_ensemble: short coefficient line");
    e.fields.push_back(std::move(f));
    e.log_weights.push_back(0.0);
  }
  return e;
}

}  // namespace qftlab
