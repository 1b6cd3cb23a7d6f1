#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "qftlab/conformal.hpp"
#include "qftlab/covariance.hpp"
#include "qftlab/interaction.hpp"
#include "qftlab/sampler.hpp"

namespace qftlab {

// ---------------------------------------------------------------------------
// Experiment definition
// ---------------------------------------------------------------------------

struct ScalingExperiment {
  int dim = 2;
  double mass = 1.0;
  std::uint64_t seed = 0;
  int mc_samples = 10000;
  std::vector<double> k_list{1.0, 2.0, 4.0};
  int cutoff_base = 16;
  int cutoff_per_k = 8;  // L(k) = max(base, per_k * k); truncation outpaces scaling
  InteractionSpec interaction;
  std::vector<std::pair<std::string, PlaneTestFunction>> corpus;

  int cutoff_at(double k) const {
    return std::max(cutoff_base, static_cast<int>(std::ceil(cutoff_per_k * k)));
  }

  void validate() const {
    require(dim == 1 || dim == 2, "experiment: dimension must be 1 or 2");
    require(mass > 0.0, "experiment: mass must be positive");
    require(!k_list.empty(), "experiment: k_list empty");
    for (std::size_t i = 1; i < k_list.size(); ++i)
      require(k_list[i] > k_list[i - 1], "experiment: k_list must be strictly increasing");
    require(cutoff_per_k >= 4, "experiment: cutoff growth must satisfy L(k) >= 4k");
    for (const auto& [id, f] : corpus)
      require(f.dim == dim, "experiment: corpus dimension mismatch for " + id);
  }

  bool is_gaussian() const { return interaction.kind == InteractionKind::None; }
};

// Per-k machinery: grid, lift pipeline, scaled covariance, sampler, density.
struct ScaleContext {
  double k = 1.0;
  int cutoff = 0;
  ConformalPipeline pipe;
  std::shared_ptr<const ScaledCovariance> covariance;
  CovarianceHandle handle;
  std::optional<DensityContext> density;
  GaussianSampler sampler;
  bool gaussian = true;

  ScaleContext(const ScalingExperiment& e, double k_value)
      : k(k_value),
        cutoff(e.cutoff_at(k_value)),
        pipe(e.dim, e.cutoff_at(k_value), k_value),
        covariance(std::make_shared<ScaledCovariance>(
            scaled_covariance(k_value, e.mass, e.dim, e.cutoff_at(k_value), *pipe.grid))),
        handle(CovarianceHandle::scaled(covariance)),
        sampler{handle, e.seed},
        gaussian(e.is_gaussian()) {
    if (!gaussian)
      density = make_density_context(e.interaction, std::max(1, static_cast<int>(k_value)),
                                     e.dim, cutoff, *pipe.grid);
  }
};

// ---------------------------------------------------------------------------
// Report rows: one record per measurement, either Monte Carlo (stderr) or
// deterministic (exact evaluation, stderr = 0).
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string suite;
  double k = 0.0;
  std::string f_id;
  double re = 0.0;
  double im = 0.0;
  double stderr_ = 0.0;
  bool deterministic = false;
  bool pass = true;
};

struct ConvergenceReport {
  std::vector<ReportRow> rows;
  bool all_pass = true;

  void add(ReportRow row) {
    all_pass = all_pass && row.pass;
    rows.push_back(std::move(row));
  }
};

// ---------------------------------------------------------------------------
// Individual diagnostics
// ---------------------------------------------------------------------------

// S^k(f) = S_{mu_k}(U_alpha U_beta_k f), exactly for the Gaussian case.
inline CharFuncEstimate scaled_char_functional(const ScaleContext& ctx,
                                               const PlaneTestFunction& f, int mc_samples) {
  const SphereField u = lift_to_sphere(f, ctx.pipe).field;
  if (ctx.gaussian) {
    CharFuncEstimate est;
    est.value = std::exp(-0.5 * ctx.covariance->quadratic_form(u));
    est.stderr_combined = 0.0;
    est.n_samples = 0;
    return est;
  }
  const auto table = build_pairing_table(ctx.sampler, &*ctx.density, {&u}, mc_samples);
  return char_estimate(table, 0);
}

// Relative residual of || C_{S,k}^{1/2} U f || vs || (Delta_E + m^2)^{-1/2} f ||.
inline double free_field_identity_residual(double k, const PlaneTestFunction& f, double mass,
                                           int dim, int cutoff) {
  if (f.terms.empty()) return 0.0;
  const ConformalPipeline pipe(dim, cutoff, k);
  const ScaledCovariance cov = scaled_covariance(k, mass, dim, cutoff, *pipe.grid);
  const SphereField u = lift_to_sphere(f, pipe).field;
  const double left = std::sqrt(cov.quadratic_form(u));
  const double right = std::sqrt(green_form(f, mass));
  return std::abs(left - right) / right;
}

// L^2(S^d) commutator || T*_{S,k} U f - U T*_E f ||.
inline double commutator_norm(const ScaleContext& ctx, const PlaneTestFunction& f,
                              const PlanePoint& translation) {
  if (translation[0] == 0.0 && (ctx.pipe.dim == 1 || translation[1] == 0.0)) return 0.0;
  const SphereField u = lift_to_sphere(f, ctx.pipe).field;
  const SphereField rotated =
      apply_isometry(u, rotation_g_k(translation, ctx.k, ctx.pipe.dim), *ctx.pipe.grid);
  const SphereField translated = lift_to_sphere(translate(f, translation), ctx.pipe).field;
  return (rotated - translated).norm();
}

struct InvarianceErrors {
  MeanErr translation_a;  // |S(g_k-rotated lift) - S(lift of translated f)|
  MeanErr translation_b;  // |S(g_k-rotated lift) - S(lift)|
  MeanErr rotation;       // |S^k(f o R^{-1}) - S^k(f)|
  bool deterministic = false;
};

// O(d) element used for the rotation-invariance probe: a plane rotation for
// d = 2, the point reflection for d = 1.
inline PlaneTestFunction apply_plane_o_d(const PlaneTestFunction& f, int dim, double angle) {
  if (dim == 2) return rotate_plane(f, plane_rotation(angle));
  return reflect_time(f);
}

inline InvarianceErrors invariance_errors(const ScaleContext& ctx, const PlaneTestFunction& f,
                                          const PlanePoint& translation, double rotation_angle,
                                          int mc_samples) {
  const int dim = ctx.pipe.dim;
  const bool zero_shift = translation[0] == 0.0 && (dim == 1 || translation[1] == 0.0);
  const SphereField u = lift_to_sphere(f, ctx.pipe).field;
  // The identity rotation needs no resampling; this keeps the T = 0 errors
  // exactly zero rather than quadrature-roundoff small.
  const SphereField u_rot =
      zero_shift ? u
                 : apply_isometry(u, rotation_g_k(translation, ctx.k, dim), *ctx.pipe.grid);
  const SphereField u_trans =
      zero_shift ? u : lift_to_sphere(translate(f, translation), ctx.pipe).field;
  const SphereField u_od = lift_to_sphere(apply_plane_o_d(f, dim, rotation_angle), ctx.pipe).field;

  InvarianceErrors out;
  if (ctx.gaussian) {
    auto s_of = [&](const SphereField& v) {
      return std::exp(-0.5 * ctx.covariance->quadratic_form(v));
    };
    out.translation_a = {std::abs(s_of(u_rot) - s_of(u_trans)), 0.0};
    out.translation_b = {std::abs(s_of(u_rot) - s_of(u)), 0.0};
    out.rotation = {std::abs(s_of(u_od) - s_of(u)), 0.0};
    out.deterministic = true;
    return out;
  }
  const auto table =
      build_pairing_table(ctx.sampler, &*ctx.density, {&u_rot, &u_trans, &u, &u_od}, mc_samples);
  out.translation_a = char_difference_estimate(table, 0, 1);
  out.translation_b = char_difference_estimate(table, 0, 2);
  out.rotation = char_difference_estimate(table, 3, 2);
  return out;
}

struct EquicontinuityResult {
  MeanErr empirical;   // |S^k(f) - S^k(g)|
  double bound = 0.0;  // K1 sqrt(2 (1 - exp(-K3^2 ||f - g||^2 / 2)))
};

// The L1-over-L2 domination chain gives |S(f) - S(g)| <= K1 ||e^{i phi(Uf)} -
// e^{i phi(Ug)}||_{L2(mu_C)}, whose Gaussian closed form is the square root
// below.
inline double equicontinuity_bound(double k1_constant, double k3_sq, double dist2) {
  return k1_constant * std::sqrt(2.0 * (1.0 - std::exp(-0.5 * k3_sq * dist2)));
}

inline EquicontinuityResult equicontinuity_modulus(const ScaleContext& ctx,
                                                   const PlaneTestFunction& f,
                                                   const PlaneTestFunction& g, double k1_constant,
                                                   int mc_samples) {
  const double dist2 = l2_norm2(f - g);
  const double k3_sq = ctx.covariance->operator_norm();
  EquicontinuityResult out;
  out.bound = equicontinuity_bound(k1_constant, k3_sq, dist2);
  const SphereField uf = lift_to_sphere(f, ctx.pipe).field;
  const SphereField ug = lift_to_sphere(g, ctx.pipe).field;
  if (ctx.gaussian) {
    auto s_of = [&](const SphereField& v) {
      return std::exp(-0.5 * ctx.covariance->quadratic_form(v));
    };
    out.empirical = {std::abs(s_of(uf) - s_of(ug)), 0.0};
    return out;
  }
  const auto table = build_pairing_table(ctx.sampler, &*ctx.density, {&uf, &ug}, mc_samples);
  out.empirical = char_difference_estimate(table, 0, 1);
  return out;
}

// ---------------------------------------------------------------------------
// Reflection positivity along the scaling limit
// ---------------------------------------------------------------------------

struct RpLimitResult {
  double min_eigenvalue = 0.0;
  double matrix_norm = 0.0;
  double stderr_min = 0.0;  // jackknife-propagated (Monte Carlo mode)
  bool deterministic = false;
  bool pass = false;
};

// Monte Carlo RP Gram from n^2 consecutive pairing-table columns (column
// first_col + i * n + j holds the lift of f_j - Theta f_i), with a jackknife
// of the minimum eigenvalue across blocks; passes at -3 sigma.
inline RpLimitResult rp_gram_from_table(const PairingTable& table, int first_col, int n) {
  RpLimitResult out;
  const int nb = std::min(kJackknifeBlocks, table.n);
  double max_lw = table.log_weights[0];
  for (double lw : table.log_weights) max_lw = std::max(max_lw, lw);
  const int cols = n * n;
  std::vector<std::vector<double>> bre(cols, std::vector<double>(nb, 0.0));
  std::vector<std::vector<double>> bim(cols, std::vector<double>(nb, 0.0));
  std::vector<double> bden(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(b) * table.n / nb);
    const int hi = static_cast<int>(static_cast<long long>(b + 1) * table.n / nb);
    std::vector<double> wbuf(hi - lo), rbuf(hi - lo), ibuf(hi - lo);
    for (int i = lo; i < hi; ++i) wbuf[i - lo] = std::exp(table.log_weights[i] - max_lw);
    bden[b] = pairwise_sum(wbuf);
    for (int c = 0; c < cols; ++c) {
      const auto& col = table.columns[first_col + c];
      for (int i = lo; i < hi; ++i) {
        rbuf[i - lo] = wbuf[i - lo] * std::cos(col[i]);
        ibuf[i - lo] = wbuf[i - lo] * std::sin(col[i]);
      }
      bre[c][b] = pairwise_sum(rbuf);
      bim[c][b] = pairwise_sum(ibuf);
    }
  }
  const double tot_den = pairwise_sum(bden);
  std::vector<double> tot_re(cols), tot_im(cols);
  for (int c = 0; c < cols; ++c) {
    tot_re[c] = pairwise_sum(bre[c]);
    tot_im[c] = pairwise_sum(bim[c]);
  }
  auto gram_min_eig = [&](int drop_block, double* norm_out) {
    Eigen::MatrixXcd gram(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int c = i * n + j;
        double re = tot_re[c], im = tot_im[c], den = tot_den;
        if (drop_block >= 0) {
          re -= bre[c][drop_block];
          im -= bim[c][drop_block];
          den -= bden[drop_block];
        }
        gram(j, i) = cplx(re / den, im / den);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (gram + gram.adjoint()),
                                                       Eigen::EigenvaluesOnly);
    if (norm_out) *norm_out = es.eigenvalues().cwiseAbs().maxCoeff();
    return es.eigenvalues().minCoeff();
  };
  out.min_eigenvalue = gram_min_eig(-1, &out.matrix_norm);
  std::vector<double> jk(nb);
  double mean = 0.0;
  for (int b = 0; b < nb; ++b) {
    jk[b] = gram_min_eig(b, nullptr);
    mean += jk[b];
  }
  mean /= nb;
  double var = 0.0;
  for (double v : jk) var += sqr(v - mean);
  out.stderr_min = std::sqrt(var * (nb - 1.0) / nb);
  out.pass = out.min_eigenvalue >= -3.0 * out.stderr_min;
  return out;
}

// Lifts of the n^2 reflection pairs f_j - Theta f_i, ordered i-major to match
// rp_gram_from_table.
inline std::vector<SphereField> rp_pair_lifts(const ScaleContext& ctx,
                                              const std::vector<PlaneTestFunction>& bumps) {
  const int n = static_cast<int>(bumps.size());
  std::vector<SphereField> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const PlaneTestFunction theta_i = reflect_time(bumps[i]);
    for (int j = 0; j < n; ++j)
      out.push_back(lift_to_sphere(bumps[j] - theta_i, ctx.pipe).field);
  }
  return out;
}

inline void rp_check_margins(const ScaleContext& ctx,
                             const std::vector<PlaneTestFunction>& bumps) {
  double margin_needed = 0.0;
  if (!ctx.gaussian) {
    margin_needed = mollifier_effective_width(ctx.density->mollifier) / ctx.k;
    // The reflection-positivity argument wants F(0) = 0. A constant offset
    // only rescales the density and cancels in the normalized measure, so an
    // offset is flagged rather than rejected.
    if (ctx.density->spec.f && std::abs(ctx.density->spec.f(0.0)) > 0.0)
      std::fprintf(stderr,
                   "qftlab warning: RP suite density '%s' has F(0) = %g != 0; the "
                   "constant cancels after normalization\n",
                   ctx.density->spec.name.c_str(), ctx.density->spec.f(0.0));
  }
  for (const auto& f : bumps)
    require(positive_time_margin(f) >= margin_needed,
            "rp check: bump support margin violated");
}

inline RpLimitResult rp_gram_exact(const ScaleContext& ctx,
                                   const std::vector<SphereField>& pair_lifts, int n,
                                   double gaussian_tol) {
  RpLimitResult out;
  Eigen::MatrixXcd gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      gram(j, i) = std::exp(
          -0.5 * ctx.covariance->quadratic_form(pair_lifts[static_cast<std::size_t>(i) * n + j]));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (gram + gram.adjoint()),
                                                     Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.matrix_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  out.deterministic = true;
  out.pass = out.min_eigenvalue >= -gaussian_tol * out.matrix_norm;
  return out;
}

// Gram matrix of S^k over positive-time bumps against the time reflection.
// Gaussian mode evaluates exactly; Monte Carlo mode propagates a jackknife
// error into the smallest eigenvalue and passes at -3 sigma.
inline RpLimitResult rp_limit_check(const ScaleContext& ctx,
                                    const std::vector<PlaneTestFunction>& bumps,
                                    int mc_samples, double gaussian_tol = 1e-8) {
  require(!bumps.empty(), "rp_limit_check: empty bump family");
  rp_check_margins(ctx, bumps);
  const int n = static_cast<int>(bumps.size());
  const std::vector<SphereField> pair_lifts = rp_pair_lifts(ctx, bumps);
  if (ctx.gaussian) return rp_gram_exact(ctx, pair_lifts, n, gaussian_tol);
  std::vector<const SphereField*> probes;
  probes.reserve(pair_lifts.size());
  for (const auto& u : pair_lifts) probes.push_back(&u);
  const auto table = build_pairing_table(ctx.sampler, &*ctx.density, probes, mc_samples);
  return rp_gram_from_table(table, 0, n);
}

// ---------------------------------------------------------------------------
// Analyticity / regularity bound
// ---------------------------------------------------------------------------

struct ComplexTestFunction {
  std::string id;
  PlaneTestFunction real_part;
  PlaneTestFunction imag_part;
};

struct AnalyticityResult {
  double k2_constant = 0.0;       // fitted growth constant
  double max_violation = 0.0;     // max |S| / (K1 exp(K2 ||f||^2))
  std::vector<ReportRow> rows;
  bool pass = false;
};

inline AnalyticityResult analyticity_bound_check(const ScaleContext& ctx,
                                                 const std::vector<ComplexTestFunction>& corpus,
                                                 double k1_constant, int mc_samples) {
  AnalyticityResult out;
  out.k2_constant = 0.5 * ctx.covariance->operator_norm() * 1.5;
  std::vector<SphereField> lifts;
  lifts.reserve(2 * corpus.size());
  for (const auto& c : corpus) {
    lifts.push_back(lift_to_sphere(c.real_part, ctx.pipe).field);
    lifts.push_back(c.imag_part.terms.empty()
                        ? SphereField(ctx.pipe.dim, ctx.cutoff)
                        : lift_to_sphere(c.imag_part, ctx.pipe).field);
  }
  std::optional<PairingTable> table;
  if (!ctx.gaussian) {
    std::vector<const SphereField*> probes;
    for (const auto& u : lifts) probes.push_back(&u);
    table = build_pairing_table(ctx.sampler, &*ctx.density, probes, mc_samples);
  }
  out.pass = true;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    cplx value;
    double se = 0.0;
    if (ctx.gaussian) {
      value = gaussian_char_exact(ctx.handle, lifts[2 * i], &lifts[2 * i + 1]);
    } else {
      const auto est = char_estimate(*table, static_cast<int>(2 * i), static_cast<int>(2 * i + 1));
      value = est.value;
      se = est.stderr_combined;
    }
    const double norm2 = l2_norm2(corpus[i].real_part) +
                         (corpus[i].imag_part.terms.empty() ? 0.0 : l2_norm2(corpus[i].imag_part));
    const double bound = k1_constant * std::exp(out.k2_constant * norm2);
    const double ratio = (std::abs(value) - 3.0 * se) / bound;
    out.max_violation = std::max(out.max_violation, ratio);
    ReportRow row;
    row.suite = "analyticity";
    row.k = ctx.k;
    row.f_id = corpus[i].id;
    row.re = std::abs(value);
    row.im = bound;
    row.stderr_ = se;
    row.deterministic = ctx.gaussian;
    row.pass = ratio <= 1.0;
    out.pass = out.pass && row.pass;
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small-t moment-condition scan
// ---------------------------------------------------------------------------

struct ScanPoint {
  double t = 0.0;
  MeanErr form_over_t;     // C(f_t, f_t) / t
  double plane_oracle = 0.0;
  bool deterministic = false;
};

inline std::vector<ScanPoint> small_t_scan(const ScaleContext& ctx, const GaussianTerm& h,
                                           const std::vector<double>& t_list,
                                           double ramp_fraction, int mc_samples) {
  require(ctx.pipe.dim == 2, "small_t_scan: the transverse bump needs d = 2");
  std::vector<ScanPoint> out;
  std::vector<SphereField> lifts;
  std::vector<TimeSlabFunction> slabs;
  for (double t : t_list) {
    TimeSlabFunction slab{t, ramp_fraction * t, h};
    slabs.push_back(slab);
    // No residual cap: the ramp is below grid scale at small t by design and
    // the quadratic form damps the unresolved tail.
    lifts.push_back(
        lift_scalar([&slab](const PlanePoint& y) { return slab.value(y); }, ctx.pipe,
                    slab.l2_norm2(), 0.0)
            .field);
  }
  std::optional<PairingTable> table;
  if (!ctx.gaussian) {
    std::vector<const SphereField*> probes;
    for (const auto& u : lifts) probes.push_back(&u);
    table = build_pairing_table(ctx.sampler, &*ctx.density, probes, mc_samples);
  }
  for (std::size_t i = 0; i < t_list.size(); ++i) {
    ScanPoint p;
    p.t = t_list[i];
    p.plane_oracle = slab_green_form(slabs[i], ctx.covariance->mass()) / p.t;
    if (ctx.gaussian) {
      p.form_over_t = {ctx.covariance->quadratic_form(lifts[i]) / p.t, 0.0};
      p.deterministic = true;
    } else {
      const auto sm = second_moment_from_table(*table, static_cast<int>(i));
      p.form_over_t = {sm.mean / p.t, sm.err / p.t};
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full pipeline: one report covering S^k values, Cauchy stabilization,
// invariance errors, RP, the free-field identity, analyticity bounds, the
// small-t scan, density moments, and the exploratory fourth cumulant.
// ---------------------------------------------------------------------------

struct SuiteOptions {
  PlanePoint translation{0.5, 0.0};
  double rotation_angle = 0.25 * kPi;
  std::vector<std::pair<std::string, PlaneTestFunction>> rp_bumps;
  std::vector<ComplexTestFunction> complex_corpus;
  std::vector<double> scan_t_list{0.4, 0.2, 0.1};
  GaussianTerm scan_h{1.0, {0.0, 0.0}, 0.5};
  double scan_ramp_fraction = 0.1;
  bool run_invariance = true;
  bool run_rp = true;
  bool run_analyticity = true;
  bool run_scan = true;
  int threads = 1;  // worker count for per-k tasks; never affects results
};

namespace detail {

// Everything one k contributes to the report; computed independently per k so
// the k-loop can run on a worker pool with index-ordered result slots.
struct KChunk {
  std::vector<ReportRow> rows;
  std::vector<CharFuncEstimate> s_values;  // per corpus function
  std::vector<MeanErr> err_a, err_b;
};

template <class Fn>
void run_indexed_tasks(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(threads, n); ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline ConvergenceReport convergence_report(const ScalingExperiment& e,
                                            const SuiteOptions& opt) {
  e.validate();
  ConvergenceReport rep;
  const std::size_t nf = e.corpus.size();
  std::vector<std::vector<CharFuncEstimate>> s_table(nf);  // [f][k]
  std::vector<std::vector<MeanErr>> err_a(nf), err_b(nf);

  std::vector<detail::KChunk> chunks(e.k_list.size());
  detail::run_indexed_tasks(static_cast<int>(e.k_list.size()), opt.threads, [&](int ki) {
    const double k = e.k_list[ki];
    detail::KChunk chunk;
    ConvergenceReport rep_k;
    const ScaleContext ctx(e, k);

    // All lifts this k needs, shared across suites; Monte Carlo estimates draw
    // on one pairing table so every functional sees common random numbers.
    std::vector<SphereField> lifts_u, lifts_rot, lifts_trans, lifts_od;
    for (const auto& [id, f] : e.corpus) {
      lifts_u.push_back(lift_to_sphere(f, ctx.pipe).field);
      if (opt.run_invariance) {
        lifts_rot.push_back(apply_isometry(
            lifts_u.back(), rotation_g_k(opt.translation, ctx.k, e.dim), *ctx.pipe.grid));
        lifts_trans.push_back(lift_to_sphere(translate(f, opt.translation), ctx.pipe).field);
        lifts_od.push_back(
            lift_to_sphere(apply_plane_o_d(f, e.dim, opt.rotation_angle), ctx.pipe).field);
      }
    }
    std::vector<PlaneTestFunction> rp_bump_fns;
    std::vector<SphereField> rp_lifts;
    const bool do_rp = opt.run_rp && !opt.rp_bumps.empty();
    if (do_rp) {
      for (const auto& [id, f] : opt.rp_bumps) rp_bump_fns.push_back(f);
      rp_check_margins(ctx, rp_bump_fns);
      rp_lifts = rp_pair_lifts(ctx, rp_bump_fns);
    }
    std::vector<SphereField> an_lifts;
    const bool do_an = opt.run_analyticity && !opt.complex_corpus.empty();
    if (do_an) {
      for (const auto& c : opt.complex_corpus) {
        an_lifts.push_back(lift_to_sphere(c.real_part, ctx.pipe).field);
        an_lifts.push_back(c.imag_part.terms.empty()
                               ? SphereField(e.dim, ctx.cutoff)
                               : lift_to_sphere(c.imag_part, ctx.pipe).field);
      }
    }
    std::vector<TimeSlabFunction> slabs;
    std::vector<SphereField> scan_lifts;
    const bool do_scan = opt.run_scan && e.dim == 2;
    if (do_scan) {
      for (double t : opt.scan_t_list) {
        TimeSlabFunction slab{t, opt.scan_ramp_fraction * t, opt.scan_h};
        slabs.push_back(slab);
        scan_lifts.push_back(lift_scalar(
                                 [&slab](const PlanePoint& y) { return slab.value(y); },
                                 ctx.pipe, slab.l2_norm2(), 0.0)
                                 .field);
      }
    }

    std::optional<PairingTable> table;
    int col_inv0 = -1, col_rp0 = -1, col_an0 = -1, col_scan0 = -1;
    if (!ctx.gaussian) {
      std::vector<const SphereField*> probes;
      for (const auto& u : lifts_u) probes.push_back(&u);
      if (opt.run_invariance) {
        col_inv0 = static_cast<int>(probes.size());
        for (std::size_t i = 0; i < nf; ++i) {
          probes.push_back(&lifts_rot[i]);
          probes.push_back(&lifts_trans[i]);
          probes.push_back(&lifts_od[i]);
        }
      }
      if (do_rp) {
        col_rp0 = static_cast<int>(probes.size());
        for (const auto& u : rp_lifts) probes.push_back(&u);
      }
      if (do_an) {
        col_an0 = static_cast<int>(probes.size());
        for (const auto& u : an_lifts) probes.push_back(&u);
      }
      if (do_scan) {
        col_scan0 = static_cast<int>(probes.size());
        for (const auto& u : scan_lifts) probes.push_back(&u);
      }
      table = build_pairing_table(ctx.sampler, &*ctx.density, probes, e.mc_samples);
    }

    // Density moments come straight from the table's log weights; the measured
    // constant K = max(K2, sqrt(K2)) / K1 feeds the modulus/analyticity bounds.
    double k1_constant = 1.0;
    if (!ctx.gaussian) {
      const int n = table->n;
      std::vector<double> rho(n), rho2(n);
      for (int i = 0; i < n; ++i) {
        rho[i] = std::exp(table->log_weights[i]);
        rho2[i] = rho[i] * rho[i];
      }
      auto mean_err = [n](const std::vector<double>& v) {
        const double mean = pairwise_sum(v) / n;
        std::vector<double> dev(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) dev[i] = sqr(v[i] - mean);
        return MeanErr{mean,
                       std::sqrt(pairwise_sum(dev) / (static_cast<double>(n) * (n - 1)))};
      };
      const MeanErr m1 = mean_err(rho), m2 = mean_err(rho2);
      k1_constant = std::max(m2.mean, std::sqrt(m2.mean)) / m1.mean;
      rep_k.add(ReportRow{"moments", k, "E[rho]", m1.mean, 0.0, m1.err, false, m1.mean > 0.0});
      rep_k.add(ReportRow{"moments", k, "E[rho^2]", m2.mean, 0.0, m2.err, false,
                          std::isfinite(m2.mean)});
    }

    auto s_exact = [&](const SphereField& v) {
      return std::exp(-0.5 * ctx.covariance->quadratic_form(v));
    };

    for (std::size_t i = 0; i < nf; ++i) {
      const auto& [id, f] = e.corpus[i];
      CharFuncEstimate est;
      if (ctx.gaussian) {
        est.value = s_exact(lifts_u[i]);
      } else {
        est = char_estimate(*table, static_cast<int>(i));
      }
      chunk.s_values.push_back(est);
      rep_k.add(ReportRow{"charfunc", k, id, est.value.real(), est.value.imag(),
                          est.stderr_combined, ctx.gaussian, true});

      const double residual = free_field_identity_residual(k, f, e.mass, e.dim, ctx.cutoff);
      rep_k.add(ReportRow{"free_field_identity", k, id, residual, 0.0, 0.0, true,
                          residual <= 2e-2});

      if (opt.run_invariance) {
        InvarianceErrors inv;
        if (ctx.gaussian) {
          inv.translation_a = {std::abs(s_exact(lifts_rot[i]) - s_exact(lifts_trans[i])), 0.0};
          inv.translation_b = {std::abs(s_exact(lifts_rot[i]) - s_exact(lifts_u[i])), 0.0};
          inv.rotation = {std::abs(s_exact(lifts_od[i]) - s_exact(lifts_u[i])), 0.0};
          inv.deterministic = true;
        } else {
          const int base = col_inv0 + 3 * static_cast<int>(i);
          inv.translation_a = char_difference_estimate(*table, base, base + 1);
          inv.translation_b = char_difference_estimate(*table, base, static_cast<int>(i));
          inv.rotation = char_difference_estimate(*table, base + 2, static_cast<int>(i));
        }
        chunk.err_a.push_back(inv.translation_a);
        chunk.err_b.push_back(inv.translation_b);
        rep_k.add(ReportRow{"invariance_translation_a", k, id, inv.translation_a.mean, 0.0,
                            inv.translation_a.err, inv.deterministic, true});
        rep_k.add(ReportRow{"invariance_translation_b", k, id, inv.translation_b.mean, 0.0,
                            inv.translation_b.err, inv.deterministic, true});
        const bool rot_pass = inv.deterministic
                                  ? inv.rotation.mean <= 1e-6
                                  : inv.rotation.mean <= 3.0 * inv.rotation.err + 1e-6;
        rep_k.add(ReportRow{"invariance_rotation", k, id, inv.rotation.mean, 0.0,
                            inv.rotation.err, inv.deterministic, rot_pass});
        rep_k.add(ReportRow{"commutator_norm", k, id, (lifts_rot[i] - lifts_trans[i]).norm(),
                            0.0, 0.0, true, true});
      }

      if (!ctx.gaussian) {
        const auto kappa = fourth_cumulant_from_table(*table, static_cast<int>(i));
        rep_k.add(ReportRow{"fourth_cumulant", k, id, kappa.mean, 0.0, kappa.err, false, true});
      } else {
        rep_k.add(ReportRow{"fourth_cumulant", k, id, 0.0, 0.0, 0.0, true, true});
      }
    }

    // Equicontinuity against the measured-constant bound on corpus pairs.
    const double k3_sq = ctx.covariance->operator_norm();
    for (std::size_t i = 0; i + 1 < nf; ++i) {
      const double dist2 = l2_norm2(e.corpus[i].second - e.corpus[i + 1].second);
      const double bound = equicontinuity_bound(k1_constant, k3_sq, dist2);
      MeanErr emp;
      if (ctx.gaussian)
        emp = {std::abs(s_exact(lifts_u[i]) - s_exact(lifts_u[i + 1])), 0.0};
      else
        emp = char_difference_estimate(*table, static_cast<int>(i), static_cast<int>(i + 1));
      const bool pass = emp.mean <= bound + 3.0 * emp.err + 1e-12;
      rep_k.add(ReportRow{"equicontinuity", k, e.corpus[i].first + "|" + e.corpus[i + 1].first,
                          emp.mean, bound, emp.err, emp.err == 0.0, pass});
    }

    if (do_rp) {
      const int n = static_cast<int>(rp_bump_fns.size());
      const RpLimitResult rp = ctx.gaussian ? rp_gram_exact(ctx, rp_lifts, n, 1e-8)
                                            : rp_gram_from_table(*table, col_rp0, n);
      rep_k.add(ReportRow{"rp_min_eigenvalue", k, "bumps", rp.min_eigenvalue, rp.matrix_norm,
                          rp.stderr_min, rp.deterministic, rp.pass});
    }

    if (do_an) {
      const double k2_constant = 0.5 * ctx.covariance->operator_norm() * 1.5;
      double max_violation = 0.0;
      for (std::size_t i = 0; i < opt.complex_corpus.size(); ++i) {
        const auto& c = opt.complex_corpus[i];
        cplx value;
        double se = 0.0;
        if (ctx.gaussian) {
          value = gaussian_char_exact(ctx.handle, an_lifts[2 * i], &an_lifts[2 * i + 1]);
        } else {
          const auto an_est = char_estimate(*table, col_an0 + static_cast<int>(2 * i),
                                            col_an0 + static_cast<int>(2 * i + 1));
          value = an_est.value;
          se = an_est.stderr_combined;
        }
        const double norm2 =
            l2_norm2(c.real_part) + (c.imag_part.terms.empty() ? 0.0 : l2_norm2(c.imag_part));
        const double bound = k1_constant * std::exp(k2_constant * norm2);
        const double ratio = (std::abs(value) - 3.0 * se) / bound;
        max_violation = std::max(max_violation, ratio);
        rep_k.add(ReportRow{"analyticity", k, c.id, std::abs(value), bound, se, ctx.gaussian,
                            ratio <= 1.0});
      }
      rep_k.add(ReportRow{"analyticity_max_violation", k, "corpus", max_violation,
                          k2_constant, 0.0, ctx.gaussian, max_violation <= 1.0});
    }

    if (do_scan) {
      double prev = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < slabs.size(); ++i) {
        const double t = opt.scan_t_list[i];
        MeanErr form;
        if (ctx.gaussian)
          form = {ctx.covariance->quadratic_form(scan_lifts[i]) / t, 0.0};
        else {
          const auto sm = second_moment_from_table(*table, col_scan0 + static_cast<int>(i));
          form = {sm.mean / t, sm.err / t};
        }
        const double oracle = slab_green_form(slabs[i], e.mass) / t;
        const bool pass = form.mean < prev + 3.0 * form.err;
        prev = form.mean;
        rep_k.add(ReportRow{"scan_form_over_t", k, "t=" + std::to_string(t), form.mean,
                            oracle, form.err, ctx.gaussian, pass});
      }
    }
    chunk.rows = std::move(rep_k.rows);
    chunks[ki] = std::move(chunk);
  });

  // Merge per-k results in schedule order.
  for (std::size_t ki = 0; ki < e.k_list.size(); ++ki) {
    for (auto& row : chunks[ki].rows) rep.add(std::move(row));
    for (std::size_t i = 0; i < nf; ++i) {
      s_table[i].push_back(chunks[ki].s_values[i]);
      if (opt.run_invariance) {
        err_a[i].push_back(chunks[ki].err_a[i]);
        err_b[i].push_back(chunks[ki].err_b[i]);
      }
    }
  }

  // Cauchy stabilization across consecutive k.
  for (std::size_t i = 0; i < nf; ++i) {
    double prev_diff = std::numeric_limits<double>::infinity();
    double prev_se = 0.0;
    for (std::size_t j = 0; j + 1 < e.k_list.size(); ++j) {
      const cplx d = s_table[i][j + 1].value - s_table[i][j].value;
      const double se = std::hypot(s_table[i][j].stderr_combined,
                                   s_table[i][j + 1].stderr_combined);
      const double diff = std::abs(d);
      const bool last = (j + 2 == e.k_list.size());
      bool pass = true;
      if (last)
        pass = diff <= prev_diff + 3.0 * (se + prev_se) || diff <= 3.0 * se + 2e-2;
      rep.add(ReportRow{"cauchy", e.k_list[j + 1], e.corpus[i].first, diff, 0.0, se,
                        se == 0.0, pass});
      prev_diff = diff;
      prev_se = se;
    }
  }

  // Translation-error trends along the k schedule.
  if (opt.run_invariance) {
    for (std::size_t i = 0; i < nf; ++i) {
      bool a_trend = true, b_trend = true;
      for (std::size_t j = 0; j + 1 < err_a[i].size(); ++j) {
        if (err_a[i][j + 1].mean >
            err_a[i][j].mean + 3.0 * (err_a[i][j].err + err_a[i][j + 1].err))
          a_trend = false;
        if (err_b[i][j + 1].mean >
            err_b[i][j].mean + 1.0 * (err_b[i][j].err + err_b[i][j + 1].err))
          b_trend = false;
      }
      rep.add(ReportRow{"invariance_trend_a", 0.0, e.corpus[i].first,
                        a_trend ? 1.0 : 0.0, 0.0, 0.0, true, a_trend});
      rep.add(ReportRow{"invariance_trend_b", 0.0, e.corpus[i].first,
                        b_trend ? 1.0 : 0.0, 0.0, 0.0, true, b_trend});
    }
  }

  return rep;
}

}  // namespace qftlab
