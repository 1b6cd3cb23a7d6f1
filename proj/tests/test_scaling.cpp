#include <doctest.h>

#include <cmath>

#include "qftlab/scaling.hpp"

using namespace qftlab;

namespace {

ScalingExperiment free_experiment(int dim = 2) {
  ScalingExperiment e;
  e.dim = dim;
  e.mass = 1.0;
  e.seed = 7;
  e.mc_samples = 2000;
  e.k_list = {1.0, 2.0};
  e.cutoff_base = 12;
  e.cutoff_per_k = 8;
  e.corpus = {{"u0", PlaneTestFunction::bump(dim, 1.0, {0.0, 0.0}, 1.0)},
              {"u1", PlaneTestFunction::bump(dim, 0.7, {0.3, dim == 2 ? -0.2 : 0.0}, 0.9)}};
  return e;
}

}  // namespace

TEST_CASE("experiment validation") {
  ScalingExperiment e = free_experiment();
  e.k_list = {2.0, 1.0};
  CHECK_THROWS_AS(e.validate(), std::invalid_argument);
  e = free_experiment();
  e.cutoff_per_k = 2;
  CHECK_THROWS_AS(e.validate(), std::invalid_argument);
  CHECK(free_experiment().cutoff_at(4.0) == 32);
  CHECK(free_experiment().cutoff_at(1.0) == 12);
}

TEST_CASE("scaled characteristic functional") {
  const ScalingExperiment e = free_experiment();
  const ScaleContext ctx(e, 2.0);

  const PlaneTestFunction zero(2, {});
  const auto unit = scaled_char_functional(ctx, zero, 0);
  CHECK(unit.value == cplx(1.0, 0.0));

  // Interaction-free: exact value matches the plane-side free-field form,
  // k-independently, in both dimensions.
  for (int dim : {1, 2}) {
    for (double k : {1.0, 2.0, 4.0}) {
      ScalingExperiment ek = free_experiment(dim);
      ek.cutoff_base = 16;
      const ScaleContext ck(ek, k);
      const auto& f = ek.corpus[0].second;
      const auto est = scaled_char_functional(ck, f, 0);
      const double plane = std::exp(-0.5 * green_form(f, ek.mass));
      CHECK(std::abs(est.value.real() - plane) <= 0.02 * plane);
      CHECK(est.value.imag() == 0.0);
      CHECK(est.stderr_combined == 0.0);
    }
  }
}

TEST_CASE("d=1 invariance errors shrink along the schedule") {
  const ScalingExperiment e = free_experiment(1);
  const auto& f = e.corpus[0].second;
  double prev = std::numeric_limits<double>::infinity();
  for (double k : {2.0, 4.0, 8.0}) {
    ScalingExperiment ek = free_experiment(1);
    ek.k_list = {k};
    const ScaleContext ctx(ek, k);
    const auto inv = invariance_errors(ctx, f, {0.5, 0.0}, 0.0, 0);
    CHECK(inv.translation_a.mean < prev);
    CHECK(inv.rotation.mean <= 1e-6);  // O(1) acts as the exact reflection
    prev = inv.translation_a.mean;
  }
}

TEST_CASE("free-field identity residual edge cases") {
  CHECK(free_field_identity_residual(1.0, PlaneTestFunction(2, {}), 1.0, 2, 12) == 0.0);
  const auto f = PlaneTestFunction::bump(2, 1.0, {0.0, 0.0}, 1.0);
  CHECK(free_field_identity_residual(1.0, f, 1.0, 2, 16) <= 2e-2);
}

TEST_CASE("commutator norm and the propagated translation bound") {
  const ScalingExperiment e = free_experiment();
  const auto& f = e.corpus[0].second;
  const PlanePoint t{1.0, 0.0};

  CHECK(commutator_norm(ScaleContext(e, 2.0), f, {0.0, 0.0}) == 0.0);

  double prev = std::numeric_limits<double>::infinity();
  for (double k : {2.0, 4.0, 8.0}) {
    ScalingExperiment ek = free_experiment();
    ek.k_list = {k};
    const ScaleContext ctx(ek, k);
    const double cn = commutator_norm(ctx, f, t);
    CHECK(cn < prev);
    prev = cn;

    // err_a <= K1 (1 - exp(-K2 cn)) with K1 = 1 and the measured
    // K2 = K3^2 (||u_rot|| + ||u_trans||) / 2.
    const SphereField u = lift_to_sphere(f, ctx.pipe).field;
    const SphereField u_rot =
        apply_isometry(u, rotation_g_k(t, k, 2), *ctx.pipe.grid);
    const SphereField u_trans = lift_to_sphere(translate(f, t), ctx.pipe).field;
    const auto inv = invariance_errors(ctx, f, t, 0.3, 0);
    const double k2 =
        0.5 * ctx.covariance->operator_norm() * (u_rot.norm() + u_trans.norm());
    CHECK(inv.translation_a.mean <= 1.0 - std::exp(-k2 * cn) + 1e-12);
  }
}

TEST_CASE("invariance errors vanish for the identity motion") {
  const ScalingExperiment e = free_experiment();
  const ScaleContext ctx(e, 2.0);
  const auto inv = invariance_errors(ctx, e.corpus[0].second, {0.0, 0.0}, 0.0, 0);
  CHECK(inv.translation_a.mean == 0.0);
  CHECK(inv.translation_b.mean == 0.0);
  CHECK(inv.rotation.mean == 0.0);

  // Monte Carlo mode on common random numbers is exactly zero as well.
  ScalingExperiment emc = free_experiment();
  emc.interaction = bounded_cos(0.1);
  const ScaleContext mc(emc, 2.0);
  const auto inv_mc = invariance_errors(mc, emc.corpus[0].second, {0.0, 0.0}, 0.0, 400);
  CHECK(inv_mc.translation_a.mean == 0.0);
  CHECK(inv_mc.rotation.mean == 0.0);
}

TEST_CASE("equicontinuity modulus") {
  const ScalingExperiment e = free_experiment();
  const ScaleContext ctx(e, 2.0);
  const auto same =
      equicontinuity_modulus(ctx, e.corpus[0].second, e.corpus[0].second, 1.0, 0);
  CHECK(same.empirical.mean == 0.0);
  CHECK(same.bound == 0.0);

  const auto pair =
      equicontinuity_modulus(ctx, e.corpus[0].second, e.corpus[1].second, 1.0, 0);
  CHECK(pair.empirical.mean <= pair.bound + 1e-12);
}

TEST_CASE("rp limit check structure") {
  ScalingExperiment e = free_experiment();
  e.cutoff_base = 32;
  const ScaleContext ctx(e, 2.0);

  const auto close_to_plane = PlaneTestFunction::bump(2, 1.0, {0.5, 0.0}, 0.3);
  CHECK_THROWS_AS(rp_limit_check(ctx, {close_to_plane}, 0), std::invalid_argument);

  const auto good = PlaneTestFunction::bump(2, 1.0, {2.0, 0.0}, 0.3);
  const auto single = rp_limit_check(ctx, {good}, 0);
  CHECK(single.deterministic);
  CHECK(single.min_eigenvalue > 0.0);
  CHECK(single.pass);
}

TEST_CASE("small-t scan decreases and tracks the plane oracle") {
  ScalingExperiment e = free_experiment();
  e.cutoff_base = 32;
  const ScaleContext ctx(e, 1.0);
  const GaussianTerm h{1.0, {0.0, 0.0}, 0.5};
  const auto pts = small_t_scan(ctx, h, {0.4, 0.2, 0.1}, 0.1, 0);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].form_over_t.mean > pts[1].form_over_t.mean);
  CHECK(pts[1].form_over_t.mean > pts[2].form_over_t.mean);
  CHECK(std::abs(pts[0].form_over_t.mean - pts[0].plane_oracle) <=
        0.02 * pts[0].plane_oracle);
}

TEST_CASE("analyticity bound holds with equality for imaginary arguments") {
  ScalingExperiment e = free_experiment();
  const ScaleContext ctx(e, 1.0);

  std::vector<ComplexTestFunction> corpus;
  corpus.push_back({"real", e.corpus[0].second, PlaneTestFunction(2, {})});
  corpus.push_back({"imag", PlaneTestFunction(2, {}),
                    PlaneTestFunction::bump(2, 0.8, {0.1, 0.0}, 1.0)});
  const auto res = analyticity_bound_check(ctx, corpus, 1.0, 0);
  CHECK(res.pass);
  CHECK(res.max_violation <= 1.0);
  // Real arguments keep |S| <= 1.
  CHECK(res.rows[0].re <= 1.0);
  // Purely imaginary arguments grow but stay below the fitted bound.
  CHECK(res.rows[1].re > 1.0);
  CHECK(res.rows[1].re <= res.rows[1].im);
}

TEST_CASE("convergence report runs and is reproducible") {
  ScalingExperiment e = free_experiment();
  SuiteOptions opt;
  opt.rp_bumps = {{"p0", PlaneTestFunction::bump(2, 1.0, {2.0, 0.0}, 0.3)},
                  {"p1", PlaneTestFunction::bump(2, 1.0, {2.4, 0.3}, 0.3)}};
  opt.complex_corpus = {{"c0", e.corpus[0].second, e.corpus[1].second}};
  e.cutoff_base = 24;

  const auto rep1 = convergence_report(e, opt);
  const auto rep2 = convergence_report(e, opt);
  REQUIRE(rep1.rows.size() == rep2.rows.size());
  for (std::size_t i = 0; i < rep1.rows.size(); ++i) {
    CHECK(rep1.rows[i].re == rep2.rows[i].re);
    CHECK(rep1.rows[i].im == rep2.rows[i].im);
    CHECK(rep1.rows[i].stderr_ == rep2.rows[i].stderr_);
    CHECK(rep1.rows[i].pass == rep2.rows[i].pass);
  }
  CHECK(rep1.all_pass);

  // Thread count must not change a single bit of the report.
  SuiteOptions threaded = opt;
  threaded.threads = 3;
  const auto rep3 = convergence_report(e, threaded);
  REQUIRE(rep3.rows.size() == rep1.rows.size());
  for (std::size_t i = 0; i < rep1.rows.size(); ++i) {
    CHECK(rep3.rows[i].re == rep1.rows[i].re);
    CHECK(rep3.rows[i].stderr_ == rep1.rows[i].stderr_);
  }

  // Monte Carlo mode: reproducible and healthy on a small interacting run.
  ScalingExperiment emc = e;
  emc.interaction = bounded_cos(0.1);
  emc.mc_samples = 400;
  emc.cutoff_base = 12;
  SuiteOptions mc_opt = opt;
  mc_opt.run_scan = false;
  mc_opt.rp_bumps.clear();
  mc_opt.complex_corpus.clear();
  const auto mc1 = convergence_report(emc, mc_opt);
  const auto mc2 = convergence_report(emc, mc_opt);
  REQUIRE(mc1.rows.size() == mc2.rows.size());
  for (std::size_t i = 0; i < mc1.rows.size(); ++i)
    CHECK(mc1.rows[i].re == mc2.rows[i].re);
}
