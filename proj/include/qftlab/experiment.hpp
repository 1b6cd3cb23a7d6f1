#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qftlab/scaling.hpp"

namespace qftlab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict configuration parsing: unknown keys are rejected with a path.
// ---------------------------------------------------------------------------

namespace cfg {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(path + "/" + key + ": unknown key");
}

inline double number(const json& j, const std::string& key, const std::string& path,
                     bool required = true, double fallback = 0.0) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(path + "/" + key + ": missing");
    return fallback;
  }
  if (!j[key].is_number()) throw ConfigError(path + "/" + key + ": expected a number");
  return j[key].get<double>();
}

inline PlanePoint point(const json& j, int dim, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ConfigError(path + ": expected an array of " + std::to_string(dim) + " numbers");
  PlanePoint p{0.0, 0.0};
  for (int i = 0; i < dim; ++i) {
    if (!j[i].is_number()) throw ConfigError(path + ": expected numbers");
    p[i] = j[i].get<double>();
  }
  return p;
}

inline PlaneTestFunction test_function(const json& j, int dim, const std::string& path) {
  check_keys(j, {"terms"}, path);
  if (!j.contains("terms") || !j["terms"].is_array())
    throw ConfigError(path + "/terms: expected an array");
  std::vector<GaussianTerm> terms;
  int idx = 0;
  for (const auto& t : j["terms"]) {
    const std::string tp = path + "/terms[" + std::to_string(idx++) + "]";
    check_keys(t, {"amplitude", "center", "width"}, tp);
    GaussianTerm g;
    g.amplitude = number(t, "amplitude", tp);
    g.width = number(t, "width", tp);
    if (g.width <= 0.0) throw ConfigError(tp + "/width: must be positive");
    if (!t.contains("center")) throw ConfigError(tp + "/center: missing");
    g.center = point(t["center"], dim, tp + "/center");
    terms.push_back(g);
  }
  return PlaneTestFunction(dim, std::move(terms));
}

inline InteractionSpec interaction(const json& j, const std::string& path) {
  check_keys(j, {"type", "epsilon", "exponent", "coeffs"}, path);
  const std::string type = j.value("type", "none");
  if (type == "none") return no_interaction();
  if (type == "bounded_cos") {
    const double eps = number(j, "epsilon", path);
    if (eps <= 0.0) throw ConfigError(path + "/epsilon: must be positive");
    return bounded_cos(eps);
  }
  if (type == "regularized_power") {
    const double p = number(j, "exponent", path, false, 4.0);
    if (p < 1.0 || p != std::floor(p))
      throw ConfigError(path + "/exponent: must be a positive integer");
    return regularized_power(static_cast<int>(p));
  }
  if (type == "wick") {
    if (!j.contains("coeffs") || !j["coeffs"].is_array())
      throw ConfigError(path + "/coeffs: expected an array");
    std::vector<double> coeffs;
    for (const auto& c : j["coeffs"]) coeffs.push_back(c.get<double>());
    return wick_polynomial(std::move(coeffs));
  }
  throw ConfigError(path + "/type: unknown interaction '" + type + "'");
}

}  // namespace cfg

struct ExperimentConfig {
  ScalingExperiment experiment;
  SuiteOptions options;
  json raw;

  // Command-specific knobs.
  int sample_count = 200;
  int charfunc_probes = 10;
  int charfunc_probe_cutoff = 8;
  double charfunc_probe_scale = 0.5;
  std::vector<int> mollifier_k_list{1, 2, 4, 8};
  int mollifier_width_cutoff = 256;
  int mollifier_probe_cutoff = 1;
  int wick_degree = 4;
  int wick_k = 1;
};

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg_out;
  cfg_out.raw = j;
  cfg::check_keys(j,
                  {"dimension", "mass", "seed", "mc_samples", "k_list", "cutoff",
                   "interaction", "corpus", "invariance", "rp", "analyticity", "scan",
                   "sample", "charfunc", "mollifier", "wick"},
                  "config");
  ScalingExperiment& e = cfg_out.experiment;
  const double dim = cfg::number(j, "dimension", "config", false, 2.0);
  if (dim != 1.0 && dim != 2.0) throw ConfigError("config/dimension: must be 1 or 2");
  e.dim = static_cast<int>(dim);
  e.mass = cfg::number(j, "mass", "config", false, 1.0);
  if (e.mass <= 0.0) throw ConfigError("config/mass: must be positive");
  const double seed = cfg::number(j, "seed", "config", false, 0.0);
  if (seed < 0.0) throw ConfigError("config/seed: must be nonnegative");
  e.seed = static_cast<std::uint64_t>(seed);
  e.mc_samples = static_cast<int>(cfg::number(j, "mc_samples", "config", false, 10000.0));
  if (e.mc_samples < 100) throw ConfigError("config/mc_samples: need at least 100");

  if (j.contains("k_list")) {
    if (!j["k_list"].is_array()) throw ConfigError("config/k_list: expected an array");
    e.k_list.clear();
    for (const auto& v : j["k_list"]) e.k_list.push_back(v.get<double>());
  }
  if (j.contains("cutoff")) {
    cfg::check_keys(j["cutoff"], {"base", "per_k"}, "config/cutoff");
    e.cutoff_base = static_cast<int>(cfg::number(j["cutoff"], "base", "config/cutoff", false, 16.0));
    e.cutoff_per_k =
        static_cast<int>(cfg::number(j["cutoff"], "per_k", "config/cutoff", false, 8.0));
  }
  if (j.contains("interaction"))
    e.interaction = cfg::interaction(j["interaction"], "config/interaction");
  if (j.contains("corpus")) {
    if (!j["corpus"].is_array()) throw ConfigError("config/corpus: expected an array");
    int idx = 0;
    for (const auto& c : j["corpus"]) {
      const std::string path = "config/corpus[" + std::to_string(idx++) + "]";
      cfg::check_keys(c, {"id", "terms"}, path);
      if (!c.contains("id") || !c["id"].is_string())
        throw ConfigError(path + "/id: expected a string");
      json fn;
      fn["terms"] = c["terms"];
      e.corpus.emplace_back(c["id"].get<std::string>(),
                            cfg::test_function(fn, e.dim, path));
    }
  }

  SuiteOptions& opt = cfg_out.options;
  if (j.contains("invariance")) {
    const auto& inv = j["invariance"];
    cfg::check_keys(inv, {"translation", "rotation_angle"}, "config/invariance");
    if (inv.contains("translation"))
      opt.translation = cfg::point(inv["translation"], e.dim, "config/invariance/translation");
    opt.rotation_angle =
        cfg::number(inv, "rotation_angle", "config/invariance", false, 0.25 * kPi);
  }
  if (j.contains("rp")) {
    const auto& rp = j["rp"];
    cfg::check_keys(rp, {"bumps"}, "config/rp");
    if (rp.contains("bumps")) {
      int idx = 0;
      for (const auto& b : rp["bumps"]) {
        const std::string path = "config/rp/bumps[" + std::to_string(idx++) + "]";
        cfg::check_keys(b, {"id", "terms"}, path);
        json fn;
        fn["terms"] = b["terms"];
        opt.rp_bumps.emplace_back(b.value("id", "bump" + std::to_string(idx)),
                                  cfg::test_function(fn, e.dim, path));
      }
    }
  }
  if (j.contains("analyticity")) {
    const auto& an = j["analyticity"];
    cfg::check_keys(an, {"corpus"}, "config/analyticity");
    if (an.contains("corpus")) {
      int idx = 0;
      for (const auto& c : an["corpus"]) {
        const std::string path = "config/analyticity/corpus[" + std::to_string(idx++) + "]";
        cfg::check_keys(c, {"id", "real", "imag"}, path);
        ComplexTestFunction cf;
        cf.id = c.value("id", "c" + std::to_string(idx));
        cf.real_part = c.contains("real")
                           ? cfg::test_function(c["real"], e.dim, path + "/real")
                           : PlaneTestFunction(e.dim, {});
        cf.imag_part = c.contains("imag")
                           ? cfg::test_function(c["imag"], e.dim, path + "/imag")
                           : PlaneTestFunction(e.dim, {});
        opt.complex_corpus.push_back(std::move(cf));
      }
    }
  }
  if (j.contains("scan")) {
    const auto& sc = j["scan"];
    cfg::check_keys(sc, {"t_list", "h", "ramp_fraction"}, "config/scan");
    if (sc.contains("t_list")) {
      opt.scan_t_list.clear();
      for (const auto& t : sc["t_list"]) opt.scan_t_list.push_back(t.get<double>());
    }
    if (sc.contains("h")) {
      cfg::check_keys(sc["h"], {"amplitude", "center", "width"}, "config/scan/h");
      opt.scan_h.amplitude = cfg::number(sc["h"], "amplitude", "config/scan/h", false, 1.0);
      opt.scan_h.width = cfg::number(sc["h"], "width", "config/scan/h", false, 0.5);
      if (sc["h"].contains("center"))
        opt.scan_h.center = cfg::point(sc["h"]["center"], 1, "config/scan/h/center");
    }
    opt.scan_ramp_fraction = cfg::number(sc, "ramp_fraction", "config/scan", false, 0.1);
  }
  if (j.contains("sample")) {
    cfg::check_keys(j["sample"], {"count"}, "config/sample");
    cfg_out.sample_count =
        static_cast<int>(cfg::number(j["sample"], "count", "config/sample", false, 200.0));
  }
  if (j.contains("charfunc")) {
    cfg::check_keys(j["charfunc"], {"probes", "probe_cutoff", "probe_scale"}, "config/charfunc");
    cfg_out.charfunc_probes =
        static_cast<int>(cfg::number(j["charfunc"], "probes", "config/charfunc", false, 10.0));
    cfg_out.charfunc_probe_cutoff = static_cast<int>(
        cfg::number(j["charfunc"], "probe_cutoff", "config/charfunc", false, 8.0));
    cfg_out.charfunc_probe_scale =
        cfg::number(j["charfunc"], "probe_scale", "config/charfunc", false, 0.5);
  }
  if (j.contains("mollifier")) {
    const auto& mo = j["mollifier"];
    cfg::check_keys(mo, {"k_list", "width_cutoff", "probe_cutoff"}, "config/mollifier");
    if (mo.contains("k_list")) {
      cfg_out.mollifier_k_list.clear();
      for (const auto& v : mo["k_list"])
        cfg_out.mollifier_k_list.push_back(v.get<int>());
    }
    cfg_out.mollifier_width_cutoff = static_cast<int>(
        cfg::number(mo, "width_cutoff", "config/mollifier", false, 256.0));
    cfg_out.mollifier_probe_cutoff =
        static_cast<int>(cfg::number(mo, "probe_cutoff", "config/mollifier", false, 1.0));
  }
  if (j.contains("wick")) {
    cfg::check_keys(j["wick"], {"degree", "k"}, "config/wick");
    cfg_out.wick_degree =
        static_cast<int>(cfg::number(j["wick"], "degree", "config/wick", false, 4.0));
    cfg_out.wick_k = static_cast<int>(cfg::number(j["wick"], "k", "config/wick", false, 1.0));
  }
  return cfg_out;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config parse error: ") + ex.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Report emission: JSON-lines records plus a per-suite CSV summary, with all
// floating point at 17 significant digits so re-parsing is bit-exact.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string row_to_json(const ReportRow& r) {
  std::string s = "{\"suite\":\"" + r.suite + "\",\"k\":" + format_double(r.k) +
                  ",\"f_id\":\"" + r.f_id + "\",\"re\":" + format_double(r.re) +
                  ",\"im\":" + format_double(r.im) + ",\"stderr\":" + format_double(r.stderr_) +
                  ",\"deterministic\":" + (r.deterministic ? "true" : "false") +
                  ",\"pass\":" + (r.pass ? "true" : "false") + "}";
  return s;
}

inline void emit_report(const std::vector<ReportRow>& rows, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string jsonl_path = out_dir + "/report.jsonl";
  std::ofstream jsonl(jsonl_path, std::ios::binary);
  if (!jsonl) throw std::runtime_error("emit_report: cannot write " + jsonl_path);
  for (const auto& r : rows) jsonl << row_to_json(r) << "\n";
  jsonl.close();

  struct SuiteAgg {
    int records = 0;
    int failed = 0;
    double worst_fail = 0.0;
  };
  std::map<std::string, SuiteAgg> agg;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!agg.count(r.suite)) order.push_back(r.suite);
    auto& a = agg[r.suite];
    ++a.records;
    if (!r.pass) {
      ++a.failed;
      a.worst_fail = std::max(std::abs(r.re), a.worst_fail);
    }
  }
  const std::string csv_path = out_dir + "/summary.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("emit_report: cannot write " + csv_path);
  csv << "suite,records,failed,pass,worst_fail_value\n";
  for (const auto& suite : order) {
    const auto& a = agg[suite];
    csv << suite << "," << a.records << "," << a.failed << ","
        << (a.failed == 0 ? "PASS" : "FAIL") << "," << format_double(a.worst_fail) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Suite runners
// ---------------------------------------------------------------------------

inline std::vector<ReportRow> run_sample(const ExperimentConfig& cfg, const std::string& out_dir) {
  const ScalingExperiment& e = cfg.experiment;
  e.validate();
  std::vector<ReportRow> rows;
  for (double k : e.k_list) {
    const ScaleContext ctx(e, k);
    const int n = std::max(100, cfg.sample_count);
    const auto ensemble =
        build_weighted_ensemble(ctx.sampler, ctx.density ? &*ctx.density : nullptr,
                                std::max(1, static_cast<int>(k)), n);
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const std::string path = out_dir + "/ensemble_k" + format_double(k) + ".txt";
    std::ofstream os(path, std::ios::binary);
    write_ensemble(os, ensemble);
    if (!ensemble.is_gaussian()) {
      std::ofstream ws(out_dir + "/log_weights_k" + format_double(k) + ".txt",
                       std::ios::binary);
      for (double lw : ensemble.log_weights) ws << format_double(lw) << "\n";
    }
    rows.push_back(ReportRow{"sample", k, "ess",
                             effective_sample_size(ensemble.log_weights), 0.0, 0.0, true,
                             true});
  }
  return rows;
}

// Sphere-side Gaussian characteristic functionals: Monte Carlo against the
// closed form on seeded band-limited probes.
inline std::vector<ReportRow> run_charfunc(const ExperimentConfig& cfg) {
  const ScalingExperiment& e = cfg.experiment;
  const int L = e.cutoff_base;
  const auto cov = free_covariance(e.mass, e.dim, L);
  const auto handle = CovarianceHandle::spectral(cov);
  const GaussianSampler sampler{handle, e.seed};
  const SphereGrid grid = default_grid(e.dim, L);
  std::optional<DensityContext> density;
  if (!e.is_gaussian())
    density = make_density_context(e.interaction, 1, e.dim, L, grid, &cov);
  const auto ensemble =
      build_weighted_ensemble(sampler, density ? &*density : nullptr, 1, e.mc_samples);

  std::vector<ReportRow> rows;
  int mismatches = 0;
  for (int p = 0; p < cfg.charfunc_probes; ++p) {
    SphereField f(e.dim, L);
    GaussianStream gs(e.seed ^ 0x9e3779b97f4a7c15ull, 1000000 + p);
    for (int i = 0; i < num_coeffs(e.dim, std::min(L, cfg.charfunc_probe_cutoff)); ++i)
      f.coeffs[i] = cfg.charfunc_probe_scale * gs.next();
    const auto est = char_functional(ensemble, f);
    ReportRow row{"charfunc", 1.0, "probe" + std::to_string(p), est.value.real(),
                  est.value.imag(), est.stderr_combined, false, true};
    if (e.is_gaussian()) {
      const cplx exact = gaussian_char_exact(handle, f);
      row.pass = std::abs(est.value - exact) <= 3.0 * est.stderr_combined;
      if (!row.pass) ++mismatches;
      rows.push_back(row);
      rows.push_back(ReportRow{"charfunc_exact", 1.0, "probe" + std::to_string(p),
                               exact.real(), exact.imag(), 0.0, true, true});
    } else {
      rows.push_back(row);
    }
  }
  if (e.is_gaussian()) {
    // Multiple-testing allowance: at most one 3-sigma outlier in ten.
    rows.push_back(ReportRow{"charfunc_agreement", 1.0, "summary",
                             static_cast<double>(cfg.charfunc_probes - mismatches),
                             static_cast<double>(cfg.charfunc_probes), 0.0, true,
                             mismatches <= std::max(1, cfg.charfunc_probes / 10)});
  }
  return rows;
}

inline std::vector<ReportRow> run_scaling_limit(const ExperimentConfig& cfg) {
  const auto rep = convergence_report(cfg.experiment, cfg.options);
  return rep.rows;
}

inline std::vector<ReportRow> run_invariance(const ExperimentConfig& cfg) {
  SuiteOptions opt = cfg.options;
  opt.run_rp = false;
  opt.run_analyticity = false;
  opt.run_scan = false;
  const auto rep = convergence_report(cfg.experiment, opt);
  std::vector<ReportRow> rows;
  for (const auto& r : rep.rows)
    if (r.suite.rfind("invariance", 0) == 0 || r.suite == "commutator_norm" ||
        r.suite == "charfunc" || r.suite == "moments")
      rows.push_back(r);
  return rows;
}

inline std::vector<ReportRow> run_rp_check(const ExperimentConfig& cfg) {
  const ScalingExperiment& e = cfg.experiment;
  e.validate();
  std::vector<ReportRow> rows;

  // Sphere-side free field: operator-level and functional-level RP with
  // ambient bumps in the positive-x0 hemisphere.
  {
    const int L = e.cutoff_base;
    const SphereGrid grid = default_grid(e.dim, L);
    const auto cov = free_covariance(e.mass, e.dim, L);
    const double sigma = 0.2;
    std::vector<SphereField> bumps;
    for (double a : {0.08, 0.16, 0.24, 0.32}) {
      std::array<double, 3> c{std::cos(a), 0.0, 0.0};
      if (e.dim == 2) {
        c[1] = std::sin(a) * std::cos(7.0 * a);
        c[2] = std::sin(a) * std::sin(7.0 * a);
      } else {
        c[1] = std::sin(a);
      }
      std::vector<double> samples(grid.nodes.size());
      for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
        const auto& x = grid.nodes[i];
        const double d2 = sqr(x[0] - c[0]) + sqr(x[1] - c[1]) + sqr(x[2] - c[2]);
        samples[i] = std::exp(-d2 / (2.0 * sigma * sigma));
      }
      bumps.push_back(analyze(samples, grid, L));
    }
    auto s_fn = [&](const SphereField& h) {
      return cplx(std::exp(-0.5 * cov.quadratic_form(h)), 0.0);
    };
    const auto gram =
        rp_gram_check(s_fn, bumps, [](const SphereField& h) { return theta_sphere(h); });
    rows.push_back(ReportRow{"rp_sphere_gram", 0.0, "free_field", gram.min_eigenvalue,
                             gram.matrix_norm, 0.0, true, gram.pass});
    const auto op = rp_operator_check(cov, bumps, ReflectionTheta{e.dim});
    double worst = 0.0;
    bool pass = op.pass;
    for (double v : op.pairings) worst = std::min(worst, v);
    rows.push_back(
        ReportRow{"rp_sphere_operator", 0.0, "free_field", worst, 0.0, 0.0, true, pass});
  }

  // Scaled functionals S^k over plane-side positive-time bumps.
  if (!cfg.options.rp_bumps.empty()) {
    for (double k : e.k_list) {
      const ScaleContext ctx(e, k);
      std::vector<PlaneTestFunction> bumps;
      for (const auto& [id, f] : cfg.options.rp_bumps) bumps.push_back(f);
      const auto rp = rp_limit_check(ctx, bumps, e.mc_samples);
      rows.push_back(ReportRow{"rp_min_eigenvalue", k, "bumps", rp.min_eigenvalue,
                               rp.matrix_norm, rp.stderr_min, rp.deterministic, rp.pass});
    }
  }
  return rows;
}

inline std::vector<ReportRow> run_wick_check(const ExperimentConfig& cfg) {
  const ScalingExperiment& e = cfg.experiment;
  const int L = e.cutoff_base;
  const int k = cfg.wick_k;
  const SphereGrid grid = default_grid(e.dim, L);
  const auto cov = free_covariance(e.mass, e.dim, L);
  const auto a = build_mollifier(k, e.dim, L);
  const double c = c_k_diagonal(cov, a);
  std::vector<ReportRow> rows;

  // Low-order expansions at a probe value, then the Hermite-type recursion
  // :x^{n+1}: = x :x^n: - n c :x^{n-1}: up to the configured degree.
  const std::vector<double> probe{0.83};
  const double f = probe[0];
  const double w2 = wick_power(probe, 2, c)[0];
  const double w3 = wick_power(probe, 3, c)[0];
  const double w4 = wick_power(probe, 4, c)[0];
  rows.push_back(ReportRow{"wick_algebra", static_cast<double>(k), "n=2",
                           std::abs(w2 - (f * f - c)), 0.0, 0.0, true,
                           w2 == f * f - c});
  rows.push_back(ReportRow{"wick_algebra", static_cast<double>(k), "n=3",
                           std::abs(w3 - (f * f * f - 3.0 * c * f)), 0.0, 0.0, true,
                           std::abs(w3 - (f * f * f - 3.0 * c * f)) <= 1e-15});
  const double w4_expect = std::pow(f, 4) - 6.0 * c * f * f + 3.0 * c * c;
  rows.push_back(ReportRow{"wick_algebra", static_cast<double>(k), "n=4",
                           std::abs(w4 - w4_expect), 0.0, 0.0, true,
                           std::abs(w4 - w4_expect) <= 1e-15});
  {
    double rec_worst = 0.0;
    for (int n = 1; n < std::min(cfg.wick_degree, 12); ++n) {
      const double wn = wick_power(probe, n, c)[0];
      const double wn_minus = wick_power(probe, n - 1, c)[0];
      const double wn_plus = wick_power(probe, n + 1, c)[0];
      rec_worst = std::max(rec_worst, std::abs(wn_plus - (f * wn - n * c * wn_minus)));
    }
    rows.push_back(ReportRow{"wick_recursion", static_cast<double>(k),
                             "n<=" + std::to_string(cfg.wick_degree), rec_worst, 0.0, 0.0,
                             true, rec_worst <= 1e-12});
  }

  // Monte Carlo centering and pair covariance at two grid points.
  const GaussianSampler sampler{CovarianceHandle::spectral(cov), e.seed};
  const std::array<double, 3> x = grid.nodes[grid.nodes.size() / 3];
  const std::array<double, 3> y = grid.nodes[2 * grid.nodes.size() / 3];
  double cos_gamma = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
  cos_gamma = std::min(1.0, std::max(-1.0, cos_gamma));
  const double kernel_xy = c_k_kernel(cov, a, std::acos(cos_gamma));
  const int n = e.mc_samples;
  std::vector<double> sq_x(n), prod(n);
  BasisEvaluator eval(e.dim, L);
  for (int i = 0; i < n; ++i) {
    const SphereField phi = mollify(a, sampler.sample(i));
    const double vx = synthesize_at(phi, x, eval);
    const double vy = synthesize_at(phi, y, eval);
    sq_x[i] = vx * vx - c;
    prod[i] = (vx * vx - c) * (vy * vy - c);
  }
  auto mean_err = [n](const std::vector<double>& v) {
    const double mean = pairwise_sum(v) / n;
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = sqr(v[i] - mean);
    return MeanErr{mean, std::sqrt(pairwise_sum(dev) / (static_cast<double>(n) * (n - 1)))};
  };
  const auto centering = mean_err(sq_x);
  rows.push_back(ReportRow{"wick_centering", static_cast<double>(k), "x", centering.mean,
                           0.0, centering.err, false,
                           std::abs(centering.mean) <= 3.0 * centering.err});
  const auto pair_cov = mean_err(prod);
  const double expect = 2.0 * sqr(kernel_xy);
  rows.push_back(ReportRow{"wick_pair_covariance", static_cast<double>(k), "xy",
                           pair_cov.mean, expect, pair_cov.err, false,
                           std::abs(pair_cov.mean - expect) <= 3.0 * pair_cov.err});
  return rows;
}

inline std::vector<ReportRow> run_mollifier_info(const ExperimentConfig& cfg) {
  const ScalingExperiment& e = cfg.experiment;
  std::vector<ReportRow> rows;
  const SphereGrid grid = default_grid(e.dim, e.cutoff_base);

  double prev_kw = std::numeric_limits<double>::infinity();
  bool width_trend = true;
  for (int k : cfg.mollifier_k_list) {
    const auto wide = build_mollifier(k, e.dim, cfg.mollifier_width_cutoff);
    const auto diag = mollifier_diagnostics(wide);
    const double trace_residual =
        std::abs(diag.trace - sphere_volume(e.dim) * diag.diagonal) / diag.trace;
    rows.push_back(ReportRow{"mollifier_trace_identity", static_cast<double>(k), "",
                             trace_residual, diag.trace, 0.0, true,
                             trace_residual <= 1e-10});
    rows.push_back(ReportRow{"mollifier_k_width", static_cast<double>(k), "",
                             k * diag.effective_width, diag.effective_width, 0.0, true,
                             k * diag.effective_width < prev_kw});
    width_trend = width_trend && (k * diag.effective_width < prev_kw);
    prev_kw = k * diag.effective_width;

    // Exact isometry commutation at the working cutoff.
    const auto a = build_mollifier(k, e.dim, e.cutoff_base);
    SphereField f(e.dim, e.cutoff_base);
    GaussianStream gs(e.seed + k, 0);
    for (double& v : f.coeffs) v = gs.next();
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      GaussianStream rg(e.seed + 31 * k + trial, 1);
      const Rotation rot =
          rotation_g_k({rg.next(), e.dim == 2 ? rg.next() : 0.0}, 1.0 + std::abs(rg.next()),
                       e.dim);
      const SphereField lhs = mollify(a, apply_isometry(f, rot, grid));
      const SphereField rhs = apply_isometry(mollify(a, f), rot, grid);
      worst = std::max(worst, (lhs - rhs).norm() / f.norm());
    }
    rows.push_back(ReportRow{"mollifier_commutation", static_cast<double>(k), "", worst,
                             0.0, 0.0, true, worst <= 1e-10});
  }

  // Strong convergence on low-degree probes at the largest k.
  const int k_conv = cfg.mollifier_k_list.back();
  const auto a = build_mollifier(k_conv, e.dim, e.cutoff_base);
  SphereField probe(e.dim, e.cutoff_base);
  GaussianStream gs(e.seed + 99, 0);
  for (int i = 0; i < num_coeffs(e.dim, cfg.mollifier_probe_cutoff); ++i)
    probe.coeffs[i] = gs.next();
  const double residual = (mollify(a, probe) - probe).norm() / probe.norm();
  rows.push_back(ReportRow{"mollifier_strong_convergence", static_cast<double>(k_conv), "",
                           residual, 0.0, 0.0, true, residual <= 1e-3});
  return rows;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_command(const std::string& command, const std::string& config_path,
                       const std::string& out_dir, long long seed_override, int threads) {
  try {
    ExperimentConfig cfg_data = load_config(config_path);
    if (seed_override >= 0)
      cfg_data.experiment.seed = static_cast<std::uint64_t>(seed_override);
    if (threads <= 0) {
      threads = 1;
      if (const char* env = std::getenv("QFTLAB_THREADS")) threads = std::max(1, std::atoi(env));
    }
    cfg_data.options.threads = threads;  // worker count; never affects results
    std::vector<ReportRow> rows;
    if (command == "sample") {
      rows = run_sample(cfg_data, out_dir);
    } else if (command == "charfunc") {
      rows = run_charfunc(cfg_data);
    } else if (command == "scaling-limit") {
      rows = run_scaling_limit(cfg_data);
    } else if (command == "rp-check") {
      rows = run_rp_check(cfg_data);
    } else if (command == "invariance") {
      rows = run_invariance(cfg_data);
    } else if (command == "wick-check") {
      rows = run_wick_check(cfg_data);
    } else if (command == "mollifier-info") {
      rows = run_mollifier_info(cfg_data);
    } else {
      throw ConfigError("unknown command: " + command);
    }
    emit_report(rows, out_dir);
    for (const auto& r : rows)
      if (!r.pass) return 1;
    return 0;
  } catch (const ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const std::invalid_argument& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const NumericalHealthError& ex) {
    std::fprintf(stderr, "numerical health abort: %s\n", ex.what());
    return 3;
  }
}

}  // namespace qftlab
