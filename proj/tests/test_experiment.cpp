#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qftlab/experiment.hpp"

using namespace qftlab;

namespace {

json minimal_config() {
  json j;
  j["dimension"] = 2;
  j["mass"] = 1.0;
  j["seed"] = 11;
  j["mc_samples"] = 400;
  j["k_list"] = {1.0, 2.0};
  j["cutoff"] = {{"base", 10}, {"per_k", 8}};
  j["interaction"] = {{"type", "none"}};
  j["corpus"] = json::array(
      {{{"id", "b0"},
        {"terms", json::array({{{"amplitude", 1.0}, {"center", {0.0, 0.0}}, {"width", 1.0}}})}}});
  return j;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing accepts the minimal document") {
  const auto cfg = parse_config(minimal_config());
  CHECK(cfg.experiment.dim == 2);
  CHECK(cfg.experiment.corpus.size() == 1);
  CHECK(cfg.experiment.k_list.size() == 2);
}

TEST_CASE("config parsing rejects unknown keys with a pointer") {
  json j = minimal_config();
  j["unexpected"] = 1;
  try {
    parse_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    CHECK(std::string(ex.what()).find("unexpected") != std::string::npos);
  }

  j = minimal_config();
  j["corpus"][0]["terms"][0]["sigma"] = 2.0;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("config parsing rejects invalid values") {
  json j = minimal_config();
  j["mass"] = -1.0;
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = minimal_config();
  j["dimension"] = 3;
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = minimal_config();
  j["interaction"] = {{"type", "quartic_banana"}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = minimal_config();
  j["corpus"][0]["terms"][0]["width"] = 0.0;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("report serialization round-trips bit-exactly") {
  std::vector<ReportRow> rows;
  rows.push_back(ReportRow{"suite_a", 1.0, "f0", 0.123456789012345678, -1e-17, 3.5e-3, false, true});
  rows.push_back(ReportRow{"suite_a", 2.0, "f1", kPi, std::exp(1.0), 0.0, true, true});
  const std::string dir = "/tmp/qftlab_test_report";
  emit_report(rows, dir);
  std::ifstream in(dir + "/report.jsonl");
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    REQUIRE(i < rows.size());
    const auto re_pos = line.find("\"re\":");
    const auto im_pos = line.find(",\"im\":");
    const double re = std::strtod(line.c_str() + re_pos + 5, nullptr);
    const double im = std::strtod(line.c_str() + im_pos + 6, nullptr);
    CHECK(re == rows[i].re);
    CHECK(im == rows[i].im);
    ++i;
  }
  CHECK(i == rows.size());
}

TEST_CASE("empty report produces headers only") {
  const std::string dir = "/tmp/qftlab_test_empty";
  emit_report({}, dir);
  CHECK(slurp(dir + "/report.jsonl").empty());
  CHECK(slurp(dir + "/summary.csv") == "suite,records,failed,pass,worst_fail_value\n");
}

TEST_CASE("run_command end to end with exit codes") {
  const std::string dir = "/tmp/qftlab_test_run";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/ok.json");
    out << minimal_config().dump(2);
  }
  CHECK(run_command("scaling-limit", dir + "/ok.json", dir + "/out", -1, 1) == 0);
  CHECK(std::filesystem::exists(dir + "/out/report.jsonl"));
  CHECK(std::filesystem::exists(dir + "/out/summary.csv"));

  // Identical config and seed produce identical bytes.
  CHECK(run_command("scaling-limit", dir + "/ok.json", dir + "/out2", -1, 1) == 0);
  CHECK(slurp(dir + "/out/report.jsonl") == slurp(dir + "/out2/report.jsonl"));

  // Unknown command and malformed configs.
  CHECK(run_command("frobnicate", dir + "/ok.json", dir + "/out", -1, 1) == 2);
  {
    json bad = minimal_config();
    bad["mass"] = -2.0;
    std::ofstream out(dir + "/bad.json");
    out << bad.dump(2);
  }
  CHECK(run_command("scaling-limit", dir + "/bad.json", dir + "/out", -1, 1) == 2);

  // Numerical-health abort: at k = 8 the mollifier barely smooths, so a
  // violently oscillating density collapses the effective sample size.
  {
    json harsh = minimal_config();
    harsh["interaction"] = {{"type", "bounded_cos"}, {"epsilon", 40.0}};
    harsh["k_list"] = {8.0};
    harsh["cutoff"] = {{"base", 10}, {"per_k", 4}};
    harsh["sample"] = {{"count", 200}};
    std::ofstream out(dir + "/harsh.json");
    out << harsh.dump(2);
  }
  CHECK(run_command("sample", dir + "/harsh.json", dir + "/out", -1, 1) == 3);
}

TEST_CASE("report row count matches the configured measurement counts") {
  json j = minimal_config();
  j["corpus"].push_back(
      {{"id", "b1"},
       {"terms", json::array({{{"amplitude", 0.5}, {"center", {0.2, 0.1}}, {"width", 0.8}}})}});
  const auto cfg = parse_config(j);
  const auto rows = run_scaling_limit(cfg);
  const std::size_t nf = 2, nk = 2, nt = 3;
  // Per k: nf charfunc + nf residual + 3 nf invariance + nf commutator +
  // nf cumulant + (nf - 1) equicontinuity + nt scan rows; then (nk - 1) nf
  // cauchy rows and 2 nf trend rows.
  const std::size_t expected =
      nk * (nf + nf + 3 * nf + nf + nf + (nf - 1) + nt) + (nk - 1) * nf + 2 * nf;
  CHECK(rows.size() == expected);
}
