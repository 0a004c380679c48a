#include <doctest.h>

#include "contactflow/cli.hpp"
#include "contactflow/rng.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace contactflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string config_error_message(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) return e.what();
    return std::string("wrong kind: ") + e.what();
  }
  return "no error";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("contactflow_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A verify run small enough for a unit test.
ExperimentConfig small_verify(const fs::path& dir) {
  ExperimentConfig c;
  c.experiment = "verify";
  c.output_dir = dir.string();
  c.verify.contact_samples = 500;
  c.verify.semigroup_samples = 500;
  c.verify.box_samples = 20000;
  c.verify.roof_samples = 1000;
  c.verify.cone_rays = 200;
  c.verify.charts = 3;
  c.verify.chart_samples = 50;
  return c;
}

// The example map written as two exact pieces by hand.
const char* kF0Pieces = R"({
  "experiment": "verify",
  "flow": {"map": "affine", "tau_minus": 1,
    "pieces": [
      {"domain": [["0", "0"], ["1", "0"], ["0", "1"]], "matrix": ["1", "1", "1/2", "3/2"], "offset": ["0", "0"]},
      {"domain": [["1", "0"], ["1", "1"], ["0", "1"]], "matrix": [1, 1, 0.5, 1.5], "offset": [0, "-1/2"]}
    ]}
})";

}  // namespace

TEST_CASE("empty config takes every default") {
  CHECK(parse_config(json::object()) == ExperimentConfig{});
  CHECK(to_json(ExperimentConfig{})["flow"]["map"] == "f0");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(config_error_message({{"flow", {{"tua_minus", 1.0}}}}).find("'flow.tua_minus': unknown key") !=
        std::string::npos);
  CHECK(config_error_message({{"sede", 3}}).find("'sede'") != std::string::npos);
  CHECK(config_error_message({{"correlate", {{"psi1", {{"centre", {0, 0, 0}}}}}}}).find("correlate.psi1.centre") !=
        std::string::npos);
  CHECK(config_error_message(json::parse(R"({"flow": {"map": "affine", "pieces": [{"domain": [], "matrix": [1,0,0,1],
        "offset": [0,0], "shift": 1}]}})"))
            .find("flow.pieces[0].shift") != std::string::npos);
}

TEST_CASE("type and value errors name the key") {
  CHECK(config_error_message({{"seed", "one"}}).find("'seed'") != std::string::npos);
  CHECK(config_error_message({{"seed", -1}}).find("'seed'") != std::string::npos);
  CHECK(config_error_message({{"flow", {{"map", "g1"}}}}).find("'flow.map'") != std::string::npos);
  CHECK(config_error_message({{"flow", {{"tau_minus", 0}}}}).find("'flow.tau_minus'") != std::string::npos);
  CHECK(config_error_message({{"flow", {{"epsilon", 0.1}}}}).find("'flow.epsilon'") != std::string::npos);
  CHECK(config_error_message({{"ulam", {{"cells", {24, 24}}}}}).find("'ulam.cells'") != std::string::npos);
  CHECK(config_error_message({{"verify", {{"boxes", 2.5}}}}).find("'verify.boxes'") != std::string::npos);
  CHECK(config_error_message({{"experiment", "plot"}}).find("'experiment'") != std::string::npos);
  CHECK(config_error_message({{"experiment", "complexity"}, {"flow", {{"map", "perturbed"}, {"epsilon", 0.02}}}})
            .find("'complexity.method'") != std::string::npos);
  CHECK(config_error_message(json::parse(R"({"flow": {"map": "affine", "pieces": [{"domain": [["1/0", "0"]]}]}})"))
            .find("flow.pieces[0].domain[0][0]") != std::string::npos);
  CHECK(config_error_message(json::array()).find("<root>") != std::string::npos);
}

TEST_CASE("property: configs round-trip through their canonical form") {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig c;
    c.experiment = experiment_names()[static_cast<std::size_t>(rng.uniform() * experiment_names().size())];
    c.seed = rng.next_u64();
    c.output_dir = "dir" + std::to_string(trial);
    if (rng.uniform() < 0.5) {
      c.flow.map = "perturbed";
      c.flow.epsilon = rng.uniform(-0.05, 0.05);
      c.complexity.method = "sampling";
    }
    c.flow.tau_minus = rng.uniform(0.5, 3.0);
    c.tolerances.contact = rng.uniform() * 1e-5;
    c.verify.box_times = {rng.uniform(0, 10), rng.uniform(0, 10)};
    c.correlate.psi2.center = {rng.uniform(), rng.uniform(), rng.uniform()};
    c.resolvent.constant_z = {{rng.uniform(0.1, 3), rng.normal()}};
    c.ulam.cells = {1 + static_cast<int>(rng.uniform() * 30), 7, 3};
    c.ulam.refine = rng.uniform() < 0.5;
    c.dolgopyat.b = {rng.uniform(1, 100), 1e3 * rng.uniform()};
    c.normcheck.exponents[3] = rng.normal();
    c.leafstats.r = rng.uniform() * 1e-3;
    const json j = to_json(c);
    const ExperimentConfig back = parse_config(json::parse(j.dump()));
    CHECK(back == c);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(config_hash(back) == config_hash(c));
  }
  const ExperimentConfig pieces = parse_config(json::parse(kF0Pieces));
  CHECK(parse_config(json::parse(to_json(pieces).dump())) == pieces);
  CHECK(pieces.flow.pieces[1].matrix[2] == Rational(1, 2));
  CHECK(pieces.flow.pieces[1].offset[1] == Rational(-1, 2));
}

TEST_CASE("config hash ignores the output directory only") {
  ExperimentConfig a, b;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.tolerances.anchor = 2e-10;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("hand-written pieces build the example flow") {
  const ExperimentConfig c = parse_config(json::parse(kF0Pieces));
  const SuspensionFlow custom = build_flow(c.flow);
  const SuspensionFlow f0 = make_f0_flow(1.0);
  CHECK(custom.volume() == doctest::Approx(f0.volume()).epsilon(1e-14));
  CounterRng rng(8, 0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p(rng.uniform(), rng.uniform());
    CHECK(custom.tau(p) == doctest::Approx(f0.tau(p)).epsilon(1e-14));
    CHECK((custom.map().apply(p) - f0.map().apply(p)).norm() < 1e-15);
  }
}

TEST_CASE("verify run writes its artifacts and manifest") {
  const fs::path dir = scratch("verify");
  const RunManifest m = run(small_verify(dir), 1);
  CHECK(m.passed());
  CHECK(m.experiment == "verify");
  CHECK(m.version == kVersion);
  std::set<std::string> names;
  for (const auto& c : m.checks) names.insert(c.name);
  for (const char* expected : {"roof_gradient", "closedness", "contact_invariance", "semigroup", "inversion",
                               "volume_boxes", "cone_quarter", "expansion_limit", "transversality"})
    CHECK(names.count(expected) == 1);

  // every emitted file is listed, and every listed file exists
  std::set<std::string> listed(m.artifacts.begin(), m.artifacts.end()), on_disk;
  for (const auto& entry : fs::directory_iterator(dir)) on_disk.insert(entry.path().filename().string());
  CHECK(listed == on_disk);

  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["passed"] == true);
  CHECK(manifest["config_hash"] == m.config_hash);
  CHECK(manifest["checks"].size() == m.checks.size());
  // the written config reproduces the run
  CHECK(parse_config(json::parse(slurp(dir / "config.json"))) == small_verify(dir));
  fs::remove_all(dir);
}

TEST_CASE("artifacts are identical across worker counts") {
  std::vector<std::map<std::string, std::string>> outputs;
  for (int threads : {1, 3}) {
    const fs::path dir = scratch("threads" + std::to_string(threads));
    ExperimentConfig c = small_verify(dir);
    c.experiment = "leafstats";
    c.leafstats.ell_max = 8;
    run(c, threads);
    c.experiment = "verify";
    run(c, threads);
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name != "manifest.json" && name != "config.json") files[name] = slurp(entry.path());
    }
    outputs.push_back(files);
    fs::remove_all(dir);
  }
  CHECK(outputs[0].size() >= 4);
  CHECK(outputs[0] == outputs[1]);
}

TEST_CASE("failures become failed checks") {
  const fs::path dir = scratch("fail");
  ExperimentConfig c = small_verify(dir);
  c.tolerances.contact = 1e-30;
  RunManifest m = run(c, 1);
  CHECK_FALSE(m.passed());
  int failed = 0;
  for (const auto& ch : m.checks)
    if (!ch.passed) {
      ++failed;
      CHECK(ch.name == "contact_invariance");
    }
  CHECK(failed == 1);

  // a bump crossing the floor of the roof is rejected downstream
  c = small_verify(dir);
  c.experiment = "resolvent";
  c.resolvent.psi.center = {0.2, 0.2, 0.1};
  c.resolvent.psi.half_width = {0.1, 0.1, 0.3};
  c.resolvent.constant_z = {{2.0, 0.0}};
  m = run(c, 1);
  CHECK_FALSE(m.passed());
  bool saw_constant = false;
  for (const auto& ch : m.checks) {
    if (ch.name == "resolvent_constant") {
      saw_constant = true;
      CHECK(ch.passed);
    } else {
      CHECK_FALSE(ch.passed);
      CHECK(ch.detail.find("InvalidArgument") != std::string::npos);
    }
  }
  CHECK(saw_constant);
  fs::remove_all(dir);

  ExperimentConfig bad;
  bad.flow.tau_minus = -1.0;
  CHECK_THROWS_AS(run(bad, 1), Error);
}
