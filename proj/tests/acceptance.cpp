// Acceptance driver: runs every experiment through the command-line tool and
// prints one PASS/FAIL line per criterion. Usage: acceptance <contactflow>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string tool;
fs::path work;

struct Outcome {
  bool ran = false;  // manifest was written
  int exit_code = -1;
  json manifest;
  fs::path dir;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome invoke(const std::string& subcommand, const json& config, const std::string& tag, int threads) {
  Outcome o;
  o.dir = work / (tag + "_t" + std::to_string(threads));
  fs::remove_all(o.dir);
  const fs::path cfg = work / (tag + ".json");
  std::ofstream(cfg) << config.dump(2) << "\n";
  const fs::path log = work / (tag + "_t" + std::to_string(threads) + ".log");
  const std::string cmd = "\"" + tool + "\" " + subcommand + " --config \"" + cfg.string() + "\" --out \"" +
                          o.dir.string() + "\" --threads " + std::to_string(threads) + " > \"" + log.string() +
                          "\" 2>&1";
  const int status = std::system(cmd.c_str());
  o.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  const fs::path manifest = o.dir / "manifest.json";
  if (fs::exists(manifest)) {
    o.manifest = json::parse(slurp(manifest));
    o.ran = true;
  } else {
    std::cout << "  " << subcommand << " wrote no manifest; log:\n" << slurp(log);
  }
  return o;
}

const json* find_check(const Outcome& o, const std::string& name) {
  if (!o.ran) return nullptr;
  for (const auto& c : o.manifest["checks"])
    if (c["name"] == name) return &c;
  return nullptr;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Requires each named check to exist and pass, and the run to fit its time.
struct Verdict {
  bool ok = true;
  std::string detail;

  void require(const Outcome& o, const std::vector<std::string>& names) {
    for (const auto& n : names) {
      const json* c = find_check(o, n);
      if (!c) {
        ok = false;
        detail += " " + n + "=missing";
        continue;
      }
      const bool passed = (*c)["passed"].get<bool>();
      ok = ok && passed;
      detail += " " + n + "=" + num((*c)["value"].get<double>()) + (passed ? "" : "(FAIL)");
    }
  }
  void within(const Outcome& o, double seconds) {
    const double wall = o.ran ? o.manifest["wall_time"].get<double>() : 1e300;
    const bool fits = wall < seconds;
    ok = ok && fits;
    detail += " time=" + num(wall) + "s" + (fits ? "" : "(limit " + num(seconds) + "s)");
  }
};

int failures = 0;

void report(int criterion, const std::string& title, const Verdict& v) {
  if (!v.ok) ++failures;
  std::cout << (v.ok ? "PASS" : "FAIL") << " criterion " << criterion << " " << title << ":" << v.detail << std::endl;
}

json base(const std::string& experiment) {
  return {{"experiment", experiment}, {"seed", 20240601}, {"flow", {{"map", "f0"}, {"tau_minus", 1.0}}}};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path to contactflow>\n";
    return 2;
  }
  tool = fs::absolute(argv[1]).string();
  work = fs::absolute("acceptance_runs");
  fs::create_directories(work);

  // Each experiment, configured with the parameters the criteria state.
  std::vector<std::pair<std::string, json>> runs;

  json verify = base("verify");
  verify["verify"] = {{"contact_samples", 10000}, {"semigroup_samples", 10000},  {"cone_rays", 10000},
                      {"cone_aperture", 1.0},     {"expansion_apertures", {1.0, 0.1, 0.01}}};
  verify["tolerances"] = {{"contact", 1e-6},   {"roof_gradient", 1e-10}, {"semigroup", 1e-10}, {"box_sigma", 3.0},
                          {"cone_slack", 1e-9}, {"expansion", 0.01}};
  runs.emplace_back("verify", verify);

  json resolvent = base("resolvent");
  resolvent["resolvent"] = {{"generator_points", 200}, {"n_max", 4}};
  resolvent["tolerances"] = {{"resolvent_constant", 1e-8}, {"generator", 1e-4}, {"nested", 1e-3}, {"modulus", 1e-8}};
  runs.emplace_back("resolvent", resolvent);

  json ulam = base("ulam");
  ulam["ulam"] = {{"cells", {24, 24, 8}}, {"samples_per_cell", 200}, {"refine", true}};
  ulam["tolerances"] = {{"ulam_leading", 1e-12}, {"ulam_stability", 0.2}};
  runs.emplace_back("ulam", ulam);

  json correlate = base("correlate");
  correlate["correlate"] = {{"n_samples", 1e7}, {"t_max", 30.0}, {"planted_rate", 0.3}};
  correlate["tolerances"] = {{"control_sigma", 3.0}, {"planted_rate", 0.02}};
  runs.emplace_back("correlate", correlate);

  json normcheck = base("normcheck");
  normcheck["normcheck"] = {{"exponents", {0.3, -0.4, 0.0, 0.1, -0.5}}, {"grids", {64, 128}}, {"growth_r", 0.6}};
  normcheck["tolerances"] = {{"parseval", 1e-10}, {"drift", 0.05}};
  runs.emplace_back("normcheck", normcheck);

  json dolgopyat = base("dolgopyat");
  dolgopyat["dolgopyat"] = {{"a", 2.0}, {"m", 2}, {"points", 200}, {"b", {8, 16, 32, 64, 128}}};
  dolgopyat["tolerances"] = {{"budget_fraction", 0.1}};
  runs.emplace_back("dolgopyat", dolgopyat);

  json complexity = base("complexity");
  complexity["complexity"] = {{"n_max", 8}, {"method", "exact"}};
  runs.emplace_back("complexity", complexity);

  json leafstats = base("leafstats");
  runs.emplace_back("leafstats", leafstats);

  std::map<std::string, Outcome> single;
  for (const auto& [name, cfg] : runs) single[name] = invoke(name, cfg, name, 1);

  {
    Verdict v;
    v.require(single["verify"], {"contact_invariance", "roof_gradient", "closedness", "volume_boxes", "semigroup",
                                 "inversion"});
    v.within(single["verify"], 120);
    report(1, "invariant suite", v);
  }
  {
    Verdict v;
    v.require(single["verify"], {"cone_quarter", "expansion_limit"});
    report(2, "cone certificate", v);
  }
  {
    Verdict v;
    v.require(single["resolvent"], {"resolvent_constant", "generator_identity", "nested_power", "modulus_bound"});
    v.within(single["resolvent"], 60);
    report(3, "resolvent identities", v);
  }
  {
    Verdict v;
    v.require(single["ulam"], {"ulam_leading", "ulam_second", "ulam_refinement"});
    v.within(single["ulam"], 300);
    report(4, "Ulam spectrum", v);
  }
  {
    Verdict v;
    v.require(single["correlate"], {"control_zero", "sigma_positive", "sigma_interval", "planted_rate"});
    v.within(single["correlate"], 600);
    report(5, "correlation decay", v);
  }
  {
    Verdict v;
    v.require(single["normcheck"], {"parseval", "symbol_constants_finite", "symbol_drift", "composition_contraction",
                                    "multiplier_drift", "multiplier_growth"});
    v.within(single["normcheck"], 180);
    report(6, "anisotropic norms", v);
  }
  {
    Verdict v;
    v.require(single["dolgopyat"], {"anchor", "monotone_decay", "gamma0_positive", "budget"});
    v.within(single["dolgopyat"], 600);
    report(7, "Dolgopyat experiment", v);
  }
  {
    Verdict v;
    v.require(single["complexity"], {"single_piece_control", "rate_decreasing"});
    v.within(single["complexity"], 180);
    report(8, "complexity", v);
  }

  // Criterion 9: every subcommand again with 2 and 4 workers. The manifest
  // (wall time) and the echoed config (output directory) are bookkeeping;
  // everything else must match byte for byte.
  {
    Verdict v;
    int compared = 0;
    for (const auto& [name, cfg] : runs) {
      const Outcome& ref = single[name];
      for (int threads : {2, 4}) {
        const Outcome other = invoke(name, cfg, name, threads);
        if (!ref.ran || !other.ran) {
          v.ok = false;
          v.detail += " " + name + "@" + std::to_string(threads) + "=missing";
          continue;
        }
        std::vector<std::string> names;
        for (const auto& a : ref.manifest["artifacts"]) names.push_back(a.get<std::string>());
        std::vector<std::string> other_names;
        for (const auto& a : other.manifest["artifacts"]) other_names.push_back(a.get<std::string>());
        if (names != other_names) {
          v.ok = false;
          v.detail += " " + name + "@" + std::to_string(threads) + "=artifact-list";
        }
        for (const auto& a : names) {
          if (a == "manifest.json" || a == "config.json") continue;
          ++compared;
          if (slurp(ref.dir / a) != slurp(other.dir / a)) {
            v.ok = false;
            v.detail += " " + name + "/" + a + "@" + std::to_string(threads) + "=differs";
          }
        }
        fs::remove_all(other.dir);
      }
    }
    v.detail += " files_compared=" + std::to_string(compared);
    report(9, "determinism across 1, 2, 4 workers", v);
  }

  std::cout << (failures == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failures) +
                                                                         " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
