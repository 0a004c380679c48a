#include "contactflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace contactflow {

using nlohmann::json;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"verify",     "correlate", "resolvent", "ulam",
                                              "dolgopyat",  "complexity", "normcheck", "leafstats"};
  return names;
}

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ConfigError, "'" + path + "': " + what);
}

// Reads the keys of one JSON object, remembering which were consumed so that
// anything left over can be reported with its full path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = find(key)) convert(*v, key_path(key), out);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) config_error(key_path(it.key()), "unknown key");
  }

  static void convert(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) config_error(path, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) config_error(path, "not finite");
  }
  static void convert(const json& v, const std::string& path, int& out) {
    if (!v.is_number_integer()) config_error(path, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) config_error(path, "integer out of range");
    out = static_cast<int>(x);
  }
  static void convert(const json& v, const std::string& path, std::uint64_t& out) {
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
      return;
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<std::int64_t>());
      return;
    }
    config_error(path, "expected a non-negative integer");
  }
  static void convert(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) config_error(path, "expected true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) config_error(path, "expected a string");
    out = v.get<std::string>();
  }
  static void convert(const json& v, const std::string& path, Rational& out) {
    if (!v.is_string() && !v.is_number())
      config_error(path, "expected a rational (\"p/q\", integer or decimal)");
    try {
      if (v.is_string()) {
        out = parse_rational(v.get<std::string>());
      } else if (v.is_number_integer()) {
        out = Rational(v.get<std::int64_t>());
      } else {
        out = to_rational(v.get<double>());
      }
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(ErrorKind::ConfigError)) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
      config_error(path, msg);
    } catch (const std::exception& e) {
      config_error(path, e.what());
    }
  }
  template <typename T>
  static void convert(const json& v, const std::string& path, std::vector<T>& out) {
    if (!v.is_array()) config_error(path, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      convert(v[i], path + "[" + std::to_string(i) + "]", item);
      out.push_back(std::move(item));
    }
  }
  template <typename T, std::size_t N>
  static void convert(const json& v, const std::string& path, std::array<T, N>& out) {
    if (!v.is_array() || v.size() != N) config_error(path, "expected an array of " + std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) convert(v[i], path + "[" + std::to_string(i) + "]", out[i]);
  }
  static void convert(const json& v, const std::string& path, BumpSpec& out) {
    Reader r(v, path);
    r.read("center", out.center);
    r.read("half_width", out.half_width);
    r.read("amplitude", out.amplitude);
    r.finish();
  }
  static void convert(const json& v, const std::string& path, PieceSpec& out) {
    Reader r(v, path);
    r.read("domain", out.domain);
    r.read("matrix", out.matrix);
    r.read("offset", out.offset);
    r.finish();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void section(Reader& parent, const std::string& key, Fn&& fn) {
  if (const json* v = parent.find(key)) {
    Reader r(*v, parent.key_path(key));
    fn(r);
    r.finish();
  }
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) config_error(path, what);
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  const auto& names = experiment_names();
  require(std::find(names.begin(), names.end(), c.experiment) != names.end(), "experiment",
          "unknown experiment '" + c.experiment + "'");
  const auto& f = c.flow;
  require(f.map == "f0" || f.map == "perturbed" || f.map == "affine", "flow.map", "expected f0, perturbed or affine");
  require(f.tau_minus > 0.0, "flow.tau_minus", "must be positive");
  require(f.map == "perturbed" || f.epsilon == 0.0, "flow.epsilon", "only the perturbed map takes epsilon");
  require(f.map == "affine" || f.pieces.empty(), "flow.pieces", "pieces are only read for the affine map");
  require(f.map != "affine" || !f.pieces.empty(), "flow.pieces", "the affine map needs at least one piece");
  for (std::size_t i = 0; i < f.pieces.size(); ++i)
    require(f.pieces[i].domain.size() >= 3, "flow.pieces[" + std::to_string(i) + "].domain",
            "a polygon needs at least three vertices");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");

  const auto& v = c.verify;
  require(v.contact_samples > 0 && v.semigroup_samples > 0 && v.box_samples > 0 && v.roof_samples > 0 &&
              v.charts > 0 && v.chart_samples > 0,
          "verify", "sample counts must be positive");
  require(v.max_time > 0.0, "verify.max_time", "must be positive");
  require(!v.expansion_apertures.empty(), "verify.expansion_apertures", "must not be empty");

  const auto& k = c.correlate;
  require(k.n_samples >= 1.0 && k.n_samples <= 1e12, "correlate.n_samples", "must be in [1, 1e12]");
  require(k.dt > 0.0 && k.t_max >= 0.0, "correlate.dt", "need dt > 0 and t_max >= 0");

  require(c.resolvent.n_max >= 1, "resolvent.n_max", "must be at least 1");
  require(c.ulam.t > 0.0, "ulam.t", "must be positive");
  require(c.dolgopyat.m >= 1 && c.dolgopyat.points > 0, "dolgopyat", "need m >= 1 and points > 0");
  require(!c.dolgopyat.b.empty(), "dolgopyat.b", "must not be empty");

  const auto& x = c.complexity;
  require(x.method == "exact" || x.method == "sampling", "complexity.method", "expected exact or sampling");
  require(c.experiment != "complexity" || x.method == "sampling" || f.map != "perturbed", "complexity.method",
          "the perturbed map is not piecewise affine; use sampling");
  require(x.n_max >= 1, "complexity.n_max", "must be at least 1");

  require(c.normcheck.L > 0.0, "normcheck.L", "must be positive");
  require(c.leafstats.ell_max >= 0 && c.leafstats.leaves > 0, "leafstats", "need ell_max >= 0 and leaves > 0");
  require(c.leafstats.max_pieces >= 1.0, "leafstats.max_pieces", "must be at least 1");
}

namespace {

json bump_json(const BumpSpec& b) {
  return {{"center", b.center}, {"half_width", b.half_width}, {"amplitude", b.amplitude}};
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");
  root.read("experiment", c.experiment);
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  section(root, "flow", [&](Reader& r) {
    r.read("map", c.flow.map);
    r.read("epsilon", c.flow.epsilon);
    r.read("tau_minus", c.flow.tau_minus);
    r.read("pieces", c.flow.pieces);
  });
  section(root, "tolerances", [&](Reader& r) {
    auto& t = c.tolerances;
    r.read("contact", t.contact);
    r.read("roof_gradient", t.roof_gradient);
    r.read("roof_fd", t.roof_fd);
    r.read("closedness_fd", t.closedness_fd);
    r.read("semigroup", t.semigroup);
    r.read("box_sigma", t.box_sigma);
    r.read("chart", t.chart);
    r.read("cone_slack", t.cone_slack);
    r.read("expansion", t.expansion);
    r.read("resolvent_constant", t.resolvent_constant);
    r.read("generator", t.generator);
    r.read("nested", t.nested);
    r.read("modulus", t.modulus);
    r.read("ulam_leading", t.ulam_leading);
    r.read("ulam_stability", t.ulam_stability);
    r.read("control_sigma", t.control_sigma);
    r.read("planted_rate", t.planted_rate);
    r.read("parseval", t.parseval);
    r.read("drift", t.drift);
    r.read("growth_factor", t.growth_factor);
    r.read("anchor", t.anchor);
    r.read("budget_fraction", t.budget_fraction);
    r.read("plateau", t.plateau);
  });
  section(root, "verify", [&](Reader& r) {
    auto& v = c.verify;
    r.read("contact_samples", v.contact_samples);
    r.read("max_crossings", v.max_crossings);
    r.read("clear_margin", v.clear_margin);
    r.read("semigroup_samples", v.semigroup_samples);
    r.read("max_time", v.max_time);
    r.read("box_samples", v.box_samples);
    r.read("boxes", v.boxes);
    r.read("box_times", v.box_times);
    r.read("roof_samples", v.roof_samples);
    r.read("cone_rays", v.cone_rays);
    r.read("cone_aperture", v.cone_aperture);
    r.read("expansion_apertures", v.expansion_apertures);
    r.read("charts", v.charts);
    r.read("chart_samples", v.chart_samples);
    r.read("transversality_samples", v.transversality_samples);
  });
  section(root, "correlate", [&](Reader& r) {
    auto& k = c.correlate;
    r.read("n_samples", k.n_samples);
    r.read("t_max", k.t_max);
    r.read("dt", k.dt);
    r.read("psi1", k.psi1);
    r.read("psi2", k.psi2);
    r.read("batches", k.batches);
    r.read("bootstrap", k.bootstrap);
    r.read("planted_rate", k.planted_rate);
  });
  section(root, "resolvent", [&](Reader& r) {
    auto& k = c.resolvent;
    r.read("constant_z", k.constant_z);
    r.read("psi", k.psi);
    r.read("generator_z", k.generator_z);
    r.read("generator_points", k.generator_points);
    r.read("generator_tolerance", k.generator_tolerance);
    r.read("nested_z", k.nested_z);
    r.read("nested_points", k.nested_points);
    r.read("nested_panel", k.nested_panel);
    r.read("modulus_z", k.modulus_z);
    r.read("modulus_points", k.modulus_points);
    r.read("n_max", k.n_max);
  });
  section(root, "ulam", [&](Reader& r) {
    auto& k = c.ulam;
    r.read("t", k.t);
    r.read("cells", k.cells);
    r.read("samples_per_cell", k.samples_per_cell);
    r.read("refine", k.refine);
    r.read("krylov_dim", k.krylov_dim);
  });
  section(root, "dolgopyat", [&](Reader& r) {
    auto& k = c.dolgopyat;
    r.read("a", k.a);
    r.read("m", k.m);
    r.read("gamma", k.gamma);
    r.read("b", k.b);
    r.read("points", k.points);
    r.read("leaf_panel_length", k.leaf_panel_length);
    r.read("psi", k.psi);
    r.read("anchor_points", k.anchor_points);
  });
  section(root, "complexity", [&](Reader& r) {
    auto& k = c.complexity;
    r.read("n_max", k.n_max);
    r.read("method", k.method);
    r.read("sampling_grid", k.sampling_grid);
    r.read("sampling_window", k.sampling_window);
  });
  section(root, "normcheck", [&](Reader& r) {
    auto& k = c.normcheck;
    r.read("exponents", k.exponents);
    r.read("L", k.L);
    r.read("parseval_grid", k.parseval_grid);
    r.read("grids", k.grids);
    r.read("composition_power", k.composition_power);
    r.read("composition_grid", k.composition_grid);
    r.read("multiplier_symbol", k.multiplier_symbol);
    r.read("growth_r", k.growth_r);
    r.read("growth_grids", k.growth_grids);
  });
  section(root, "leafstats", [&](Reader& r) {
    auto& k = c.leafstats;
    r.read("delta", k.delta);
    r.read("r", k.r);
    r.read("ell_max", k.ell_max);
    r.read("leaves", k.leaves);
    r.read("piece_length", k.piece_length);
    r.read("max_pieces", k.max_pieces);
  });
  root.finish();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);  // comments allowed
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, "'" + path + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json pieces = json::array();
  for (const auto& p : c.flow.pieces) {
    json domain = json::array();
    for (const auto& v : p.domain) domain.push_back(json::array({to_string(v[0]), to_string(v[1])}));
    json matrix = json::array();
    for (const auto& m : p.matrix) matrix.push_back(to_string(m));
    pieces.push_back({{"domain", domain},
                      {"matrix", matrix},
                      {"offset", json::array({to_string(p.offset[0]), to_string(p.offset[1])})}});
  }
  const auto& t = c.tolerances;
  const auto& v = c.verify;
  const auto& k = c.correlate;
  const auto& rs = c.resolvent;
  json constant_z = json::array();
  for (const auto& z : rs.constant_z) constant_z.push_back(z);
  const auto& u = c.ulam;
  const auto& d = c.dolgopyat;
  const auto& x = c.complexity;
  const auto& n = c.normcheck;
  const auto& l = c.leafstats;
  return {
      {"experiment", c.experiment},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"flow", {{"map", c.flow.map}, {"epsilon", c.flow.epsilon}, {"tau_minus", c.flow.tau_minus}, {"pieces", pieces}}},
      {"tolerances",
       {{"contact", t.contact},
        {"roof_gradient", t.roof_gradient},
        {"roof_fd", t.roof_fd},
        {"closedness_fd", t.closedness_fd},
        {"semigroup", t.semigroup},
        {"box_sigma", t.box_sigma},
        {"chart", t.chart},
        {"cone_slack", t.cone_slack},
        {"expansion", t.expansion},
        {"resolvent_constant", t.resolvent_constant},
        {"generator", t.generator},
        {"nested", t.nested},
        {"modulus", t.modulus},
        {"ulam_leading", t.ulam_leading},
        {"ulam_stability", t.ulam_stability},
        {"control_sigma", t.control_sigma},
        {"planted_rate", t.planted_rate},
        {"parseval", t.parseval},
        {"drift", t.drift},
        {"growth_factor", t.growth_factor},
        {"anchor", t.anchor},
        {"budget_fraction", t.budget_fraction},
        {"plateau", t.plateau}}},
      {"verify",
       {{"contact_samples", v.contact_samples},
        {"max_crossings", v.max_crossings},
        {"clear_margin", v.clear_margin},
        {"semigroup_samples", v.semigroup_samples},
        {"max_time", v.max_time},
        {"box_samples", v.box_samples},
        {"boxes", v.boxes},
        {"box_times", v.box_times},
        {"roof_samples", v.roof_samples},
        {"cone_rays", v.cone_rays},
        {"cone_aperture", v.cone_aperture},
        {"expansion_apertures", v.expansion_apertures},
        {"charts", v.charts},
        {"chart_samples", v.chart_samples},
        {"transversality_samples", v.transversality_samples}}},
      {"correlate",
       {{"n_samples", k.n_samples},
        {"t_max", k.t_max},
        {"dt", k.dt},
        {"psi1", bump_json(k.psi1)},
        {"psi2", bump_json(k.psi2)},
        {"batches", k.batches},
        {"bootstrap", k.bootstrap},
        {"planted_rate", k.planted_rate}}},
      {"resolvent",
       {{"constant_z", constant_z},
        {"psi", bump_json(rs.psi)},
        {"generator_z", rs.generator_z},
        {"generator_points", rs.generator_points},
        {"generator_tolerance", rs.generator_tolerance},
        {"nested_z", rs.nested_z},
        {"nested_points", rs.nested_points},
        {"nested_panel", rs.nested_panel},
        {"modulus_z", rs.modulus_z},
        {"modulus_points", rs.modulus_points},
        {"n_max", rs.n_max}}},
      {"ulam",
       {{"t", u.t},
        {"cells", u.cells},
        {"samples_per_cell", u.samples_per_cell},
        {"refine", u.refine},
        {"krylov_dim", u.krylov_dim}}},
      {"dolgopyat",
       {{"a", d.a},
        {"m", d.m},
        {"gamma", d.gamma},
        {"b", d.b},
        {"points", d.points},
        {"leaf_panel_length", d.leaf_panel_length},
        {"psi", bump_json(d.psi)},
        {"anchor_points", d.anchor_points}}},
      {"complexity",
       {{"n_max", x.n_max},
        {"method", x.method},
        {"sampling_grid", x.sampling_grid},
        {"sampling_window", x.sampling_window}}},
      {"normcheck",
       {{"exponents", n.exponents},
        {"L", n.L},
        {"parseval_grid", n.parseval_grid},
        {"grids", n.grids},
        {"composition_power", n.composition_power},
        {"composition_grid", n.composition_grid},
        {"multiplier_symbol", n.multiplier_symbol},
        {"growth_r", n.growth_r},
        {"growth_grids", n.growth_grids}}},
      {"leafstats",
       {{"delta", l.delta},
        {"r", l.r},
        {"ell_max", l.ell_max},
        {"leaves", l.leaves},
        {"piece_length", l.piece_length},
        {"max_pieces", l.max_pieces}}},
  };
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SuspensionFlow build_flow(const FlowSpec& spec) {
  if (spec.map == "f0") return make_f0_flow(spec.tau_minus);
  if (spec.map == "perturbed") return make_perturbed_flow(spec.epsilon, spec.tau_minus);
  std::vector<AffinePiece> pieces;
  for (const auto& p : spec.pieces) {
    AffinePiece piece;
    for (const auto& v : p.domain) piece.domain.push_back({v[0], v[1]});
    piece.matrix = {p.matrix[0], p.matrix[1], p.matrix[2], p.matrix[3]};
    piece.offset = {p.offset[0], p.offset[1]};
    pieces.push_back(std::move(piece));
  }
  auto map = std::make_shared<const PiecewiseAffineTorusMap>(std::move(pieces), "affine");
  auto roof = std::make_shared<const QuadraticRoof>(map, spec.tau_minus);
  return SuspensionFlow(map, roof);
}

}  // namespace contactflow
