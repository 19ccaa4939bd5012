#include "nss/cli.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace nss {

using J = nlohmann::ordered_json;

// ------------------------------------------------------------------ config

namespace {

struct Parser {
  std::string source;

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& what) const {
    const int line = node.IsDefined() && node.Mark().line >= 0 ? node.Mark().line + 1 : 0;
    throw Error(ErrorCode::ConfigError, source + ":" + std::to_string(line) + ": " + field + ": " + what, line);
  }

  void keys(const YAML::Node& node, const std::string& field, const std::set<std::string>& allowed) const {
    if (!node.IsMap()) fail(node, field, "expected a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, field.empty() ? key : field + "." + key, "unknown key");
    }
  }

  double real(const YAML::Node& node, const std::string& field) const {
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected a number");
    }
  }

  int integer(const YAML::Node& node, const std::string& field) const {
    try {
      return node.as<int>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected an integer");
    }
  }

  bool boolean(const YAML::Node& node, const std::string& field) const {
    try {
      return node.as<bool>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected true or false");
    }
  }

  std::string text(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected a string");
    return node.as<std::string>();
  }

  // A number or a [re, im] pair.
  cplx complex(const YAML::Node& node, const std::string& field) const {
    if (node.IsSequence()) {
      if (node.size() != 2) fail(node, field, "expected [re, im]");
      return {real(node[0], field + "[0]"), real(node[1], field + "[1]")};
    }
    return real(node, field);
  }

  std::vector<double> reals(const YAML::Node& node, const std::string& field) const {
    if (!node.IsSequence()) fail(node, field, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(real(node[i], field + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::string item(const std::string& field, std::size_t i) const { return field + "[" + std::to_string(i) + "]"; }

  void model(const YAML::Node& n, ModelConfig& m) const {
    keys(n, "model", {"kind", "L", "N", "delta", "potential", "toy"});
    if (n["kind"]) m.kind = text(n["kind"], "model.kind");
    if (m.kind != "schrodinger" && m.kind != "toy") fail(n["kind"], "model.kind", "expected schrodinger or toy");
    if (n["L"]) m.L = real(n["L"], "model.L");
    if (n["N"]) m.N = integer(n["N"], "model.N");
    if (n["delta"]) m.delta = real(n["delta"], "model.delta");
    if (!(m.L > 0.0)) fail(n["L"], "model.L", "must be positive");
    if (m.N < 16) fail(n["N"], "model.N", "must be at least 16");
    if (!(m.delta > 0.0)) fail(n["delta"], "model.delta", "must be positive");
    if (const auto p = n["potential"]) {
      if (!p.IsSequence()) fail(p, "model.potential", "expected a list of pieces");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string f = item("model.potential", i);
        keys(p[i], f, {"a", "b", "value", "tune_k_star"});
        if (!p[i]["a"] || !p[i]["b"] || !p[i]["value"]) fail(p[i], f, "needs a, b and value");
        PieceConfig pc;
        pc.a = real(p[i]["a"], f + ".a");
        pc.b = real(p[i]["b"], f + ".b");
        pc.value = complex(p[i]["value"], f + ".value");
        if (p[i]["tune_k_star"]) pc.tune_k_star = real(p[i]["tune_k_star"], f + ".tune_k_star");
        if (!(pc.a < pc.b)) fail(p[i], f, "needs a < b");
        if (pc.a < -m.L || pc.b > m.L) fail(p[i], f, "interval lies outside the grid [-L, L]");
        m.potential.push_back(pc);
      }
    }
    if (const auto t = n["toy"]) {
      keys(t, "model.toy", {"n_band", "band_max", "coupling", "c_weight", "discrete", "embedded"});
      if (t["n_band"]) m.toy.n_band = integer(t["n_band"], "model.toy.n_band");
      if (t["band_max"]) m.toy.band_max = real(t["band_max"], "model.toy.band_max");
      if (t["coupling"]) m.toy.coupling = real(t["coupling"], "model.toy.coupling");
      if (t["c_weight"]) m.toy.c_weight = real(t["c_weight"], "model.toy.c_weight");
      if (const auto d = t["discrete"]) {
        if (!d.IsSequence()) fail(d, "model.toy.discrete", "expected a list");
        for (std::size_t i = 0; i < d.size(); ++i) {
          const std::string f = item("model.toy.discrete", i);
          keys(d[i], f, {"lambda", "jordan"});
          ToyDiscrete td;
          td.lambda = complex(d[i]["lambda"], f + ".lambda");
          if (d[i]["jordan"]) td.jordan = integer(d[i]["jordan"], f + ".jordan");
          m.toy.discrete.push_back(td);
        }
      }
      if (const auto e = t["embedded"]) {
        if (!e.IsSequence()) fail(e, "model.toy.embedded", "expected a list");
        for (std::size_t i = 0; i < e.size(); ++i) {
          const std::string f = item("model.toy.embedded", i);
          keys(e[i], f, {"lambda", "degenerate"});
          ToyEmbedded te;
          te.lambda = real(e[i]["lambda"], f + ".lambda");
          if (e[i]["degenerate"]) te.degenerate = boolean(e[i]["degenerate"], f + ".degenerate");
          if (te.lambda <= 0.0 || te.lambda >= m.toy.band_max) fail(e[i], f + ".lambda", "outside the toy band");
          m.toy.embedded.push_back(te);
        }
      }
    }
  }

  void singular(const YAML::Node& n, SingularConfig& s) const {
    keys(n, "singular", {"enabled", "grid", "schedule", "k_max", "scan_points"});
    if (n["enabled"]) s.enabled = boolean(n["enabled"], "singular.enabled");
    if (const auto g = n["grid"]) {
      keys(g, "singular.grid", {"lo", "hi", "step"});
      if (g["lo"]) s.lo = real(g["lo"], "singular.grid.lo");
      if (g["hi"]) s.hi = real(g["hi"], "singular.grid.hi");
      if (g["step"]) s.step = real(g["step"], "singular.grid.step");
      if (s.lo >= s.hi) fail(g, "singular.grid", "needs lo < hi");
      if (s.step <= 0.0) fail(g["step"], "singular.grid.step", "must be positive");
    }
    if (const auto e = n["schedule"]) {
      keys(e, "singular.schedule", {"points", "span", "floor_factor"});
      if (e["points"]) s.schedule.points = integer(e["points"], "singular.schedule.points");
      if (e["span"]) s.schedule.span = real(e["span"], "singular.schedule.span");
      if (e["floor_factor"]) s.schedule.floor_factor = real(e["floor_factor"], "singular.schedule.floor_factor");
      if (s.schedule.points < 4) fail(e["points"], "singular.schedule.points", "must be at least 4");
      if (!(s.schedule.span > 1.0)) fail(e["span"], "singular.schedule.span", "must exceed 1");
    }
    if (n["k_max"]) s.k_max = real(n["k_max"], "singular.k_max");
    if (n["scan_points"]) s.scan_points = integer(n["scan_points"], "singular.scan_points");
    if (!(s.k_max > 0.0)) fail(n["k_max"], "singular.k_max", "must be positive");
  }

  void regularizer(const YAML::Node& n, RegularizerConfig& r) const {
    keys(n, "regularizer", {"enabled", "z0", "nu", "nu_inf", "resolution_of_identity"});
    if (n["enabled"]) r.enabled = boolean(n["enabled"], "regularizer.enabled");
    if (n["z0"]) {
      r.z0 = complex(n["z0"], "regularizer.z0");
      if (r.z0->imag() == 0.0) fail(n["z0"], "regularizer.z0", "must have a nonzero imaginary part");
    }
    if (const auto v = n["nu"]) {
      if (!v.IsSequence()) fail(v, "regularizer.nu", "expected a list");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string f = item("regularizer.nu", i);
        keys(v[i], f, {"lambda", "nu"});
        if (!v[i]["lambda"] || !v[i]["nu"]) fail(v[i], f, "needs lambda and nu");
        const int nu = integer(v[i]["nu"], f + ".nu");
        if (nu < 0) fail(v[i]["nu"], f + ".nu", "must be nonnegative");
        r.nu.emplace_back(real(v[i]["lambda"], f + ".lambda"), nu);
      }
    }
    if (n["nu_inf"]) r.nu_inf = integer(n["nu_inf"], "regularizer.nu_inf");
    if (n["resolution_of_identity"])
      r.resolution_of_identity = boolean(n["resolution_of_identity"], "regularizer.resolution_of_identity");
  }

  void waveop(const YAML::Node& n, WaveopConfig& w) const {
    keys(n, "waveop", {"kinds", "T_max", "window", "dt", "tail_tol", "t_samples", "growth_budget", "completeness",
                       "adjoint", "semigroup_t", "smoothness"});
    if (const auto k = n["kinds"]) {
      if (!k.IsSequence()) fail(k, "waveop.kinds", "expected a list");
      w.kinds.clear();
      for (std::size_t i = 0; i < k.size(); ++i) {
        const std::string f = item("waveop.kinds", i);
        try {
          w.kinds.push_back(parse_wave_kind(text(k[i], f)));
        } catch (const Error&) {
          fail(k[i], f, "expected one of W+(H,H0), W-(H*,H0), W+(H0,H), W-(H0,H*), ...");
        }
      }
    }
    CookOptions& c = w.cook;
    if (n["T_max"]) c.T_max = real(n["T_max"], "waveop.T_max");
    if (n["window"]) c.window = real(n["window"], "waveop.window");
    if (n["dt"]) c.dt = real(n["dt"], "waveop.dt");
    if (n["tail_tol"]) c.tail_tol = real(n["tail_tol"], "waveop.tail_tol");
    if (n["t_samples"]) c.t_samples = reals(n["t_samples"], "waveop.t_samples");
    if (n["growth_budget"]) c.growth_budget = real(n["growth_budget"], "waveop.growth_budget");
    if (!(c.window > 0.0) || c.T_max < c.window) fail(n["T_max"], "waveop.T_max", "needs T_max >= window > 0");
    if (c.dt < 0.0) fail(n["dt"], "waveop.dt", "must be nonnegative");
    if (!(c.tail_tol > 0.0)) fail(n["tail_tol"], "waveop.tail_tol", "must be positive");
    if (n["completeness"]) w.completeness = boolean(n["completeness"], "waveop.completeness");
    if (n["adjoint"]) w.adjoint = boolean(n["adjoint"], "waveop.adjoint");
    if (n["semigroup_t"]) w.semigroup_t = reals(n["semigroup_t"], "waveop.semigroup_t");
    if (const auto s = n["smoothness"]) {
      keys(s, "waveop.smoothness", {"T", "sides"});
      if (s["T"]) w.smoothness_T = real(s["T"], "waveop.smoothness.T");
      if (s["sides"]) {
        w.smoothness_sides.clear();
        for (double v : reals(s["sides"], "waveop.smoothness.sides")) {
          if (v != 1.0 && v != -1.0) fail(s["sides"], "waveop.smoothness.sides", "entries must be -1 or 1");
          w.smoothness_sides.push_back(v > 0 ? +1 : -1);
        }
      }
      if (!(w.smoothness_T > 0.0)) fail(s["T"], "waveop.smoothness.T", "must be positive");
    }
  }

  void output(const YAML::Node& n, OutputConfig& o) const {
    keys(n, "output", {"directory", "format"});
    if (n["directory"]) o.directory = text(n["directory"], "output.directory");
    if (n["format"]) o.format = text(n["format"], "output.format");
    if (o.format != "csv" && o.format != "json-lines") fail(n["format"], "output.format", "expected csv or json-lines");
  }
};

}  // namespace

ScenarioConfig parse_config(const std::string& text, const std::string& source) {
  const Parser p{source};
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::ConfigError, source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg,
                e.mark.line + 1);
  }
  ScenarioConfig c;
  c.source = source;
  if (!root.IsDefined() || root.IsNull()) return c;
  p.keys(root, "", {"name", "seed", "model", "singular", "regularizer", "waveop", "output"});
  if (root["name"]) c.name = p.text(root["name"], "name");
  if (root["seed"]) {
    try {
      c.seed = root["seed"].as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      p.fail(root["seed"], "seed", "expected a nonnegative integer");
    }
  }
  if (root["model"]) p.model(root["model"], c.model);
  if (root["singular"]) p.singular(root["singular"], c.singular);
  if (root["regularizer"]) p.regularizer(root["regularizer"], c.regularizer);
  if (root["waveop"]) p.waveop(root["waveop"], c.waveop);
  if (root["output"]) p.output(root["output"], c.output);
  c.waveop.cook.seed = c.seed;
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, path + ":0: cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

WaveKind parse_wave_kind(const std::string& label) {
  for (WavePair p : {WavePair::H_H0, WavePair::Hstar_H0, WavePair::H0_H, WavePair::H0_Hstar})
    for (int s : {+1, -1})
      if (WaveKind{p, s}.label() == label) return WaveKind{p, s};
  throw Error(ErrorCode::ConfigError, "unknown wave operator kind " + label);
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Validate, Stage::Spectrum, Stage::Singularities, Stage::Resonances, Stage::Waveop,
                  Stage::Smoothness, Stage::All})
    if (name == to_string(s)) return s;
  throw Error(ErrorCode::InvalidArgument, "unknown stage " + name);
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Validate: return "validate";
    case Stage::Spectrum: return "spectrum";
    case Stage::Singularities: return "singularities";
    case Stage::Resonances: return "resonances";
    case Stage::Waveop: return "waveop";
    case Stage::Smoothness: return "smoothness";
    case Stage::All: return "run";
  }
  return "?";
}

// ------------------------------------------------------------------ output

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::get<std::string>(c);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

J cell_json(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return *i;
  if (const auto* d = std::get_if<double>(&c)) return std::isfinite(*d) ? J(*d) : J(format_number(*d));
  return std::get<std::string>(c);
}

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t j = 0; j < table.columns.size(); ++j) out += (j ? "," : "") + csv_field(table.columns[j]);
  out += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + csv_field(cell_text(row[j]));
    out += "\r\n";
  }
  return out;
}

std::string to_json_lines(const Table& table) {
  std::string out;
  for (const auto& row : table.rows) {
    J obj = J::object();
    for (std::size_t j = 0; j < row.size(); ++j) obj[table.columns[j]] = cell_json(row[j]);
    out += obj.dump() + "\n";
  }
  return out;
}

void write_outputs(const RunReport& report, const std::string& directory, const std::string& format) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream out(fs::path(directory) / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + (fs::path(directory) / name).string());
    out << body;
  };
  put("report.json", report.doc.dump(2) + "\n");
  for (const auto& t : report.tables)
    put(t.name + (format == "csv" ? ".csv" : ".jsonl"), format == "csv" ? to_csv(t) : to_json_lines(t));
  J tim = J::object();
  for (const auto& [stage, sec] : report.timings) tim[stage] = sec;
  put("timings.json", tim.dump(2) + "\n");
}

// ------------------------------------------------------------------ stages

namespace {

J num(double v) { return std::isfinite(v) ? J(v) : J(format_number(v)); }
J cnum(cplx z) { return J::array({num(z.real()), num(z.imag())}); }

// Every numeric report entry carries its bound and a pass/flag status.
J at_most(double v, double tol) {
  return J{{"value", num(v)}, {"tol", tol}, {"cmp", "<="}, {"status", v <= tol ? "pass" : "flag"}};
}
J at_least(double v, double bound) {
  return J{{"value", num(v)}, {"tol", bound}, {"cmp", ">="}, {"status", v >= bound ? "pass" : "flag"}};
}
J within(double v, double lo, double hi) {
  return J{{"value", num(v)},
           {"tol", J::array({lo, hi})},
           {"cmp", "in"},
           {"status", v >= lo && v <= hi ? "pass" : "flag"}};
}
J recorded(double v) { return J{{"value", num(v)}, {"tol", nullptr}, {"status", "recorded"}}; }

struct Pipeline {
  Pipeline(const ScenarioConfig& c, RunReport& r) : cfg(c), rep(r) {}

  const ScenarioConfig& cfg;
  RunReport& rep;
  std::optional<OperatorModel> model;
  std::optional<Classification> cls;
  std::optional<SpectralData> data;
  std::optional<SingularityScan> scan;
  std::vector<double> grid;
  double grid_step = 0.0;
  std::optional<Regularizer> reg;
  std::unique_ptr<ModalBasis> basis;

  void flag(const std::string& what) { rep.doc["flags"].push_back(what); }

  template <class F>
  bool stage(const char* name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    try {
      body();
    } catch (const Error& e) {
      rep.doc["errors"].push_back(J{{"stage", name}, {"code", to_string(e.code())}, {"message", e.what()}});
      ok = false;
    } catch (const std::exception& e) {
      rep.doc["errors"].push_back(J{{"stage", name}, {"code", "Exception"}, {"message", e.what()}});
      ok = false;
    }
    rep.errored |= !ok;
    rep.timings.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return ok;
  }

  void models() {
    const auto& m = cfg.model;
    J out = J::object();
    out["kind"] = m.kind;
    if (m.kind == "toy") {
      model = build_toy_model(m.toy);
    } else {
      Potential1D pot;
      J pieces = J::array();
      for (const auto& pc : m.potential) {
        cplx c = pc.value;
        J jp{{"a", pc.a}, {"b", pc.b}};
        if (pc.tune_k_star) {
          const auto tw = tune_square_well(pc.a, pc.b, *pc.tune_k_star, pc.value);
          c = tw.c;
          jp["tune_k_star"] = *pc.tune_k_star;
          jp["tune_residual"] = at_most(tw.residual, 1e-10);
        }
        jp["value"] = cnum(c);
        pieces.push_back(jp);
        pot.pieces.push_back({pc.a, pc.b, c});
      }
      model = build_schrodinger_1d(m.L, m.N, pot, m.delta);
      out["grid"] = J{{"L", m.L}, {"N", m.N}, {"h", model->grid->h}};
      out["delta"] = m.delta;
      out["potential"] = pieces;
    }
    out["label"] = model->label;
    out["dim"] = model->dim();
    out["band"] = J::array({num(model->ess_band.lo), num(model->ess_band.hi)});
    rep.doc["model"] = out;
  }

  void hypotheses() {
    const auto h = validate_hypotheses(*model, 16);
    J out = J::object();
    out["lap_sup"] = recorded(h.lap_sup);
    out["lap_argmax"] = cnum(h.lap_argmax);
    if (h.lap_sup_coarse >= 0.0) {
      out["lap_sup_coarse"] = recorded(h.lap_sup_coarse);
      out["coarse_N"] = h.coarse_N;
    }
    out["eigenvalue_count"] = h.eigenvalue_count;
    out["discrete_count"] = h.discrete_count;
    out["embedded_count"] = h.embedded_count;
    out["lower_half_plane_count"] = h.lower_half_plane_count;
    out["h0_hermitian_residual"] = at_most(h.h0_hermitian_residual, 1e-12);
    out["h0_min_eigenvalue"] = at_least(h.h0_min_eigenvalue, -1e-10);
    out["c_min_singular_value"] = at_least(h.c_min_singular_value, 1e-12);
    out["jj_residual"] = at_most(h.jj_residual, 1e-12);
    out["jh0_residual"] = at_most(h.jh0_residual, 1e-12);
    out["jc_residual"] = at_most(h.jc_residual, 1e-12);
    out["jw_residual"] = at_most(h.jw_residual, 1e-12);
    out["jh_residual"] = at_most(h.jh_residual, 1e-12);
    J grams = J::array();
    for (const auto& g : h.grams)
      grams.push_back(J{{"lambda", cnum(g.lambda)},
                        {"m", g.m},
                        {"det_eigvec", recorded(g.det_eigvec)},
                        {"det_generalized", recorded(g.det_generalized)},
                        {"degenerate", g.degenerate}});
    out["grams"] = grams;
    out["flags"] = h.flags;
    for (const auto& f : h.flags) flag("hypotheses: " + f);
    rep.doc["hypotheses"] = out;
  }

  void spectral() {
    cls = classify_spectrum(*model);
    data = assemble_projections(*model, *cls);
    J out = J::object();
    out["band_levels"] = cls->band_levels;
    out["rank_p"] = data->rank_p;
    auto entries = [&](const std::vector<ProjectionEntry>& list, bool embedded) {
      J arr = J::array();
      for (const auto& e : list) {
        J je{{"lambda", cnum(e.lambda)},
             {"m", e.m},
             {"idempotency", at_most(e.residual.idempotency, 1e-8)},
             {"commutation", at_most(e.residual.commutation, 1e-8)},
             {"trace", cnum(e.residual.trace)}};
        if (embedded) je["gram_condition"] = recorded(e.gram_condition);
        arr.push_back(je);
      }
      return arr;
    };
    out["discrete"] = entries(data->discrete, false);
    out["embedded"] = entries(data->embedded, true);
    J amb = J::array();
    for (const auto& a : cls->ambiguous) amb.push_back(cnum(a.lambda));
    out["ambiguous"] = amb;
    if (!cls->ambiguous.empty()) flag("spectral: ambiguous eigenvalues near a band edge");
    out["pp_pac"] = at_most(data->pp_pac, 1e-8);
    out["j_orthogonality"] = at_most(data->j_orthogonality, 1e-8);
    rep.doc["spectral"] = out;

    std::map<std::size_t, std::pair<std::string, const ClassifiedEigenvalue*>> kind;
    for (const auto& e : cls->discrete) kind[e.cluster] = {"discrete", &e};
    for (const auto& e : cls->embedded) kind[e.cluster] = {"embedded", &e};
    for (const auto& e : cls->ambiguous) kind[e.cluster] = {"ambiguous", &e};
    Table t{"spectrum", {"index", "re", "im", "alg_mult", "geo_mult", "class", "weight"}, {}};
    for (std::size_t i = 0; i < cls->eig.clusters.size(); ++i) {
      const auto& c = cls->eig.clusters[i];
      const auto it = kind.find(i);
      t.rows.push_back({static_cast<long long>(i), c.lambda.real(), c.lambda.imag(), static_cast<long long>(c.alg_mult),
                        static_cast<long long>(c.geo_mult), it == kind.end() ? std::string("band") : it->second.first,
                        it == kind.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.second->weight});
    }
    rep.tables.push_back(std::move(t));
  }

  void singular() {
    const auto& s = cfg.singular;
    const Band& band = model->ess_band;
    const double lo = std::isnan(s.lo) ? band.lo + 0.01 * band.length() : s.lo;
    const double hi = std::isnan(s.hi) ? band.lo + 0.1 * band.length() : s.hi;
    grid_step = std::isnan(s.step) ? 0.001 * band.length() : s.step;
    if (!band.contains(lo) || !band.contains(hi))
      throw Error(ErrorCode::ConfigError, cfg.source + ": singular.grid: interval [" + format_number(lo) + ", " +
                                              format_number(hi) + "] is not inside the band");
    grid.clear();
    const int points = static_cast<int>(std::floor((hi - lo) / grid_step + 1e-9)) + 1;
    for (int i = 0; i < points; ++i) grid.push_back(lo + i * grid_step);
    DetectOptions opt;
    opt.schedule = s.schedule;
    scan = detect_singularities(*model, grid, opt);

    J out = J::object();
    out["grid"] = J{{"lo", lo}, {"hi", hi}, {"step", grid_step}, {"points", points}};
    J recs = J::array();
    for (const auto& r : scan->records) {
      recs.push_back(J{{"lambda", num(r.lambda)},
                       {"side", to_string(r.side)},
                       {"nu", r.nu},
                       {"exponent", within(r.exponent, r.nu - opt.order_window, r.nu + opt.order_window)},
                       {"eps_floor", num(r.evidence.eps_floor)}});
      flag("singular: spectral singularity at lambda = " + format_number(r.lambda) + " (" + to_string(r.side) + ")");
    }
    out["records"] = recs;
    out["nu_inf"] = scan->nu_inf;
    rep.doc["singular"] = out;

    Table probes{"probes", {"lambda", "side", "eps", "norm"}, {}};
    for (const auto& p : scan->grid_probes)
      for (std::size_t i = 0; i < p.eps_schedule.size(); ++i)
        probes.rows.push_back({p.lambda, std::string(to_string(p.side)), p.eps_schedule[i], p.norms[i]});
    rep.tables.push_back(std::move(probes));
    Table ev{"singularity_evidence", {"record", "lambda", "side", "eps", "norm"}, {}};
    for (std::size_t j = 0; j < scan->records.size(); ++j) {
      const auto& e = scan->records[j].evidence;
      for (std::size_t i = 0; i < e.eps_schedule.size(); ++i)
        ev.rows.push_back({static_cast<long long>(j), e.lambda, std::string(to_string(e.side)), e.eps_schedule[i],
                           e.norms[i]});
    }
    rep.tables.push_back(std::move(ev));
  }

  void resonances() {
    J out = J::object();
    if (!model->potential || model->potential->empty()) {
      out["skipped"] = "no potential";
      rep.doc["resonances"] = out;
      return;
    }
    const auto& pot = *model->potential;
    const auto& s = cfg.singular;
    Table scanT{"jost_scan", {"k", "abs_a"}, {}};
    for (int i = 1; i <= s.scan_points; ++i) {
      const double k = s.k_max * i / s.scan_points;
      scanT.rows.push_back({k, std::abs(jost_function(pot, k))});
    }
    rep.tables.push_back(std::move(scanT));
    const auto roots = find_real_resonances(pot, s.k_max, s.scan_points);
    Table rootT{"roots", {"k", "lambda", "multiplicity", "residual"}, {}};
    J arr = J::array();
    for (const auto& r : roots) {
      rootT.rows.push_back({r.k, r.lambda, static_cast<long long>(r.multiplicity), r.residual});
      J jr{{"k", num(r.k)}, {"lambda", num(r.lambda)}, {"multiplicity", r.multiplicity},
           {"residual", at_most(r.residual, 1e-8)}};
      if (scan && grid_step > 0.0 && !grid.empty() && r.lambda >= grid.front() && r.lambda <= grid.back()) {
        double best = INFINITY;
        for (const auto& rec : scan->records) best = std::min(best, std::abs(rec.lambda - r.lambda));
        jr["probe_distance"] = at_most(best, 2.0 * grid_step);
      }
      arr.push_back(jr);
    }
    rep.tables.push_back(std::move(rootT));
    out["roots"] = arr;
    rep.doc["resonances"] = out;
  }

  void regcalc() {
    const auto& r = cfg.regularizer;
    std::vector<SingularityRecord> recs;
    int nu_inf = 0;
    J out = J::object();
    out["enabled"] = r.enabled;
    if (r.enabled && scan) {
      recs = scan->records;
      nu_inf = scan->nu_inf;
      for (auto& rec : recs)
        for (const auto& [lambda, nu] : r.nu)
          if (std::abs(lambda - rec.lambda) <= 2.0 * grid_step) rec.nu = nu;
      recs.erase(std::remove_if(recs.begin(), recs.end(), [](const SingularityRecord& x) { return x.nu == 0; }),
                 recs.end());
    }
    if (r.enabled && r.nu_inf) nu_inf = *r.nu_inf;
    reg = make_regularizer(*model, recs, cls->eig.eigenvalues(), nu_inf, r.enabled ? r.z0 : std::nullopt);
    out["z0"] = cnum(reg->z0);
    out["nu_inf"] = reg->nu_inf;
    J factors = J::array();
    for (const auto& f : reg->singularities)
      factors.push_back(J{{"lambda", num(f.lambda)}, {"side", to_string(f.side)}, {"nu", f.nu}});
    out["factors"] = factors;
    if (r.enabled && r.resolution_of_identity) {
      const auto calc = full_band_calc(*model, *reg, *cls, default_calc_eps(*model, *cls, model->ess_band));
      const double roi = resolution_of_identity_residual(*model, *reg, data->Pi_disc, calc);
      out["calc_eps"] = num(calc.eps);
      out["resolution_of_identity"] = at_most(roi, reg->singularities.empty() ? 1e-3 : 1e-2);
    }
    rep.doc["regularizer"] = out;
  }

  ModalBasis& modal() {
    if (!basis) basis = std::make_unique<ModalBasis>(*model, *data);
    return *basis;
  }

  void waveops() {
    const auto& w = cfg.waveop;
    CookOptions opt = w.cook;
    opt.strict = false;
    ModalBasis& B = modal();
    J out = J::object();
    out["spectral_path"] = B.spectral();
    J kinds = J::array();
    Table tails{"cook_tails", {"kind", "t", "tail"}, {}};
    for (const auto& k : w.kinds) {
      const auto r = cook_wave_operator(*model, B, *reg, k, opt);
      J jk{{"kind", k.label()},
           {"T_used", num(r.T_used)},
           {"tail_norm", at_most(r.tail_norm, opt.tail_tol)},
           {"accepted", r.accepted},
           {"no_cauchy_decay", r.no_cauchy_decay},
           {"budget_limited", r.budget_limited},
           {"T_budget", num(r.T_budget)},
           {"intertwining_residual", at_most(r.intertwining_residual, 10.0 * opt.tail_tol)},
           {"min_sv_on_ac", recorded(r.min_sv_on_ac)}};
      kinds.push_back(jk);
      if (r.no_cauchy_decay) flag("waveop: NoCauchyDecay for " + k.label());
      for (std::size_t i = 0; i < r.tails.size(); ++i) tails.rows.push_back({k.label(), r.checkpoints[i], r.tails[i]});
    }
    out["kinds"] = kinds;
    rep.tables.push_back(std::move(tails));

    if (w.adjoint) {
      J adj = J::array();
      for (int sign : {+1, -1}) {
        const auto a = adjoint_pair_check(*model, B, *reg, sign, opt);
        adj.push_back(J{{"sign", sign},
                        {"adjoint_residual", at_most(a.adjoint_residual, std::max(a.budget, 1e-9))},
                        {"budget", num(a.budget)},
                        {"norms", J::array({num(a.norms[0]), num(a.norms[1]), num(a.norms[2]), num(a.norms[3])})},
                        {"norm_spread", at_most(a.norm_spread, std::max(2.0 * a.budget, 1e-9))},
                        {"kernel_residual", at_most(a.kernel_residual, 10.0 * opt.tail_tol)},
                        {"pass", a.pass}});
      }
      out["adjoint_pairs"] = adj;
    }

    if (w.completeness) {
      J comp = J::array();
      for (int sign : {+1, -1}) {
        const auto c = completeness_check(*model, B, *reg, opt, sign);
        comp.push_back(J{{"sign", sign},
                         {"hypothesis_holds", c.hypothesis_holds},
                         {"T", num(c.T)},
                         {"min_sv_on_ac", at_least(c.min_sv_on_ac, 0.1 * c.baseline_min_sv)},
                         {"baseline_min_sv", recorded(c.baseline_min_sv)},
                         {"composition_inverse", at_most(c.composition_inverse, 1e-2)},
                         {"composition_adjoint", at_most(c.composition_adjoint, 1e-2)},
                         {"composition_best", at_most(c.composition_best, 1e-2)},
                         {"similarity_residual", recorded(c.similarity_residual)}});
        if (!c.hypothesis_holds) flag("completeness: hypothesis fails for sign " + std::to_string(sign));
      }
      out["completeness"] = comp;
    }

    const Mat probes = probe_basis(model->dim(), opt.gaussians, cfg.seed);
    const auto sb = semigroup_bounds(B, w.semigroup_t, probes);
    out["semigroup"] = J{{"m1", at_least(sb.m1, 1e-12)}, {"m2", recorded(sb.m2)}, {"t_min", num(sb.t_min)},
                         {"t_max", num(sb.t_max)}};
    Table trace{"semigroup_trace", {"t", "min_ratio", "max_ratio"}, {}};
    const Mat U = B.Pi_ac() * probes;
    for (double t : w.semigroup_t) {
      const Mat E = B.evolve_ac(t, U);
      double lo = INFINITY, hi = 0.0;
      for (Eigen::Index j = 0; j < U.cols(); ++j) {
        const double n = U.col(j).norm();
        if (n == 0.0) continue;
        lo = std::min(lo, E.col(j).norm() / n);
        hi = std::max(hi, E.col(j).norm() / n);
      }
      trace.rows.push_back({t, lo, hi});
    }
    rep.tables.push_back(std::move(trace));
    rep.doc["waveop"] = out;
  }

  void smoothness() {
    const auto& w = cfg.waveop;
    ModalBasis& B = modal();
    SmoothnessOptions so;
    so.T = w.smoothness_T;
    so.seed = cfg.seed;
    so.strict = false;
    J arr = J::array();
    for (int side : w.smoothness_sides) {
      const auto s = kato_smoothness(*model, B, *reg, side, so);
      arr.push_back(J{{"side", side},
                      {"T", num(s.T)},
                      {"constant_time_domain", recorded(s.constant_time_domain)},
                      {"constant_half_T", recorded(s.constant_half_T)},
                      {"tail_fraction", at_most(s.tail_fraction, so.tail_fraction)},
                      {"constant_freq_domain", recorded(s.constant_freq_domain)},
                      {"eps", num(s.eps)},
                      {"ratio", within(s.ratio, 0.5, 2.0)},
                      {"c0_H0", recorded(s.c0_H0)}});
      if (!s.tail_converged) flag("smoothness: TailNotConverged for side " + std::to_string(side));
    }
    rep.doc["smoothness"] = arr;
  }
};

}  // namespace

RunReport run_scenario(const ScenarioConfig& config, Stage stage) {
  RunReport rep;
  J& doc = rep.doc;
  doc["report"] = "nss-run";
  doc["version"] = kVersion;
  doc["scenario"] = config.name;
  doc["config"] = std::filesystem::path(config.source).filename().string();
  doc["stage"] = to_string(stage);
  doc["seed"] = config.seed;
  doc["flags"] = J::array();
  doc["errors"] = J::array();

  Pipeline p(config, rep);
  const bool all = stage == Stage::All;
  const bool need_spectral = stage != Stage::Validate && stage != Stage::Singularities && stage != Stage::Resonances;
  const bool need_singular = (stage == Stage::Singularities || stage == Stage::Waveop || stage == Stage::Smoothness ||
                              all) &&
                             config.singular.enabled && config.model.kind == "schrodinger";
  const bool need_reg = stage == Stage::Waveop || stage == Stage::Smoothness || all;

  bool ok = p.stage("models", [&] { p.models(); });
  if (ok && (stage == Stage::Validate || all)) p.stage("hypotheses", [&] { p.hypotheses(); });
  if (ok && need_spectral) ok = p.stage("spectral", [&] { p.spectral(); });
  if (ok && need_singular) ok = p.stage("singular", [&] { p.singular(); });
  if (ok && (stage == Stage::Resonances || all) && config.model.kind == "schrodinger")
    p.stage("resonances", [&] { p.resonances(); });
  if (ok && need_reg) ok = p.stage("regcalc", [&] { p.regcalc(); });
  if (ok && (stage == Stage::Waveop || all)) p.stage("waveop", [&] { p.waveops(); });
  if (ok && (stage == Stage::Smoothness || all)) p.stage("smoothness", [&] { p.smoothness(); });

  doc["status"] = rep.errored ? "errored" : "ok";
  return rep;
}

}  // namespace nss
