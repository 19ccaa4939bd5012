#pragma once

#include "nss/waveop.hpp"

#include "json.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nss {

inline constexpr const char* kVersion = "0.1.0";

struct PieceConfig {
  double a = 0.0, b = 0.0;
  cplx value;
  // When set, value is replaced by the Newton-tuned c with a(k_star) = 0,
  // starting from `value`.
  std::optional<double> tune_k_star;
};

struct ModelConfig {
  std::string kind = "schrodinger";  // schrodinger | toy
  double L = 25.5;
  int N = 256;
  double delta = 2.0;
  std::vector<PieceConfig> potential;
  ToySpec toy;
};

struct SingularConfig {
  bool enabled = true;
  // lambda grid; NaN selects band.lo + {0.01, 0.1} band length, step 0.001 length
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  double step = std::numeric_limits<double>::quiet_NaN();
  ScheduleOptions schedule;
  double k_max = 4.0;
  int scan_points = 400;
};

struct RegularizerConfig {
  bool enabled = true;
  std::optional<cplx> z0;
  std::vector<std::pair<double, int>> nu;  // (lambda, nu) overrides, matched within 2 grid steps
  std::optional<int> nu_inf;
  bool resolution_of_identity = true;
};

struct WaveopConfig {
  std::vector<WaveKind> kinds = {{WavePair::H_H0, +1}, {WavePair::H_H0, -1}};
  CookOptions cook;
  bool completeness = true;
  bool adjoint = true;
  std::vector<double> semigroup_t = {0, 5, 10, 20, 50, 100};
  std::vector<int> smoothness_sides = {-1, +1};
  double smoothness_T = 80.0;
};

struct OutputConfig {
  std::string directory = "out";
  std::string format = "csv";  // csv | json-lines
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string source;  // file the config came from
  ModelConfig model;
  SingularConfig singular;
  RegularizerConfig regularizer;
  WaveopConfig waveop;
  OutputConfig output;
  std::uint64_t seed = 42;
};

// ConfigError messages carry "<source>:<line>: <field>: <problem>".
ScenarioConfig parse_config(const std::string& text, const std::string& source = "<string>");
ScenarioConfig load_config(const std::string& path);

WaveKind parse_wave_kind(const std::string& label);

enum class Stage { Validate, Spectrum, Singularities, Resonances, Waveop, Smoothness, All };
Stage parse_stage(const std::string& name);
const char* to_string(Stage s);

using Cell = std::variant<long long, double, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct RunReport {
  nlohmann::ordered_json doc;
  std::vector<Table> tables;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage, kept out of doc
  bool errored = false;
};

// Runs the stages `stage` needs, in the order models, spectral, singular,
// regcalc, waveop. A stage that throws is recorded with its name and stops the
// stages depending on it; flags never stop a run.
RunReport run_scenario(const ScenarioConfig& config, Stage stage = Stage::All);

std::string format_number(double x);
std::string to_csv(const Table& table);
std::string to_json_lines(const Table& table);
// Writes report.json, one table file per table and timings.json.
void write_outputs(const RunReport& report, const std::string& directory, const std::string& format);

}  // namespace nss
