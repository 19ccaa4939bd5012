#include "doctest.h"
#include "nss/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nss;
using J = nlohmann::ordered_json;

namespace {

const std::string kScenarios = NSS_SOURCE_DIR "/scenarios/";
const std::string kGolden = NSS_SOURCE_DIR "/tests/golden/free_report.json";

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  return "";
}

// Same keys in the same order; numbers agree to rel 1e-9 or abs 1e-12.
void compare_json(const J& a, const J& b, const std::string& path) {
  CAPTURE(path);
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    CHECK(std::abs(x - y) <= std::max(1e-12, 1e-9 * std::abs(y)));
    return;
  }
  REQUIRE(a.type() == b.type());
  if (a.is_object()) {
    REQUIRE(a.size() == b.size());
    auto ib = b.begin();
    for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
      REQUIRE(ia.key() == ib.key());
      compare_json(ia.value(), ib.value(), path + "." + ia.key());
    }
  } else if (a.is_array()) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) compare_json(a[i], b[i], path + "[" + std::to_string(i) + "]");
  } else {
    CHECK(a == b);
  }
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(R"yaml(
name: t
seed: 7
model:
  L: 10
  N: 64
  potential:
    - {a: -1, b: 1, value: [-2, -0.5]}
waveop:
  kinds: ["W-(H0,H*)"]
  T_max: 30
)yaml");
  CHECK(c.name == "t");
  CHECK(c.seed == 7);
  CHECK(c.waveop.cook.seed == 7);
  CHECK(c.model.potential.at(0).value == cplx(-2, -0.5));
  CHECK(c.waveop.kinds.at(0).pair == WavePair::H0_Hstar);
  CHECK(c.waveop.kinds.at(0).sign == -1);
  CHECK(c.waveop.cook.T_max == 30.0);
  CHECK(parse_config("").seed == 42);
}

TEST_CASE("malformed configs name the field and line") {
  const auto outside = config_error("model:\n  L: 5\n  potential:\n    - {a: 4, b: 6, value: 1}\n");
  CHECK(outside.find("t.yaml:4") != std::string::npos);
  CHECK(outside.find("model.potential[0]") != std::string::npos);
  CHECK(config_error("model:\n  Nx: 5\n").find("model.Nx: unknown key") != std::string::npos);
  CHECK(config_error("output:\n  format: xml\n").find("output.format") != std::string::npos);
  CHECK(config_error("waveop:\n  kinds: [\"W(H,H0)\"]\n").find("waveop.kinds[0]") != std::string::npos);
  CHECK(config_error("model: [1, 2\n").find("t.yaml:") != std::string::npos);
  CHECK(config_error("regularizer:\n  z0: [1, 0]\n").find("regularizer.z0") != std::string::npos);
}

TEST_CASE("singular grid outside the band is a configuration error") {
  auto c = parse_config("model: {L: 10, N: 32}\nsingular:\n  grid: {lo: -5, hi: 1, step: 0.5}\n");
  const auto rep = run_scenario(c, Stage::Singularities);
  CHECK(rep.errored);
  REQUIRE(rep.doc["errors"].size() == 1);
  CHECK(rep.doc["errors"][0]["stage"] == "singular");
  CHECK(rep.doc["errors"][0]["code"] == "ConfigError");
}

TEST_CASE("CSV follows RFC 4180 quoting") {
  Table t{"t", {"a", "b,c"}, {{1LL, std::string("x\"y")}, {2.5, std::string("line\nbreak")}}};
  CHECK(to_csv(t) == "a,\"b,c\"\r\n1,\"x\"\"y\"\r\n2.5,\"line\nbreak\"\r\n");
  CHECK(to_json_lines(t) == "{\"a\":1,\"b,c\":\"x\\\"y\"}\n{\"a\":2.5,\"b,c\":\"line\\nbreak\"}\n");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("thread cap from NSS_THREADS") {
  setenv("NSS_THREADS", "1", 1);
  CHECK(thread_count() == 1);
  setenv("NSS_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  unsetenv("NSS_THREADS");
  CHECK(thread_count() >= 1);
}

TEST_CASE("free scenario: golden report and byte-identical reruns") {
  const auto cfg = load_config(kScenarios + "free.yaml");
  const auto a = run_scenario(cfg);
  CHECK_FALSE(a.errored);
  CHECK(a.doc["status"] == "ok");
  for (const auto& k : a.doc["waveop"]["kinds"]) {
    CHECK(k["tail_norm"]["value"] == 0.0);
    CHECK(k["accepted"] == true);
  }

  std::ifstream in(kGolden);
  REQUIRE(in.good());
  compare_json(a.doc, J::parse(in), "$");

  const auto b = run_scenario(cfg);
  CHECK(a.doc.dump() == b.doc.dump());
  REQUIRE(a.tables.size() == b.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) CHECK(to_csv(a.tables[i]) == to_csv(b.tables[i]));

  const auto dir = std::filesystem::temp_directory_path() / "nss_cli_test";
  write_outputs(a, dir.string(), "json-lines");
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "cook_tails.jsonl"));
  CHECK(std::filesystem::exists(dir / "timings.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("validate subcommand on the free scenario") {
  const auto rep = run_scenario(load_config(kScenarios + "free.yaml"), Stage::Validate);
  CHECK_FALSE(rep.errored);
  CHECK(rep.doc.contains("hypotheses"));
  CHECK_FALSE(rep.doc.contains("waveop"));
  CHECK(rep.doc["hypotheses"]["discrete_count"] == 0);
}
