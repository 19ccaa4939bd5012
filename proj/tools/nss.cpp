#include "nss/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace nss;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (overrides output.directory)");
  cmd->add_option("--format", f.format, "table format")->check(CLI::IsMember({"csv", "json-lines"}));
  cmd->add_option("--seed", f.seed, "probe seed (overrides seed)");
  cmd->add_flag("--quiet", f.quiet, "print nothing on success");
}

int execute(Stage stage, const Flags& f) {
  ScenarioConfig cfg = load_config(f.config);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.waveop.cook.seed = *f.seed;
  }
  const std::string out = f.out.empty() ? cfg.output.directory : f.out;
  const std::string format = f.format.empty() ? cfg.output.format : f.format;
  const RunReport rep = run_scenario(cfg, stage);
  write_outputs(rep, out, format);
  if (!f.quiet || rep.errored) {
    std::cout << cfg.name << ": " << to_string(stage) << " " << rep.doc["status"].get<std::string>() << ", "
              << rep.doc["flags"].size() << " flag(s), report in " << out << "\n";
    for (const auto& fl : rep.doc["flags"]) std::cout << "  flag: " << fl.get<std::string>() << "\n";
    for (const auto& e : rep.doc["errors"])
      std::cerr << "  error in " << e["stage"].get<std::string>() << ": " << e["message"].get<std::string>() << "\n";
  }
  return rep.errored ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized wave operators and spectral singularities on discretized models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Flags flags;
  const std::pair<Stage, const char*> commands[] = {
      {Stage::Validate, "check the model hypotheses"},
      {Stage::Spectrum, "classify the spectrum and build the projections"},
      {Stage::Singularities, "scan the band for spectral singularities"},
      {Stage::Resonances, "scan the Jost function for real resonances"},
      {Stage::Waveop, "compute the wave operators and completeness diagnostics"},
      {Stage::Smoothness, "evaluate the Kato smoothness integrals"},
      {Stage::All, "run every stage"},
  };
  std::optional<Stage> chosen;
  for (const auto& [stage, help] : commands) {
    CLI::App* cmd = app.add_subcommand(to_string(stage), help);
    add_shared(cmd, flags);
    cmd->callback([&chosen, s = stage] { chosen = s; });
  }
  CLI11_PARSE(app, argc, argv);
  try {
    return execute(*chosen, flags);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}
