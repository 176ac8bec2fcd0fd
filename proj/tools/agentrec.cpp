#include <CLI11.hpp>

#include <iostream>

#include "agentrec/error.hpp"
#include "agentrec/scenario.hpp"

namespace {

int print_error(const agentrec::Error& e) {
  nlohmann::json record = {{"error", {{"code", e.name()}, {"message", e.what()}}}};
  std::cerr << record.dump() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic recommender scenarios"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(agentrec::kVersion));

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string format = "table";

  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run->add_option("config", config, "Scenario config (JSON)")->required();
  auto* out_opt = run->add_option("--out", out, "Output directory (overrides the config)");
  auto* seed_opt = run->add_option("--seed", seed, "Global seed (overrides the config)");
  run->add_option("--format", format, "Report printed to stdout")->check(CLI::IsMember({"table", "jsonlines"}));

  auto* validate = app.add_subcommand("validate", "List problems with a scenario config");
  validate->add_option("config", config, "Scenario config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    try {
      auto findings = agentrec::validate_config(config);
      for (const auto& f : findings) std::cout << f.field << ": " << f.rule << "\n";
      return findings.empty() ? 0 : 2;
    } catch (const agentrec::Error& e) {
      return print_error(e);
    }
  }

  agentrec::ScenarioOptions options;
  if (*out_opt) options.out = out;
  if (*seed_opt) options.seed = seed;
  options.format = agentrec::parse_report_format(format);
  auto outcome = agentrec::run_scenario(config, options);
  if (outcome.error) {
    nlohmann::json record = {{"error", {{"code", outcome.error->code}, {"message", outcome.error->message}}}};
    std::cerr << record.dump() << "\n";
  } else {
    std::cout << outcome.stdout_text;
  }
  return outcome.exit_code;
}
