#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dcp/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dcp - mean-field dissipative contact process toolkit"};
  app.require_subcommand(1);

  std::string run_cfg, validate_cfg, describe_cfg;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
  run_cmd->add_option("config", run_cfg, "config file")->required();
  auto* val_cmd = app.add_subcommand("validate", "check a config and report diagnostics");
  val_cmd->add_option("config", validate_cfg, "config file")->required();
  auto* desc_cmd = app.add_subcommand("describe",
                                      "print regime diagnostics for a config");
  desc_cmd->add_option("config", describe_cfg, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      return dcp::run_experiment(dcp::load_config(run_cfg));
    }
    const std::string& path = val_cmd->parsed() ? validate_cfg : describe_cfg;
    const auto cfg = dcp::load_config(path);
    const auto diags = dcp::validate(cfg);
    for (const auto& d : diags) std::cout << d << "\n";
    if (val_cmd->parsed() && dcp::has_errors(diags)) return 2;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
