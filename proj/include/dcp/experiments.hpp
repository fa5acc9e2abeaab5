#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcp/initial_law.hpp"
#include "dcp/model.hpp"

namespace dcp {

/// Parsed experiment configuration: flat dotted keys ("model.lambda") with
/// string values, as read from the sectioned key = value text format.
struct ExperimentConfig {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) != 0; }
  std::string get(const std::string& key, const std::string& dflt = "") const;
  double get_double(const std::string& key, double dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  std::size_t get_size(const std::string& key, std::size_t dflt) const;
  int get_int(const std::string& key, int dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  std::string kind() const { return get("kind"); }
  std::uint64_t seed() const { return get_u64("seed", 1); }
  int threads() const { return get_int("threads", 0); }

  /// Model parameters from model.lambda, model.r and model.alpha or
  /// model.rho (alpha = rho * lambda). Empty when required keys are missing.
  std::optional<ModelParams> model() const;
  std::optional<InitialLaw> initial_law() const;

  /// Output directory: `output` key, else $DCP_OUTPUT_ROOT/<kind>, else
  /// out/<kind>.
  std::filesystem::path output_dir() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Canonical text form (sorted sections and keys); parses back to the same
/// key-value map.
std::string serialize_config(const ExperimentConfig& cfg);

/// JSON mirror (sections become objects) written as config.json next to the
/// other artifacts.
std::string config_to_json(const ExperimentConfig& cfg);

/// Never mutates cfg. Error lines start with "error:"; everything else is
/// informational (regime, stability class, omega*, scaling health, ...).
std::vector<std::string> validate(const ExperimentConfig& cfg);

inline bool has_errors(const std::vector<std::string>& diags) {
  for (const auto& d : diags)
    if (d.rfind("error:", 0) == 0) return true;
  return false;
}

/// Runs the experiment and writes config.json, meta.json and the
/// kind-specific CSV tables into the output directory.
/// Exit status: 0 success, 1 runtime failure, 2 invalid configuration.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace dcp
