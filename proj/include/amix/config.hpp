#pragma once

// Run configuration: a strict JSON schema over the library's config structs.
// Every key is optional and falls back to the documented default, unknown
// keys are rejected, and errors name the offending field path.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amix/data.hpp"
#include "amix/error.hpp"
#include "amix/eval.hpp"
#include "amix/training.hpp"

namespace amix {

/// Schema violation at a JSON field path such as "gan.optimizer.lr".
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : InvalidArgument((path.empty() ? std::string("config") : path) + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct DataConfig {
  /// nine-gaussians, three-circles, modes, csv or idx.
  std::string source = "nine-gaussians";
  std::size_t n = 1000;
  // modes
  std::vector<std::array<double, 2>> centers;
  double std = 0.05;
  // csv / idx
  std::string path;
  std::string labels_path;
  bool header = true;
  std::optional<std::string> label_column;

  void validate(const std::string& at) const;
};

/// Dataset described by `cfg`; generated sources draw from `rng`.
Dataset make_dataset(const DataConfig& cfg, Rng& rng);

struct EvalConfig {
  /// lipschitz, confidence-map, mode-metrics, compactness, ood or attack.
  std::string instrument = "lipschitz";
  std::string checkpoint;
  std::size_t pairs = 1000;
  /// Generator samples drawn for mode metrics and Lipschitz pools.
  std::size_t samples = 2500;
  GridSpec grid{};
  AttackConfig attack{};
  std::optional<DataConfig> ood_data;

  void validate(const std::string& at) const;
};

const std::vector<std::string>& eval_instruments();

struct RunConfig {
  std::uint64_t seed = 0;
  /// Output directory; empty means the command-line value or "out".
  std::string out;
  std::optional<DataConfig> data;
  std::optional<GanConfig> gan;
  std::optional<ClassifierConfig> classifier;
  std::optional<EvalConfig> eval;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON with every default filled in; sections that were absent
/// stay absent. Keys are sorted, so equal configs give equal bytes.
std::string dump_run_config(const RunConfig& cfg);
/// FNV-1a of dump_run_config with `out` cleared, as 16 lowercase hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace amix
