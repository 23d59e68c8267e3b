#pragma once

#include "advforge/bench.hpp"
#include "advforge/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advforge {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Declarative experiment description; see experiment.example.
struct RunConfig {
  // Dataset: either IDX paths or a synthetic generator spec.
  std::optional<std::string> idx_images;
  std::optional<std::string> idx_labels;
  std::optional<SyntheticSpec> synthetic;
  int num_classes = 10;

  std::vector<ZooEntry> zoo;
  int per_class = 10;
  std::vector<AttackType> attacks;
  WarpModel warp = WarpModel::identity;
  double pass_threshold = 0.99;  // PASS-stratified matrix variant
  std::string out_dir = "out";
  std::uint64_t global_seed = 0;
};

RunConfig parse_config(const std::string& json_text);
std::string serialize_config(const RunConfig& config);
RunConfig load_config_file(const std::string& path);

/// Full validation before any side effects: referenced paths must exist,
/// attack names and zoo entries must be well formed.
void validate_config(const RunConfig& config);

LabeledDataset load_dataset(const RunConfig& config);

}  // namespace advforge
