#pragma once

#include "advforge/config.hpp"

#include <iosfwd>
#include <string>

namespace advforge {

/// File layout of one experiment directory.
struct OutPaths {
  std::string out_dir;

  std::string models_dir() const { return out_dir + "/models"; }
  std::string model_file(const std::string& id) const { return models_dir() + "/" + id + ".advzoo"; }
  std::string manifest() const { return out_dir + "/zoo_manifest.json"; }
  std::string eval_images() const { return out_dir + "/eval_images.idx"; }
  std::string eval_labels() const { return out_dir + "/eval_labels.idx"; }
  std::string eval_meta() const { return out_dir + "/eval_meta.json"; }
  std::string records_csv() const { return out_dir + "/records.csv"; }
  std::string records_journal() const { return out_dir + "/records.partial.csv"; }
  std::string adv_dir() const { return out_dir + "/adv"; }
  std::string adv_file(const std::string& attack, const std::string& model_id) const {
    return adv_dir() + "/" + attack + "_" + model_id + ".idx";
  }
  std::string report_dir() const { return out_dir + "/report"; }
};

/// Subcommand drivers. All return a process exit code and log progress to
/// `log` honoring the ADVFORGE_LOG level.
int run_train(const RunConfig& config, std::ostream& log);
int run_select(const RunConfig& config, std::ostream& log);
int run_attack(const RunConfig& config, bool resume, int jobs, std::ostream& log);
int run_report(const RunConfig& config, std::ostream& log);
int run_verify(const RunConfig& config, std::ostream& log);

/// Loads models in manifest order.
std::vector<Model> load_zoo(const OutPaths& paths);
EvalSet load_eval_set(const OutPaths& paths);

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel log_level();  // from ADVFORGE_LOG, default info

}  // namespace advforge
