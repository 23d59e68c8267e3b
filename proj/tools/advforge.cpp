#include "advforge/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"advforge: minimal-perturbation adversarial example workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int jobs = 1;
  bool resume = false;

  app.add_option("--config", config_path, "experiment config file (JSON)")->required();
  app.add_option("--out", out_override, "override the config's output directory");
  app.add_option("--seed", seed_override, "override the config's global seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--jobs", jobs, "worker pool size for attack generation")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train the model zoo and write containers");
  auto* select = app.add_subcommand("select", "select the all-correct evaluation set");
  auto* attack = app.add_subcommand("attack", "run the attack sweep, writing records CSV");
  attack->add_flag("--resume", resume, "continue an interrupted sweep from the journal");
  std::string attacks_filter;
  attack->add_option("--attacks", attacks_filter, "comma-separated attack subset (e.g. FGS,HC1)");
  auto* report = app.add_subcommand("report", "compute matrices, summaries, and plot data");
  auto* verify = app.add_subcommand("verify", "replay stored adversarial images and re-check matrix counts");

  CLI11_PARSE(app, argc, argv);

  try {
    advforge::RunConfig config = advforge::load_config_file(config_path);
    if (!out_override.empty()) config.out_dir = out_override;
    if (seed_set) config.global_seed = seed_override;
    if (!attacks_filter.empty()) {
      std::vector<advforge::AttackType> subset;
      size_t pos = 0;
      while (pos <= attacks_filter.size()) {
        const size_t comma = attacks_filter.find(',', pos);
        const std::string name = attacks_filter.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!name.empty()) subset.push_back(advforge::attack_from_name(name));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      config.attacks = subset;
    }

    if (train->parsed()) return advforge::run_train(config, std::cout);
    if (select->parsed()) return advforge::run_select(config, std::cout);
    if (attack->parsed()) return advforge::run_attack(config, resume, jobs, std::cout);
    if (report->parsed()) return advforge::run_report(config, std::cout);
    if (verify->parsed()) return advforge::run_verify(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
