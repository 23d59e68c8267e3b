#include "advforge/pipeline.hpp"

#include "advforge/model_io.hpp"
#include "advforge/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace advforge {

namespace fs = std::filesystem;

LogLevel log_level() {
  const char* env = std::getenv("ADVFORGE_LOG");
  if (!env) return LogLevel::info;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "warn") return LogLevel::warn;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

namespace {

void log_at(std::ostream& os, LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (static_cast<int>(level) <= static_cast<int>(log_level()))
    os << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

LabeledDataset holdout_tail(const LabeledDataset& ds, double fraction) {
  const size_t n = ds.size();
  const size_t n_holdout =
      std::min(n - 1, static_cast<size_t>(std::llround(static_cast<double>(n) * fraction)));
  LabeledDataset tail;
  tail.num_classes = ds.num_classes;
  for (size_t i = n - n_holdout; i < n; ++i) {
    tail.images.push_back(ds.images[i]);
    tail.labels.push_back(ds.labels[i]);
  }
  return tail;
}

struct SweepTask {
  size_t model_idx, image_idx;
  AttackType attack;
};

std::vector<SweepTask> canonical_tasks(const std::vector<Model>& zoo, const EvalSet& eval_set,
                                       const std::vector<AttackType>& attacks) {
  std::vector<SweepTask> tasks;
  for (size_t mi = 0; mi < zoo.size(); ++mi)
    for (AttackType attack : attacks)
      for (size_t ii = 0; ii < eval_set.size(); ++ii) tasks.push_back({mi, ii, attack});
  return tasks;
}

std::string task_key(const std::string& image_id, const std::string& model_id,
                     AttackType attack) {
  return image_id + "|" + model_id + "|" + attack_name(attack);
}

// Reconstructs the adversarial image of a successful record from the eval
// image and the recorded step size (the direction is deterministic).
Tensor rebuild_adv_image(const Model& model, const Tensor& image, const AdversarialRecord& rec) {
  Direction dir = attack_direction(model, image, rec.true_label, rec.attack);
  const double unit = rec.attack == AttackType::FGS ? 1.0 : 0.01;
  const long steps = std::lround(rec.alpha / unit);
  return quantize_clip(
      Tensor(image.shape(), image.data() + static_cast<double>(steps) * unit * dir.vector.data()));
}

// Pairs each successful record with its stored adversarial image from the
// per-(attack, model) IDX dumps, in record order.
std::vector<Tensor> load_adv_images(const OutPaths& paths,
                                    const std::vector<AdversarialRecord>& records) {
  std::map<std::string, std::vector<Tensor>> stacks;
  std::map<std::string, size_t> cursors;
  std::vector<Tensor> adv(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.success) continue;
    const std::string key = attack_name(r.attack) + "_" + r.source_model_id;
    auto it = stacks.find(key);
    if (it == stacks.end()) {
      const std::string path = paths.adv_file(attack_name(r.attack), r.source_model_id);
      it = stacks.emplace(key, read_idx_images(path)).first;
      cursors[key] = 0;
    }
    if (cursors[key] >= it->second.size())
      throw std::runtime_error("adversarial image dump " + key +
                               " has fewer images than successful records");
    adv[i] = it->second[cursors[key]++];
  }
  for (const auto& [key, stack] : stacks)
    if (cursors[key] != stack.size())
      throw std::runtime_error("adversarial image dump " + key +
                               " has more images than successful records");
  return adv;
}

struct ReportData {
  std::vector<PortabilityMatrix> matrices;
  std::vector<PortabilityMatrix> pass_matrices;
  std::vector<RobustnessSummary> summaries;
  std::vector<CorrelationResult> correlations;
  std::string notes;
};

ReportData compute_report(const RunConfig& config, const std::vector<Model>& zoo,
                          const std::vector<AdversarialRecord>& records,
                          const std::vector<Tensor>& adv_images) {
  ReportData data;
  data.summaries = robustness_summary(records);
  std::string notes;
  notes += "std columns are population standard deviations\n";
  notes += "portability denominator = successful source adversarials\n";
  for (AttackType attack : config.attacks) {
    data.matrices.push_back(portability_matrix(records, adv_images, zoo, attack));
    data.pass_matrices.push_back(
        portability_matrix(records, adv_images, zoo, attack, config.pass_threshold));
    data.correlations.push_back(accuracy_robustness_correlation(zoo, data.summaries, attack));
    const FamilyContrast contrast = family_portability_contrast(data.matrices.back(), zoo);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s: mean_offdiag=%.4f within_family=%s cross_family=%s\n",
                  attack_name(attack).c_str(), mean_offdiagonal(data.matrices.back()),
                  contrast.within_family_mean
                      ? std::to_string(*contrast.within_family_mean).c_str()
                      : "n/a",
                  contrast.cross_family_mean ? std::to_string(*contrast.cross_family_mean).c_str()
                                             : "n/a");
    notes += buf;
  }
  double lo = 1.0, hi = 0.0;
  for (const Model& m : zoo) {
    lo = std::min(lo, m.top1_error().value_or(0.0));
    hi = std::max(hi, m.top1_error().value_or(0.0));
  }
  if (hi - lo < 0.02)
    notes += "warning: accuracy spread under 2 points, correlation analysis underpowered\n";
  data.notes = notes;
  return data;
}

}  // namespace

std::vector<Model> load_zoo(const OutPaths& paths) {
  std::ifstream in(paths.manifest());
  if (!in) throw std::runtime_error("cannot open zoo manifest " + paths.manifest() +
                                    " (run the train subcommand first)");
  nlohmann::json manifest = nlohmann::json::parse(in);
  std::vector<Model> zoo;
  for (const auto& entry : manifest.at("models"))
    zoo.push_back(load_model(paths.model_file(entry.at("id").get<std::string>())));
  return zoo;
}

EvalSet load_eval_set(const OutPaths& paths) {
  EvalSet set;
  set.images = read_idx_images(paths.eval_images());
  const auto labels = read_idx_labels(paths.eval_labels());
  set.labels.assign(labels.begin(), labels.end());
  std::ifstream in(paths.eval_meta());
  if (!in) throw std::runtime_error("cannot open " + paths.eval_meta());
  nlohmann::json meta = nlohmann::json::parse(in);
  set.ids = meta.at("ids").get<std::vector<std::string>>();
  set.per_class = meta.at("per_class").get<int>();
  for (const auto& [cls, missing] : meta.at("shortfall").items())
    set.shortfall[std::stoi(cls)] = missing.get<int>();
  if (set.ids.size() != set.images.size() || set.labels.size() != set.images.size())
    throw std::runtime_error("inconsistent eval set files under " + paths.out_dir);
  return set;
}

int run_train(const RunConfig& config, std::ostream& log) {
  validate_config(config);
  const OutPaths paths{config.out_dir};
  LabeledDataset dataset = load_dataset(config);
  if (dataset.empty()) throw std::runtime_error("dataset is empty");
  const std::vector<int> input_shape = dataset.images[0].shape();

  log_at(log, LogLevel::info, "training zoo of " + std::to_string(config.zoo.size()) + " models");
  ZooBuildResult zoo = build_zoo(config.zoo, input_shape, dataset.num_classes, dataset);
  for (const auto& failure : zoo.failures) log_at(log, LogLevel::error, "training failed: " + failure);
  if (zoo.narrow_accuracy_spread)
    log_at(log, LogLevel::warn, "zoo accuracy spread is under 2 percentage points");

  fs::create_directories(paths.models_dir());
  nlohmann::json manifest;
  nlohmann::json models = nlohmann::json::array();
  const int topk = std::min(5, dataset.num_classes);
  for (size_t i = 0; i < zoo.models.size(); ++i) {
    const Model& m = zoo.models[i];
    save_model(m, paths.model_file(m.id()));
    double topk_error = 0.0;
    for (const auto& entry : config.zoo)
      if (entry.id == m.id()) {
        topk_error = evaluate(m, holdout_tail(dataset, entry.hyper.holdout_fraction), topk);
        break;
      }
    nlohmann::json mj;
    mj["id"] = m.id();
    mj["family"] = m.family();
    mj["seed"] = m.seed();
    mj["top1_error"] = m.top1_error().value_or(0.0);
    mj["top" + std::to_string(topk) + "_error"] = topk_error;
    models.push_back(std::move(mj));
    log_at(log, LogLevel::info,
           m.id() + ": top1_error=" + std::to_string(m.top1_error().value_or(0.0)));
  }
  manifest["models"] = std::move(models);
  write_text_file(paths.manifest(), manifest.dump(2) + "\n");
  return zoo.failures.empty() ? 0 : 1;
}

int run_select(const RunConfig& config, std::ostream& log) {
  validate_config(config);
  const OutPaths paths{config.out_dir};
  LabeledDataset dataset = load_dataset(config);
  std::vector<Model> zoo = load_zoo(paths);
  EvalSet set = select_eval_set(zoo, dataset, config.per_class);
  log_at(log, LogLevel::info, "selected " + std::to_string(set.size()) + " evaluation images");
  for (const auto& [cls, missing] : set.shortfall)
    log_at(log, LogLevel::warn, "class " + std::to_string(cls) + " short by " +
                                    std::to_string(missing) + " images");
  write_idx_images(paths.eval_images(), set.images);
  write_idx_labels(paths.eval_labels(), set.labels);
  nlohmann::json meta;
  meta["ids"] = set.ids;
  meta["per_class"] = set.per_class;
  nlohmann::json shortfall = nlohmann::json::object();
  for (const auto& [cls, missing] : set.shortfall) shortfall[std::to_string(cls)] = missing;
  meta["shortfall"] = std::move(shortfall);
  write_text_file(paths.eval_meta(), meta.dump(2) + "\n");
  return 0;
}

int run_attack(const RunConfig& config, bool resume, int jobs, std::ostream& log) {
  validate_config(config);
  const OutPaths paths{config.out_dir};
  std::vector<Model> zoo = load_zoo(paths);
  EvalSet eval_set = load_eval_set(paths);
  const auto tasks = canonical_tasks(zoo, eval_set, config.attacks);

  std::map<std::string, AdversarialRecord> done;
  const bool journal_existed = resume && fs::exists(paths.records_journal());
  if (journal_existed) {
    for (auto& rec : read_records_csv(paths.records_journal()))
      done.emplace(task_key(rec.image_id, rec.source_model_id, rec.attack), std::move(rec));
    log_at(log, LogLevel::info,
           "resuming: " + std::to_string(done.size()) + " of " + std::to_string(tasks.size()) +
               " records found in journal");
  }

  std::ofstream journal(paths.records_journal(),
                        journal_existed ? std::ios::app : std::ios::trunc);
  if (!journal) throw std::runtime_error("cannot write " + paths.records_journal());
  if (!journal_existed) journal << records_csv_header() << '\n';

  std::vector<AdversarialRecord> records(tasks.size());
  std::vector<Tensor> adv_images(tasks.size());
  std::mutex journal_mutex;

  auto run_task = [&](size_t t) {
    const SweepTask& task = tasks[t];
    const Model& model = zoo[task.model_idx];
    const Tensor& image = eval_set.images[task.image_idx];
    const std::string& image_id = eval_set.ids[task.image_idx];
    const auto it = done.find(task_key(image_id, model.id(), task.attack));
    if (it != done.end()) {
      records[t] = it->second;
      if (records[t].success) adv_images[t] = rebuild_adv_image(model, image, records[t]);
      return;
    }
    records[t] = attack_one(model, image, eval_set.labels[task.image_idx], task.attack,
                            config.warp, image_id, &adv_images[t]);
    std::lock_guard<std::mutex> lock(journal_mutex);
    journal << record_csv_row(records[t]) << '\n';
    journal.flush();
  };

  if (jobs <= 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (int j = 0; j < jobs; ++j)
      workers.emplace_back([&] {
        for (size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) run_task(t);
      });
    for (auto& w : workers) w.join();
  }
  journal.close();

  write_records_csv(paths.records_csv(), records);
  fs::create_directories(paths.adv_dir());
  for (size_t mi = 0; mi < zoo.size(); ++mi) {
    for (AttackType attack : config.attacks) {
      std::vector<Tensor> dump;
      for (size_t t = 0; t < tasks.size(); ++t)
        if (tasks[t].model_idx == mi && tasks[t].attack == attack && records[t].success)
          dump.push_back(adv_images[t]);
      write_idx_images(paths.adv_file(attack_name(attack), zoo[mi].id()), dump);
    }
  }
  fs::remove(paths.records_journal());

  size_t successes = 0;
  for (const auto& r : records) successes += r.success ? 1 : 0;
  log_at(log, LogLevel::info, std::to_string(successes) + "/" + std::to_string(records.size()) +
                                  " generation attempts succeeded");
  return 0;
}

int run_report(const RunConfig& config, std::ostream& log) {
  validate_config(config);
  const OutPaths paths{config.out_dir};
  std::vector<AdversarialRecord> records = read_records_csv(paths.records_csv());
  if (records.empty()) throw std::runtime_error("records CSV is empty: " + paths.records_csv());
  std::vector<Model> zoo = load_zoo(paths);
  std::vector<Tensor> adv_images = load_adv_images(paths, records);

  // Everything is computed before the first byte is written.
  const ReportData data = compute_report(config, zoo, records, adv_images);
  std::vector<std::pair<std::string, std::string>> files;
  for (size_t i = 0; i < data.matrices.size(); ++i) {
    const std::string a = attack_name(config.attacks[i]);
    files.emplace_back("portability_" + a + ".csv", portability_matrix_csv(data.matrices[i]));
    files.emplace_back("portability_" + a + "_passmin.csv",
                       portability_matrix_csv(data.pass_matrices[i]));
    files.emplace_back("correlation_" + a + ".json", correlation_json(data.correlations[i]));
  }
  files.emplace_back("summary.csv", summary_csv(data.summaries));
  files.emplace_back("fig2a-pass-success.dat", fig2a_pass_success_dat(data.summaries));
  files.emplace_back("fig2b-norms.dat", fig2b_norms_dat(data.summaries));
  files.emplace_back("fig3-matrix.dat", fig3_matrix_dat(data.matrices));
  files.emplace_back("correlation-scatter.dat", correlation_scatter_dat(data.correlations));
  files.emplace_back("report_notes.txt", data.notes);

  fs::create_directories(paths.report_dir());
  for (const auto& [name, content] : files) write_text_file(paths.report_dir() + "/" + name, content);
  log_at(log, LogLevel::info, "wrote " + std::to_string(files.size()) + " report files to " +
                                  paths.report_dir());
  return 0;
}

int run_verify(const RunConfig& config, std::ostream& log) {
  validate_config(config);
  const OutPaths paths{config.out_dir};
  std::vector<AdversarialRecord> records = read_records_csv(paths.records_csv());
  std::vector<Model> zoo = load_zoo(paths);
  std::vector<Tensor> adv_images = load_adv_images(paths, records);

  bool ok = true;

  // Replay every stored success through its source model.
  size_t replayed = 0, replay_failures = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.success) continue;
    ++replayed;
    const auto it = std::find_if(zoo.begin(), zoo.end(),
                                 [&](const Model& m) { return m.id() == r.source_model_id; });
    if (it == zoo.end() || it->predict(adv_images[i]) != *r.adversarial_label) ++replay_failures;
  }
  log << "replay: " << (replay_failures == 0 ? "ok" : "MISMATCH") << " (" << replayed
      << " adversarial images, " << replay_failures << " label mismatches)\n";
  ok = ok && replay_failures == 0;

  // Re-derive every matrix from the stored artifacts and compare against the
  // report byte for byte.
  for (AttackType attack : config.attacks) {
    const PortabilityMatrix matrix = portability_matrix(records, adv_images, zoo, attack);
    const std::string expected = portability_matrix_csv(matrix);
    const std::string path = paths.report_dir() + "/portability_" + attack_name(attack) + ".csv";
    std::string actual;
    try {
      actual = read_text_file(path);
    } catch (const std::exception& e) {
      log << "matrix " << attack_name(attack) << ": MISSING (" << e.what() << ")\n";
      ok = false;
      continue;
    }
    const bool match = actual == expected;
    log << "matrix " << attack_name(attack) << ": " << (match ? "ok" : "MISMATCH") << "\n";
    ok = ok && match;
  }
  return ok ? 0 : 1;
}

}  // namespace advforge
