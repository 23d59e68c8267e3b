#include "advforge/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace advforge {

EvalSet select_eval_set(const std::vector<Model>& models, const LabeledDataset& dataset,
                        int per_class) {
  if (models.empty()) throw std::invalid_argument("select_eval_set needs at least one model");
  if (per_class <= 0) throw std::invalid_argument("per_class must be positive");
  EvalSet set;
  set.per_class = per_class;
  std::vector<int> kept(static_cast<size_t>(dataset.num_classes), 0);
  for (size_t i = 0; i < dataset.size(); ++i) {
    const int label = dataset.labels[i];
    if (kept[static_cast<size_t>(label)] >= per_class) continue;
    bool all_correct = true;
    for (const Model& m : models) {
      if (m.predict(dataset.images[i]) != label) {
        all_correct = false;
        break;
      }
    }
    if (!all_correct) continue;
    set.ids.push_back("img" + std::to_string(i));
    set.images.push_back(dataset.images[i]);
    set.labels.push_back(label);
    ++kept[static_cast<size_t>(label)];
  }
  for (int c = 0; c < dataset.num_classes; ++c)
    if (kept[static_cast<size_t>(c)] < per_class)
      set.shortfall[c] = per_class - kept[static_cast<size_t>(c)];
  return set;
}

ZooBuildResult build_zoo(const std::vector<ZooEntry>& entries, const std::vector<int>& input_shape,
                         int num_classes, const LabeledDataset& train_set) {
  ZooBuildResult result;
  for (const ZooEntry& entry : entries) {
    try {
      Model model(entry.id, entry.family, input_shape, num_classes, entry.layers, entry.seed);
      train(model, train_set, entry.hyper);
      result.models.push_back(std::move(model));
    } catch (const std::exception& e) {
      result.failures.push_back(entry.id + ": " + e.what());
    }
  }
  if (result.models.size() >= 2) {
    double lo = 1.0, hi = 0.0;
    for (const Model& m : result.models) {
      const double e = m.top1_error().value_or(0.0);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    result.narrow_accuracy_spread = (hi - lo) < 0.02;
  }
  return result;
}

AdversarialRecord attack_one(const Model& model, const Tensor& image, int label, AttackType attack,
                             WarpModel pass_warp, const std::string& image_id, Tensor* adv_out) {
  Direction dir = attack_direction(model, image, label, attack);
  AdversarialRecord rec = minimal_adversarial(model, image, label, dir, image_id);
  if (rec.success) {
    Tensor adv(image.shape(), image.data() + rec.perturbation.data());
    rec.pass = pass_score(adv, image, pass_warp);
    if (adv_out) *adv_out = std::move(adv);
  }
  return rec;
}

SweepResult attack_sweep(const std::vector<Model>& zoo, const EvalSet& eval_set,
                         const SweepOptions& options) {
  struct Task {
    size_t model_idx, image_idx;
    AttackType attack;
  };
  std::vector<Task> tasks;
  for (size_t mi = 0; mi < zoo.size(); ++mi)
    for (AttackType attack : options.attacks)
      for (size_t ii = 0; ii < eval_set.size(); ++ii) tasks.push_back({mi, ii, attack});

  SweepResult result;
  result.records.resize(tasks.size());
  result.adv_images.resize(tasks.size());

  auto run_task = [&](size_t t) {
    const Task& task = tasks[t];
    result.records[t] =
        attack_one(zoo[task.model_idx], eval_set.images[task.image_idx],
                   eval_set.labels[task.image_idx], task.attack, options.pass_warp,
                   eval_set.ids[task.image_idx], &result.adv_images[t]);
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
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
  return result;
}

PortabilityMatrix portability_matrix(const std::vector<AdversarialRecord>& records,
                                     const std::vector<Tensor>& adv_images,
                                     const std::vector<Model>& zoo, AttackType attack,
                                     double min_pass) {
  if (records.size() != adv_images.size())
    throw std::invalid_argument("records and adversarial images must align");
  PortabilityMatrix matrix;
  matrix.attack = attack;
  const size_t n = zoo.size();
  for (const Model& m : zoo) matrix.model_ids.push_back(m.id());
  matrix.rates = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  matrix.denominators.assign(n, 0);

  Mat transferred = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (size_t r = 0; r < records.size(); ++r) {
    const AdversarialRecord& rec = records[r];
    if (rec.attack != attack || !rec.success) continue;
    if (min_pass > -1.0 && rec.pass < min_pass) continue;
    const auto it = std::find(matrix.model_ids.begin(), matrix.model_ids.end(), rec.source_model_id);
    if (it == matrix.model_ids.end())
      throw std::invalid_argument("record references unknown model " + rec.source_model_id);
    const auto si = static_cast<size_t>(it - matrix.model_ids.begin());
    ++matrix.denominators[si];
    for (size_t ti = 0; ti < n; ++ti) {
      if (ti == si) continue;
      if (zoo[ti].predict(adv_images[r]) != rec.true_label)
        transferred(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti)) += 1.0;
    }
  }
  for (size_t si = 0; si < n; ++si) {
    if (matrix.denominators[si] == 0) {
      matrix.rates.row(static_cast<Eigen::Index>(si)).setConstant(
          std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    for (size_t ti = 0; ti < n; ++ti)
      matrix.rates(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti)) =
          si == ti ? 1.0
                   : transferred(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti)) /
                         static_cast<double>(matrix.denominators[si]);
  }
  return matrix;
}

namespace {

struct Stats {
  double mean, stddev;  // population
};

Stats population_stats(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

std::vector<RobustnessSummary> robustness_summary(const std::vector<AdversarialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("robustness_summary of empty record list");
  // Group keys in first-appearance order for deterministic output.
  std::vector<std::pair<std::string, AttackType>> keys;
  for (const auto& r : records) {
    const std::pair<std::string, AttackType> key{r.source_model_id, r.attack};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::vector<RobustnessSummary> summaries;
  for (const auto& [model_id, attack] : keys) {
    RobustnessSummary s;
    s.model_id = model_id;
    s.attack = attack;
    long total = 0;
    std::vector<double> l2s, linfs, passes;
    for (const auto& r : records) {
      if (r.source_model_id != model_id || r.attack != attack) continue;
      ++total;
      if (r.success) {
        l2s.push_back(r.l2);
        linfs.push_back(static_cast<double>(r.linf));
        passes.push_back(r.pass);
      }
    }
    s.n_success = static_cast<long>(l2s.size());
    s.success_rate = static_cast<double>(s.n_success) / static_cast<double>(total);
    if (s.n_success > 0) {
      const auto [ml2, sl2] = population_stats(l2s);
      const auto [mli, sli] = population_stats(linfs);
      const auto [mp, sp] = population_stats(passes);
      s.mean_l2 = ml2;
      s.std_l2 = sl2;
      s.mean_linf = mli;
      s.std_linf = sli;
      s.mean_pass = mp;
      s.std_pass = sp;
    }
    summaries.push_back(std::move(s));
  }
  return summaries;
}

namespace {

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("spearman_rho needs two equally sized series of length >= 2");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return std::nullopt;
  return num / std::sqrt(dx * dy);
}

CorrelationResult accuracy_robustness_correlation(const std::vector<Model>& zoo,
                                                  const std::vector<RobustnessSummary>& summaries,
                                                  AttackType attack) {
  CorrelationResult result;
  result.attack = attack;
  for (const Model& m : zoo) {
    if (!m.top1_error()) continue;
    for (const auto& s : summaries) {
      if (s.model_id != m.id() || s.attack != attack || !s.mean_l2) continue;
      result.pairs.push_back({m.id(), 1.0 - *m.top1_error(), *s.mean_l2});
    }
  }
  if (result.pairs.size() < 4)
    throw std::invalid_argument("accuracy-robustness correlation needs >= 4 models with defined mean L2");
  std::vector<double> acc, l2;
  for (const auto& p : result.pairs) {
    acc.push_back(p.accuracy);
    l2.push_back(p.mean_l2);
  }
  result.rho = spearman_rho(acc, l2);
  return result;
}

FamilyContrast family_portability_contrast(const PortabilityMatrix& matrix,
                                           const std::vector<Model>& zoo) {
  FamilyContrast contrast;
  double within = 0, cross = 0;
  long n_within = 0, n_cross = 0;
  for (size_t si = 0; si < matrix.model_ids.size(); ++si) {
    for (size_t ti = 0; ti < matrix.model_ids.size(); ++ti) {
      if (si == ti) continue;
      const double rate = matrix.rates(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti));
      if (std::isnan(rate)) continue;
      const auto family_of = [&](const std::string& id) -> const std::string& {
        for (const Model& m : zoo)
          if (m.id() == id) return m.family();
        throw std::invalid_argument("matrix references unknown model " + id);
      };
      if (family_of(matrix.model_ids[si]) == family_of(matrix.model_ids[ti])) {
        within += rate;
        ++n_within;
      } else {
        cross += rate;
        ++n_cross;
      }
    }
  }
  if (n_within > 0) contrast.within_family_mean = within / static_cast<double>(n_within);
  if (n_cross > 0) contrast.cross_family_mean = cross / static_cast<double>(n_cross);
  return contrast;
}

double mean_offdiagonal(const PortabilityMatrix& matrix) {
  double total = 0;
  long n = 0;
  for (Eigen::Index i = 0; i < matrix.rates.rows(); ++i)
    for (Eigen::Index j = 0; j < matrix.rates.cols(); ++j) {
      if (i == j || std::isnan(matrix.rates(i, j))) continue;
      total += matrix.rates(i, j);
      ++n;
    }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

}  // namespace advforge
