#pragma once

#include "advforge/attacks.hpp"
#include "advforge/dataset.hpp"
#include "advforge/model.hpp"
#include "advforge/ssim.hpp"
#include "advforge/train.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advforge {

/// Evaluation images correctly classified by every zoo model at selection
/// time, up to per_class images per class in dataset index order.
struct EvalSet {
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  std::vector<int> labels;
  int per_class = 0;
  std::map<int, int> shortfall;  // class -> missing count

  size_t size() const { return images.size(); }
};

EvalSet select_eval_set(const std::vector<Model>& models, const LabeledDataset& dataset,
                        int per_class);

struct ZooEntry {
  std::string id;
  std::string family;
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;
  TrainHyper hyper;
};

struct ZooBuildResult {
  std::vector<Model> models;
  std::vector<std::string> failures;  // per-model training diagnostics
  bool narrow_accuracy_spread = false;
};

/// Trains each entry; per-model divergence is recorded, not fatal. Warns via
/// the result flag when max-min top-1 error is under 2 percentage points.
ZooBuildResult build_zoo(const std::vector<ZooEntry>& entries, const std::vector<int>& input_shape,
                         int num_classes, const LabeledDataset& train_set);

struct SweepOptions {
  std::vector<AttackType> attacks = {AttackType::FGS, AttackType::FGV, AttackType::HC1};
  WarpModel pass_warp = WarpModel::identity;
  int jobs = 1;
};

/// One generation attempt with PASS filled in on success; the adversarial
/// image is returned through adv_out when non-null.
AdversarialRecord attack_one(const Model& model, const Tensor& image, int label, AttackType attack,
                             WarpModel pass_warp, const std::string& image_id, Tensor* adv_out);

struct SweepResult {
  std::vector<AdversarialRecord> records;
  std::vector<Tensor> adv_images;  // parallel to records; empty tensor on failure
};

/// One record per (model, attack, image); PASS filled in on each success.
/// Record order is (model, attack, image) lexicographic by position and does
/// not depend on the worker count.
SweepResult attack_sweep(const std::vector<Model>& zoo, const EvalSet& eval_set,
                         const SweepOptions& options);

struct PortabilityMatrix {
  AttackType attack = AttackType::FGS;
  std::vector<std::string> model_ids;
  Mat rates;                        // source x target, NaN for undefined rows
  std::vector<long> denominators;   // successes per source
};

/// Off-diagonal (i,j): fraction of source-i successes misclassified by model
/// j (any wrong label counts). Diagonal fixed at 1. `adv_images` runs
/// parallel to `records`. Records with pass below min_pass are excluded.
PortabilityMatrix portability_matrix(const std::vector<AdversarialRecord>& records,
                                     const std::vector<Tensor>& adv_images,
                                     const std::vector<Model>& zoo, AttackType attack,
                                     double min_pass = -1.0);

struct RobustnessSummary {
  std::string model_id;
  AttackType attack = AttackType::FGS;
  double success_rate = 0.0;
  long n_success = 0;
  // Population statistics over successful records; unset when n_success == 0.
  std::optional<double> mean_l2, std_l2, mean_linf, std_linf, mean_pass, std_pass;
};

std::vector<RobustnessSummary> robustness_summary(const std::vector<AdversarialRecord>& records);

/// Spearman rank correlation with average-rank tie handling; nullopt when
/// either variable is constant.
std::optional<double> spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys);

struct CorrelationResult {
  AttackType attack = AttackType::FGS;
  std::optional<double> rho;
  struct Pair {
    std::string model_id;
    double accuracy;
    double mean_l2;
  };
  std::vector<Pair> pairs;
};

CorrelationResult accuracy_robustness_correlation(const std::vector<Model>& zoo,
                                                  const std::vector<RobustnessSummary>& summaries,
                                                  AttackType attack);

struct FamilyContrast {
  std::optional<double> within_family_mean;
  std::optional<double> cross_family_mean;
};

FamilyContrast family_portability_contrast(const PortabilityMatrix& matrix,
                                           const std::vector<Model>& zoo);

double mean_offdiagonal(const PortabilityMatrix& matrix);

}  // namespace advforge
