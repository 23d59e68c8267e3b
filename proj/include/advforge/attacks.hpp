#pragma once

#include "advforge/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advforge {

enum class AttackType { FGS, FGV, HC1 };

std::string attack_name(AttackType a);
AttackType attack_from_name(const std::string& name);

enum class FailureReason { zero_gradient, label_never_flips };

std::string failure_name(FailureReason r);
FailureReason failure_from_name(const std::string& name);

/// L-inf-normalized perturbation direction (or identically zero).
struct Direction {
  Tensor vector;
  AttackType attack = AttackType::FGS;
  std::optional<int> hot_label;

  bool is_zero() const { return (vector.data() == 0.0).all(); }
};

/// One minimal-perturbation generation attempt.
struct AdversarialRecord {
  std::string source_model_id;
  AttackType attack = AttackType::FGS;
  std::string image_id;
  int true_label = 0;
  std::optional<int> adversarial_label;
  double alpha = 0.0;          // step size in pixel units (pre-quantization L-inf)
  Tensor perturbation;         // integer pixel deltas, set on success
  double l2 = 0.0;
  int linf = 0;
  double pass = 0.0;
  bool success = false;
  std::optional<FailureReason> failure_reason;
};

Direction fgs_direction(const Tensor& gradient);
Direction fgv_direction(const Tensor& gradient);

/// Highest-scoring class other than the true label, ties to the lower index.
int select_hot_class(const Tensor& logits, int true_label);

Direction hc_direction(const Model& model, const Tensor& image, int true_label);

Direction attack_direction(const Model& model, const Tensor& image, int true_label,
                           AttackType attack);

/// Round half-away-from-zero, then clamp to [0,255].
Tensor quantize_clip(const Tensor& image);

struct PerturbationNorms {
  double l2 = 0.0;
  int linf = 0;
};

PerturbationNorms perturbation_norms(const Tensor& original, const Tensor& adversarial);

/// Smallest step along `dir` whose quantized application flips the model's
/// top-1 label. FGS searches integer steps; FGV/HC1 search a 0.01-pixel
/// grid. A tie at the top involving the true label counts as not flipped.
AdversarialRecord minimal_adversarial(const Model& model, const Tensor& image, int true_label,
                                      const Direction& dir, const std::string& image_id = "");

double success_rate(const std::vector<AdversarialRecord>& records);

/// Records CSV, header:
/// image_id,source_model,attack,true_label,adv_label,alpha,l2,linf,pass,success,failure_reason
std::string records_csv_header();
std::string record_csv_row(const AdversarialRecord& r);
void write_records_csv(const std::string& path, const std::vector<AdversarialRecord>& records);
std::vector<AdversarialRecord> read_records_csv(const std::string& path);

}  // namespace advforge
