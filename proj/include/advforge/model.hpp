#pragma once

#include "advforge/layers.hpp"
#include "advforge/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advforge {

/// Scalar objective differentiated w.r.t. the input image.
struct Objective {
  enum class Kind { loss_true_class, logit_difference };
  Kind kind = Kind::loss_true_class;
  int label = 0;       // true class for loss_true_class, cold class for logit_difference
  int hot_label = -1;  // logit_difference only

  static Objective loss(int true_label) { return {Kind::loss_true_class, true_label, -1}; }
  static Objective logit_diff(int hot, int cold) { return {Kind::logit_difference, cold, hot}; }
};

/// Ordered layer stack operating on raw [0,255] pixel inputs. The stack
/// internally rescales by 1/255 before the first layer.
class Model {
 public:
  Model() = default;
  Model(std::string id, std::string family, std::vector<int> input_shape, int num_classes,
        std::vector<LayerSpec> specs, std::uint64_t seed);

  const std::string& id() const { return id_; }
  const std::string& family() const { return family_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  std::uint64_t seed() const { return seed_; }
  std::optional<double> top1_error() const { return top1_error_; }
  void set_top1_error(double e) { top1_error_ = e; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Tensor forward(const Tensor& image) const;
  /// Top-1 class id, ties broken by lower class index.
  int predict(const Tensor& image) const;

  /// d(objective)/d(pixel) at the given image; same shape as the image.
  Tensor input_gradient(const Tensor& image, const Objective& objective) const;

  /// Initializes all parameters with He-style uniform scaling from the seed.
  void init_weights();

  void check_input(const Tensor& image) const;
  void check_label(int label) const;

 private:
  std::string id_;
  std::string family_;
  std::vector<int> input_shape_;
  int num_classes_ = 0;
  std::vector<Layer> layers_;
  std::uint64_t seed_ = 0;
  std::optional<double> top1_error_;
};

Vec softmax(const Vec& logits);
double softmax_cross_entropy(const Tensor& logits, int label);

int argmax_lowest(const Arr& v);

}  // namespace advforge
