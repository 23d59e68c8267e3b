#include "advforge/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace advforge {

Model::Model(std::string id, std::string family, std::vector<int> input_shape, int num_classes,
             std::vector<LayerSpec> specs, std::uint64_t seed)
    : id_(std::move(id)),
      family_(std::move(family)),
      input_shape_(std::move(input_shape)),
      num_classes_(num_classes),
      seed_(seed) {
  if (num_classes_ <= 0) throw std::invalid_argument("num_classes must be positive");
  // Type-check the composition and allocate parameter tensors.
  std::vector<int> shape = input_shape_;
  for (const LayerSpec& spec : specs) {
    Layer layer;
    layer.spec = spec;
    if (spec.kind == LayerKind::dense) {
      const int fan_in = static_cast<int>(Tensor::shape_size(shape));
      layer.weight = Tensor({spec.units, fan_in});
      layer.bias = Tensor({spec.units});
    } else if (spec.kind == LayerKind::conv2d) {
      const int ic = shape.size() == 3 ? shape[0] : 1;
      layer.weight = Tensor({spec.channels, ic, spec.kernel, spec.kernel});
      layer.bias = Tensor({spec.channels});
    }
    shape = infer_output_shape(spec, shape);
    layers_.push_back(std::move(layer));
  }
  if (shape != std::vector<int>{num_classes_})
    throw ShapeError("layer stack produces " + Tensor::shape_str(shape) + ", expected logits of length " +
                     std::to_string(num_classes_));
  init_weights();
}

void Model::init_weights() {
  std::mt19937_64 rng(seed_);
  for (Layer& layer : layers_) {
    if (!layer.has_params()) continue;
    Eigen::Index fan_in;
    if (layer.spec.kind == LayerKind::dense)
      fan_in = layer.weight.shape()[1];
    else
      fan_in = static_cast<Eigen::Index>(layer.weight.shape()[1]) * layer.spec.kernel * layer.spec.kernel;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight[i] = dist(rng);
    layer.bias.data().setZero();
  }
}

void Model::check_input(const Tensor& image) const {
  if (image.shape() != input_shape_)
    throw ShapeError("input shape mismatch for model " + id_ + ": expected " +
                     Tensor::shape_str(input_shape_) + ", got " + Tensor::shape_str(image.shape()));
}

void Model::check_label(int label) const {
  if (label < 0 || label >= num_classes_)
    throw std::out_of_range("label " + std::to_string(label) + " out of range [0," +
                            std::to_string(num_classes_) + ")");
}

Tensor Model::forward(const Tensor& image) const {
  check_input(image);
  Tensor x(image.shape(), image.data() / 255.0);
  for (const Layer& layer : layers_) x = layer_forward(layer, x, nullptr);
  x.check_finite("forward pass of model " + id_);
  return x;
}

int Model::predict(const Tensor& image) const {
  return argmax_lowest(forward(image).data());
}

Tensor Model::input_gradient(const Tensor& image, const Objective& objective) const {
  check_input(image);
  check_label(objective.label);
  if (objective.kind == Objective::Kind::logit_difference) {
    check_label(objective.hot_label);
    if (objective.hot_label == objective.label)
      throw std::invalid_argument("hot and cold labels must differ");
  }

  Tensor x(image.shape(), image.data() / 255.0);
  std::vector<LayerCache> caches(layers_.size());
  for (size_t i = 0; i < layers_.size(); ++i) x = layer_forward(layers_[i], x, &caches[i]);

  // Gradient of the objective at the logits.
  Arr grad_logits;
  if (objective.kind == Objective::Kind::loss_true_class) {
    Vec p = softmax(x.data().matrix());
    grad_logits = p.array();
    grad_logits[objective.label] -= 1.0;
  } else {
    grad_logits = Arr::Zero(x.size());
    grad_logits[objective.hot_label] = 1.0;
    grad_logits[objective.label] = -1.0;
  }

  Tensor g(x.shape(), grad_logits);
  for (size_t i = layers_.size(); i-- > 0;)
    g = layer_backward(layers_[i], caches[i], g, nullptr, nullptr);
  g.data() /= 255.0;  // input rescaling
  g.check_finite("input gradient of model " + id_);
  return g;
}

Vec softmax(const Vec& logits) {
  Arr shifted = logits.array() - logits.maxCoeff();
  Arr e = shifted.exp();
  return (e / e.sum()).matrix();
}

double softmax_cross_entropy(const Tensor& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::out_of_range("label " + std::to_string(label) + " invalid for " +
                            std::to_string(logits.size()) + " logits");
  const Arr& z = logits.data();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z - m).exp().sum());
  return lse - z[label];
}

int argmax_lowest(const Arr& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace advforge
