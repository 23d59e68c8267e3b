#include "advforge/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace advforge {

namespace {

struct ParamGrads {
  std::vector<Tensor> w, b;
};

ParamGrads zero_grads(const Model& model) {
  ParamGrads g;
  for (const Layer& layer : model.layers()) {
    g.w.push_back(layer.has_params() ? Tensor(layer.weight.shape()) : Tensor());
    g.b.push_back(layer.has_params() ? Tensor(layer.bias.shape()) : Tensor());
  }
  return g;
}

// Accumulates d(cross-entropy)/d(params) for one sample; returns the loss.
double accumulate_sample(const Model& model, const Tensor& image, int label, ParamGrads& grads) {
  const auto& layers = model.layers();
  Tensor x(image.shape(), image.data() / 255.0);
  std::vector<LayerCache> caches(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) x = layer_forward(layers[i], x, &caches[i]);

  const double loss = softmax_cross_entropy(x, label);
  Vec p = softmax(x.data().matrix());
  Arr gl = p.array();
  gl[label] -= 1.0;

  Tensor g(x.shape(), gl);
  for (size_t i = layers.size(); i-- > 0;) {
    Tensor* gw = layers[i].has_params() ? &grads.w[i] : nullptr;
    Tensor* gb = layers[i].has_params() ? &grads.b[i] : nullptr;
    g = layer_backward(layers[i], caches[i], g, gw, gb);
  }
  return loss;
}

}  // namespace

void train(Model& model, const LabeledDataset& train_set, const TrainHyper& hyper) {
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (hyper.lr <= 0 || hyper.batch_size <= 0 || hyper.epochs < 0 || hyper.momentum < 0)
    throw std::invalid_argument("invalid hyperparameters");

  const size_t n = train_set.size();
  const size_t n_holdout = std::min(n - 1, static_cast<size_t>(std::llround(
                                               static_cast<double>(n) * hyper.holdout_fraction)));
  const size_t n_train = n - n_holdout;

  if (hyper.epochs > 0) {
    std::mt19937_64 rng(hyper.seed);
    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), size_t{0});

    ParamGrads velocity = zero_grads(model);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t start = 0; start < n_train; start += static_cast<size_t>(hyper.batch_size)) {
        const size_t end = std::min(n_train, start + static_cast<size_t>(hyper.batch_size));
        ParamGrads grads = zero_grads(model);
        double batch_loss = 0.0;
        for (size_t i = start; i < end; ++i)
          batch_loss += accumulate_sample(model, train_set.images[order[i]],
                                          train_set.labels[order[i]], grads);
        const double scale = 1.0 / static_cast<double>(end - start);
        // Exploded weights saturate softmax and keep the loss finite but
        // astronomically large, so a magnitude cap catches divergence too.
        if (!std::isfinite(batch_loss) || batch_loss * scale > 1e6)
          throw std::runtime_error("training diverged on model " + model.id() + " (epoch " +
                                   std::to_string(epoch) + ", loss blew up)");
        auto& layers = model.layers();
        for (size_t li = 0; li < layers.size(); ++li) {
          if (!layers[li].has_params()) continue;
          velocity.w[li].data() =
              hyper.momentum * velocity.w[li].data() - hyper.lr * scale * grads.w[li].data();
          velocity.b[li].data() =
              hyper.momentum * velocity.b[li].data() - hyper.lr * scale * grads.b[li].data();
          layers[li].weight.data() += velocity.w[li].data();
          layers[li].bias.data() += velocity.b[li].data();
        }
      }
    }
  }

  if (n_holdout > 0) {
    LabeledDataset holdout;
    holdout.num_classes = train_set.num_classes;
    for (size_t i = n_train; i < n; ++i) {
      holdout.images.push_back(train_set.images[i]);
      holdout.labels.push_back(train_set.labels[i]);
    }
    model.set_top1_error(evaluate(model, holdout, 1));
  }
}

double evaluate(const Model& model, const LabeledDataset& dataset, int k) {
  if (dataset.empty()) throw std::invalid_argument("empty evaluation set");
  if (k < 1 || k > model.num_classes()) throw std::invalid_argument("invalid k for top-k error");
  size_t errors = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const Arr z = model.forward(dataset.images[i]).data();
    const int label = dataset.labels[i];
    // Rank of the true label under (logit desc, class index asc).
    int rank = 0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      if (j == label) continue;
      if (z[j] > z[label] || (z[j] == z[label] && j < label)) ++rank;
    }
    if (rank >= k) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(dataset.size());
}

}  // namespace advforge
