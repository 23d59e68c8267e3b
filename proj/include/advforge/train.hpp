#pragma once

#include "advforge/dataset.hpp"
#include "advforge/model.hpp"

namespace advforge {

struct TrainHyper {
  double lr = 0.1;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 5;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;  // tail of the dataset, used for top1_error
};

/// SGD with momentum on softmax cross-entropy. Deterministic for a fixed
/// seed. Records the final held-out top-1 error on the model. Throws if the
/// running loss becomes non-finite.
void train(Model& model, const LabeledDataset& train_set, const TrainHyper& hyper);

/// Top-k error: fraction of samples whose label is absent from the k
/// highest logits, ties broken by lower class index.
double evaluate(const Model& model, const LabeledDataset& dataset, int k);

}  // namespace advforge
