#pragma once

#include "advforge/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace advforge {

struct LabeledDataset {
  std::vector<Tensor> images;  // each {c,h,w}, integer values in [0,255]
  std::vector<int> labels;
  int num_classes = 0;

  size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

/// IDX tensor file (big-endian, magic 0x00000803 for 3-d uint8 image stacks).
std::vector<Tensor> read_idx_images(const std::string& path);
void write_idx_images(const std::string& path, const std::vector<Tensor>& images);

/// IDX label file (magic 0x00000801).
std::vector<int> read_idx_labels(const std::string& path);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

LabeledDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                int num_classes);

struct SyntheticSpec {
  int num_classes = 10;
  int height = 28;
  int width = 28;
  int samples_per_class = 200;
  double noise_sigma = 20.0;  // pixel units
  int max_shift = 2;          // uniform integer translation jitter
  std::uint64_t seed = 1;
};

/// Deterministic class-structured image generator: each class is a fixed
/// arrangement of Gaussian bumps, each sample a jittered noisy rendering.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace advforge
