#pragma once

#include "advforge/tensor.hpp"

#include <optional>

namespace advforge {

/// Standard SSIM defaults for 8-bit dynamic range.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

enum class WarpModel { identity, translation, affine };

int warp_param_count(WarpModel m);

struct AlignResult {
  Tensor warped;
  std::vector<double> params;
  bool degenerate = false;  // flat input, identity warp returned
  int iterations = 0;
};

/// Mean SSIM over the valid-region Gaussian-windowed local map. Inputs must
/// share a shape; 3-channel images are reduced to luminance first.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

/// Estimates warp parameters maximizing the zero-mean normalized correlation
/// between the warped candidate and the reference (damped Gauss-Newton,
/// identity start, at most 50 iterations, update-norm stop at 1e-6).
AlignResult align(const Tensor& candidate, const Tensor& reference, WarpModel model);

/// SSIM between the aligned candidate and the reference.
double pass_score(const Tensor& adversarial, const Tensor& original,
                  WarpModel warp = WarpModel::identity, const SsimParams& params = {});

}  // namespace advforge
