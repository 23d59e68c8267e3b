#pragma once

#include "advforge/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advforge {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

/// Architecture descriptor for one layer. Only the fields relevant to the
/// kind are meaningful (units for dense; channels/kernel/stride/padding for
/// conv2d; kernel/stride for maxpool2d).
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int units = 0;
  int channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;

  static LayerSpec make_dense(int units);
  static LayerSpec make_conv2d(int channels, int kernel, int stride = 1, int padding = 0);
  static LayerSpec make_relu();
  static LayerSpec make_maxpool2d(int kernel, int stride = 0);  // stride 0 -> kernel
  static LayerSpec make_flatten();

  bool operator==(const LayerSpec&) const = default;
};

/// Deterministic shape algebra; throws ShapeError on an invalid composition.
std::vector<int> infer_output_shape(const LayerSpec& spec, const std::vector<int>& in);

/// One layer with its parameters. Dense: weight {units, fan_in}, bias {units}.
/// Conv2d: weight {oc, ic, k, k}, bias {oc}. Other kinds carry no parameters.
struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;

  bool has_params() const {
    return spec.kind == LayerKind::dense || spec.kind == LayerKind::conv2d;
  }
};

/// Per-layer forward context retained for the backward pass.
struct LayerCache {
  Tensor input;
  std::vector<Eigen::Index> pool_argmax;  // maxpool2d only
};

Tensor layer_forward(const Layer& layer, const Tensor& x, LayerCache* cache);

/// Gradient of the objective w.r.t. this layer's input given the gradient
/// w.r.t. its output. When grad_w/grad_b are non-null the parameter gradients
/// are accumulated into them (they must be pre-sized and zeroed or partially
/// accumulated).
Tensor layer_backward(const Layer& layer, const LayerCache& cache, const Tensor& grad_out,
                      Tensor* grad_w, Tensor* grad_b);

}  // namespace advforge
