#include "advforge/layers.hpp"

#include <algorithm>
#include <stdexcept>

namespace advforge {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  throw std::logic_error("unreachable layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "relu") return LayerKind::relu;
  if (name == "maxpool2d") return LayerKind::maxpool2d;
  if (name == "flatten") return LayerKind::flatten;
  throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::make_dense(int units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::make_conv2d(int channels, int kernel, int stride, int padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.channels = channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::make_relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::make_maxpool2d(int kernel, int stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.kernel = kernel;
  s.stride = stride > 0 ? stride : kernel;
  return s;
}

LayerSpec LayerSpec::make_flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

namespace {

std::vector<int> as_chw(const std::vector<int>& in) {
  if (in.size() == 3) return in;
  if (in.size() == 2) return {1, in[0], in[1]};
  throw ShapeError("expected 2-d or 3-d input, got " + Tensor::shape_str(in));
}

int conv_out_dim(int in, int kernel, int stride, int padding) {
  int span = in + 2 * padding - kernel;
  if (span < 0) throw ShapeError("kernel larger than padded input");
  return span / stride + 1;
}

}  // namespace

std::vector<int> infer_output_shape(const LayerSpec& spec, const std::vector<int>& in) {
  switch (spec.kind) {
    case LayerKind::dense:
      if (spec.units <= 0) throw ShapeError("dense layer needs positive units");
      return {spec.units};
    case LayerKind::flatten:
      return {static_cast<int>(Tensor::shape_size(in))};
    case LayerKind::relu:
      return in;
    case LayerKind::conv2d: {
      auto chw = as_chw(in);
      return {spec.channels, conv_out_dim(chw[1], spec.kernel, spec.stride, spec.padding),
              conv_out_dim(chw[2], spec.kernel, spec.stride, spec.padding)};
    }
    case LayerKind::maxpool2d: {
      auto chw = as_chw(in);
      return {chw[0], conv_out_dim(chw[1], spec.kernel, spec.stride, 0),
              conv_out_dim(chw[2], spec.kernel, spec.stride, 0)};
    }
  }
  throw std::logic_error("unreachable layer kind");
}

namespace {

Tensor dense_forward(const Layer& layer, const Tensor& x) {
  const int out = layer.spec.units;
  const Eigen::Index in = x.size();
  if (layer.weight.size() != out * in)
    throw ShapeError("dense weight size mismatch: expected " + std::to_string(out * in) +
                     " got " + std::to_string(layer.weight.size()));
  Eigen::Map<const Mat> W(layer.weight.data().data(), in, out);  // column-major view of row-major {out,in}
  Vec y = W.transpose() * x.data().matrix() + layer.bias.data().matrix();
  return Tensor({out}, y.array());
}

Tensor dense_backward(const Layer& layer, const LayerCache& cache, const Tensor& grad_out,
                      Tensor* grad_w, Tensor* grad_b) {
  const int out = layer.spec.units;
  const Eigen::Index in = cache.input.size();
  Eigen::Map<const Mat> W(layer.weight.data().data(), in, out);
  if (grad_w) {
    Eigen::Map<Mat> gW(grad_w->data().data(), in, out);
    gW.noalias() += cache.input.data().matrix() * grad_out.data().matrix().transpose();
  }
  if (grad_b) grad_b->data() += grad_out.data();
  Vec gx = W * grad_out.data().matrix();
  return Tensor(cache.input.shape(), gx.array());
}

// Plain loop convolution; inputs are at most a few thousand pixels.
Tensor conv_forward(const Layer& layer, const Tensor& x) {
  auto chw = x.shape().size() == 3 ? x.shape() : std::vector<int>{1, x.shape()[0], x.shape()[1]};
  const int ic = chw[0], h = chw[1], w = chw[2];
  const int oc = layer.spec.channels, k = layer.spec.kernel, s = layer.spec.stride,
            p = layer.spec.padding;
  const int oh = (h + 2 * p - k) / s + 1;
  const int ow = (w + 2 * p - k) / s + 1;
  Tensor y({oc, oh, ow});
  const Scalar* xd = x.data().data();
  const Scalar* wd = layer.weight.data().data();
  for (int o = 0; o < oc; ++o) {
    const Scalar bias = layer.bias[o];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        Scalar acc = bias;
        for (int c = 0; c < ic; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= w) continue;
              acc += xd[(c * h + iy) * w + ix] * wd[((o * ic + c) * k + ky) * k + kx];
            }
          }
        }
        y[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return y;
}

Tensor conv_backward(const Layer& layer, const LayerCache& cache, const Tensor& grad_out,
                     Tensor* grad_w, Tensor* grad_b) {
  const Tensor& x = cache.input;
  auto chw = x.shape().size() == 3 ? x.shape() : std::vector<int>{1, x.shape()[0], x.shape()[1]};
  const int ic = chw[0], h = chw[1], w = chw[2];
  const int oc = layer.spec.channels, k = layer.spec.kernel, s = layer.spec.stride,
            p = layer.spec.padding;
  const int oh = grad_out.shape()[1], ow = grad_out.shape()[2];
  Tensor gx(x.shape());
  const Scalar* xd = x.data().data();
  const Scalar* wd = layer.weight.data().data();
  const Scalar* gyd = grad_out.data().data();
  Scalar* gxd = gx.data().data();
  Scalar* gwd = grad_w ? grad_w->data().data() : nullptr;
  for (int o = 0; o < oc; ++o) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Scalar gy = gyd[(o * oh + oy) * ow + ox];
        if (grad_b) (*grad_b)[o] += gy;
        for (int c = 0; c < ic; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= w) continue;
              const int xi = (c * h + iy) * w + ix;
              const int wi = ((o * ic + c) * k + ky) * k + kx;
              gxd[xi] += gy * wd[wi];
              if (gwd) gwd[wi] += gy * xd[xi];
            }
          }
        }
      }
    }
  }
  return gx;
}

}  // namespace

Tensor layer_forward(const Layer& layer, const Tensor& x, LayerCache* cache) {
  if (cache) cache->input = x;
  switch (layer.spec.kind) {
    case LayerKind::dense:
      return dense_forward(layer, x);
    case LayerKind::conv2d:
      return conv_forward(layer, x);
    case LayerKind::relu:
      return Tensor(x.shape(), x.data().max(0.0));
    case LayerKind::flatten:
      return x.reshaped({static_cast<int>(x.size())});
    case LayerKind::maxpool2d: {
      auto out_shape = infer_output_shape(layer.spec, x.shape());
      auto chw = x.shape().size() == 3 ? x.shape() : std::vector<int>{1, x.shape()[0], x.shape()[1]};
      const int h = chw[1], w = chw[2];
      const int k = layer.spec.kernel, s = layer.spec.stride;
      const int oh = out_shape[1], ow = out_shape[2];
      Tensor y(out_shape);
      if (cache) cache->pool_argmax.assign(static_cast<size_t>(y.size()), 0);
      const Scalar* xd = x.data().data();
      for (int c = 0; c < chw[0]; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            Eigen::Index best = (c * h + oy * s) * w + ox * s;
            Scalar best_v = xd[best];
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index i = (c * h + oy * s + ky) * w + ox * s + kx;
                if (xd[i] > best_v) {
                  best_v = xd[i];
                  best = i;
                }
              }
            }
            const Eigen::Index oi = (c * oh + oy) * ow + ox;
            y[oi] = best_v;
            if (cache) cache->pool_argmax[static_cast<size_t>(oi)] = best;
          }
        }
      }
      return y;
    }
  }
  throw std::logic_error("unreachable layer kind");
}

Tensor layer_backward(const Layer& layer, const LayerCache& cache, const Tensor& grad_out,
                      Tensor* grad_w, Tensor* grad_b) {
  switch (layer.spec.kind) {
    case LayerKind::dense:
      return dense_backward(layer, cache, grad_out, grad_w, grad_b);
    case LayerKind::conv2d:
      return conv_backward(layer, cache, grad_out, grad_w, grad_b);
    case LayerKind::relu:
      return Tensor(cache.input.shape(),
                    grad_out.data() * (cache.input.data() > 0.0).cast<Scalar>());
    case LayerKind::flatten:
      return grad_out.reshaped(cache.input.shape());
    case LayerKind::maxpool2d: {
      Tensor gx(cache.input.shape());
      for (Eigen::Index i = 0; i < grad_out.size(); ++i)
        gx[cache.pool_argmax[static_cast<size_t>(i)]] += grad_out[i];
      return gx;
    }
  }
  throw std::logic_error("unreachable layer kind");
}

}  // namespace advforge
