#include "advforge/ssim.hpp"

#include <cmath>
#include <stdexcept>

namespace advforge {

namespace {

// 2-d single-channel view of an image tensor; 3-channel inputs collapse to
// luminance.
Mat as_plane(const Tensor& t) {
  const auto& s = t.shape();
  int h, w;
  if (s.size() == 2) {
    h = s[0];
    w = s[1];
  } else if (s.size() == 3 && (s[0] == 1 || s[0] == 3)) {
    h = s[1];
    w = s[2];
  } else {
    throw ShapeError("expected a 2-d, 1-channel, or 3-channel image, got " +
                     Tensor::shape_str(s));
  }
  Mat m(h, w);
  const Scalar* d = t.data().data();
  if (s.size() == 3 && s[0] == 3) {
    const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Eigen::Index i = static_cast<Eigen::Index>(y) * w + x;
        m(y, x) = 0.299 * d[i] + 0.587 * d[i + plane] + 0.114 * d[i + 2 * plane];
      }
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m(y, x) = d[static_cast<Eigen::Index>(y) * w + x];
  }
  return m;
}

Vec gaussian_kernel(int n, double sigma) {
  Vec k(n);
  const double c = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i) k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  return k / k.sum();
}

// Separable valid-region filtering with a normalized 1-d kernel.
Mat filter_valid(const Mat& img, const Vec& k) {
  const int n = static_cast<int>(k.size());
  const int oh = static_cast<int>(img.rows()) - n + 1;
  const int ow = static_cast<int>(img.cols()) - n + 1;
  Mat rows(oh, img.cols());
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < img.cols(); ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * img(y + i, x);
      rows(y, x) = acc;
    }
  Mat out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows(y, x + i);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
  if (!a.same_shape(b))
    throw ShapeError("ssim shape mismatch: " + Tensor::shape_str(a.shape()) + " vs " +
                     Tensor::shape_str(b.shape()));
  Mat x = as_plane(a), y = as_plane(b);
  if (x.rows() < params.window || x.cols() < params.window)
    throw ShapeError("image smaller than the SSIM window");

  const Vec k = gaussian_kernel(params.window, params.sigma);
  Mat mu_x = filter_valid(x, k);
  Mat mu_y = filter_valid(y, k);
  Mat sxx = filter_valid(x.cwiseProduct(x), k) - mu_x.cwiseProduct(mu_x);
  Mat syy = filter_valid(y.cwiseProduct(y), k) - mu_y.cwiseProduct(mu_y);
  Mat sxy = filter_valid(x.cwiseProduct(y), k) - mu_x.cwiseProduct(mu_y);

  const double c1 = params.c1(), c2 = params.c2();
  double total = 0;
  for (int i = 0; i < mu_x.rows(); ++i)
    for (int j = 0; j < mu_x.cols(); ++j) {
      const double num = (2.0 * mu_x(i, j) * mu_y(i, j) + c1) * (2.0 * sxy(i, j) + c2);
      const double den =
          (mu_x(i, j) * mu_x(i, j) + mu_y(i, j) * mu_y(i, j) + c1) * (sxx(i, j) + syy(i, j) + c2);
      total += num / den;
    }
  return total / static_cast<double>(mu_x.rows() * mu_x.cols());
}

int warp_param_count(WarpModel m) {
  switch (m) {
    case WarpModel::identity: return 0;
    case WarpModel::translation: return 2;
    case WarpModel::affine: return 6;
  }
  throw std::logic_error("unreachable warp model");
}

namespace {

double bilinear(const Mat& img, double y, double x) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 2 >= 0 ? h - 2 : 0);
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 2 >= 0 ? w - 2 : 0);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x0 + 1)) +
         fy * ((1 - fx) * img(y0 + 1, x0) + fx * img(y0 + 1, x0 + 1));
}

// Maps output pixel (y,x) to source coordinates under the parameter vector.
// Translation: (tx, ty). Affine: (a00, a01, tx, a10, a11, ty) applied as an
// offset from the identity map.
void warp_point(WarpModel model, const std::vector<double>& p, double y, double x, double* sy,
                double* sx) {
  switch (model) {
    case WarpModel::identity:
      *sy = y;
      *sx = x;
      return;
    case WarpModel::translation:
      *sx = x + p[0];
      *sy = y + p[1];
      return;
    case WarpModel::affine:
      *sx = (1.0 + p[0]) * x + p[1] * y + p[2];
      *sy = p[3] * x + (1.0 + p[4]) * y + p[5];
      return;
  }
  throw std::logic_error("unreachable warp model");
}

Mat warp_image(const Mat& img, WarpModel model, const std::vector<double>& p) {
  Mat out(img.rows(), img.cols());
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      double sy, sx;
      warp_point(model, p, y, x, &sy, &sx);
      out(y, x) = bilinear(img, sy, sx);
    }
  return out;
}

Vec zero_mean_unit(const Mat& m, double* norm_out) {
  Vec v = Eigen::Map<const Vec>(m.data(), m.size());
  v.array() -= v.mean();
  const double n = v.norm();
  if (norm_out) *norm_out = n;
  return n > 0 ? Vec(v / n) : v;
}

}  // namespace

AlignResult align(const Tensor& candidate, const Tensor& reference, WarpModel model) {
  if (!candidate.same_shape(reference))
    throw ShapeError("align shape mismatch");
  AlignResult result;
  result.params.assign(static_cast<size_t>(warp_param_count(model)), 0.0);
  result.warped = candidate;
  if (model == WarpModel::identity) return result;

  Mat cand = as_plane(candidate), ref = as_plane(reference);
  double ref_norm = 0, cand_norm = 0;
  zero_mean_unit(ref, &ref_norm);
  zero_mean_unit(cand, &cand_norm);
  if (ref_norm <= 0 || cand_norm <= 0) {
    result.degenerate = true;
    return result;
  }

  // Central-difference gradients of the candidate, replicated borders.
  const int h = static_cast<int>(cand.rows()), w = static_cast<int>(cand.cols());
  Mat gx(h, w), gy(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      gx(y, x) = (cand(y, xp) - cand(y, xm)) / static_cast<double>(xp - xm);
      gy(y, x) = (cand(yp, x) - cand(ym, x)) / static_cast<double>(yp - ym);
    }

  const int np = warp_param_count(model);
  const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
  std::vector<double> params(static_cast<size_t>(np), 0.0);
  std::vector<double> best_params = params;

  // Pixels whose warped source coordinates fall outside the image sample
  // clamped values that have no counterpart in the reference; including them
  // biases the estimate, so the correlation is taken over in-bounds pixels
  // only. The valid set is recomputed for every parameter vector.
  struct Eval {
    std::vector<std::pair<int, int>> pixels;  // (y, x) with in-bounds source
    Vec w_hat, r_hat;                         // masked, zero-mean, unit
    double norm = 0;                          // of the centered warped values
    double err = std::numeric_limits<double>::infinity();
  };
  auto evaluate = [&](const std::vector<double>& p) {
    Eval e;
    std::vector<double> wvals, rvals;
    wvals.reserve(static_cast<size_t>(n));
    rvals.reserve(static_cast<size_t>(n));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sy, sx;
        warp_point(model, p, y, x, &sy, &sx);
        if (sy < 0 || sy > h - 1 || sx < 0 || sx > w - 1) continue;
        e.pixels.emplace_back(y, x);
        wvals.push_back(bilinear(cand, sy, sx));
        rvals.push_back(ref(y, x));
      }
    // Refuse warps that keep less than a quarter of the image in view.
    if (static_cast<Eigen::Index>(e.pixels.size()) < std::max<Eigen::Index>(4 * np, n / 4))
      return e;
    Vec wv = Eigen::Map<const Vec>(wvals.data(), static_cast<Eigen::Index>(wvals.size()));
    Vec rv = Eigen::Map<const Vec>(rvals.data(), static_cast<Eigen::Index>(rvals.size()));
    wv.array() -= wv.mean();
    rv.array() -= rv.mean();
    const double wn = wv.norm(), rn = rv.norm();
    if (wn <= 0 || rn <= 0 || !std::isfinite(wn) || !std::isfinite(rn)) return e;
    e.w_hat = wv / wn;
    e.r_hat = rv / rn;
    e.norm = wn;
    e.err = (e.w_hat - e.r_hat).squaredNorm();  // == 2 - 2*correlation
    return e;
  };

  Eval cur = evaluate(params);
  if (!std::isfinite(cur.err)) {
    result.degenerate = true;
    return result;
  }
  double best_err = cur.err;
  double lambda = 1e-3;

  for (int iter = 0; iter < 50; ++iter) {
    result.iterations = iter + 1;
    const Eigen::Index rows = static_cast<Eigen::Index>(cur.pixels.size());
    Mat J(rows, np);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int y = cur.pixels[static_cast<size_t>(r)].first;
      const int x = cur.pixels[static_cast<size_t>(r)].second;
      double sy, sx;
      warp_point(model, params, y, x, &sy, &sx);
      const double ix = bilinear(gx, sy, sx);
      const double iy = bilinear(gy, sy, sx);
      switch (model) {
        case WarpModel::translation:
          J(r, 0) = ix;
          J(r, 1) = iy;
          break;
        case WarpModel::affine:
          J(r, 0) = ix * x;
          J(r, 1) = ix * y;
          J(r, 2) = ix;
          J(r, 3) = iy * x;
          J(r, 4) = iy * y;
          J(r, 5) = iy;
          break;
        default:
          break;
      }
    }
    // Project the raw Jacobian through the zero-mean normalization.
    Vec col_mean = J.colwise().mean();
    J.rowwise() -= col_mean.transpose();
    Vec proj = J.transpose() * cur.w_hat;
    J = (J - cur.w_hat * proj.transpose()) / cur.norm;

    Vec residual = cur.w_hat - cur.r_hat;
    Mat JtJ = J.transpose() * J;
    Vec rhs = -J.transpose() * residual;

    bool stepped = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Mat damped = JtJ + lambda * Mat::Identity(np, np);
      Vec delta = damped.ldlt().solve(rhs);
      std::vector<double> trial = params;
      for (int i = 0; i < np; ++i) trial[static_cast<size_t>(i)] += delta[i];
      Eval trial_eval = evaluate(trial);
      if (trial_eval.err < cur.err) {
        params = trial;
        cur = std::move(trial_eval);
        lambda = std::max(lambda * 0.1, 1e-12);
        stepped = true;
        if (cur.err < best_err) {
          best_err = cur.err;
          best_params = params;
        }
        if (delta.norm() < 1e-6) iter = 50;  // converged
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }

  result.params = best_params;
  Mat warped = warp_image(cand, model, best_params);
  Tensor out(candidate.shape());
  if (candidate.shape().size() == 2 || candidate.shape()[0] == 1) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out[static_cast<Eigen::Index>(y) * w + x] = warped(y, x);
  } else {
    // Multi-channel: apply the estimated warp per channel.
    const auto& s = candidate.shape();
    const Eigen::Index plane = static_cast<Eigen::Index>(s[1]) * s[2];
    for (int c = 0; c < s[0]; ++c) {
      Mat ch(s[1], s[2]);
      for (int y = 0; y < s[1]; ++y)
        for (int x = 0; x < s[2]; ++x)
          ch(y, x) = candidate[c * plane + static_cast<Eigen::Index>(y) * s[2] + x];
      Mat wch = warp_image(ch, model, best_params);
      for (int y = 0; y < s[1]; ++y)
        for (int x = 0; x < s[2]; ++x)
          out[c * plane + static_cast<Eigen::Index>(y) * s[2] + x] = wch(y, x);
    }
  }
  result.warped = std::move(out);
  return result;
}

double pass_score(const Tensor& adversarial, const Tensor& original, WarpModel warp,
                  const SsimParams& params) {
  AlignResult aligned = align(adversarial, original, warp);
  return ssim(aligned.warped, original, params);
}

}  // namespace advforge
