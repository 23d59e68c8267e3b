#include "advforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace advforge {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated IDX file");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

std::vector<Tensor> read_idx_images(const std::string& path) {
  auto in = open_in(path);
  if (read_be32(in) != kImageMagic) throw std::runtime_error("bad IDX image magic in " + path);
  const int n = static_cast<int>(read_be32(in));
  const int h = static_cast<int>(read_be32(in));
  const int w = static_cast<int>(read_be32(in));
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  std::vector<Tensor> images;
  images.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("truncated IDX image data in " + path);
    Tensor t({1, h, w});
    for (size_t j = 0; j < buf.size(); ++j) t[static_cast<Eigen::Index>(j)] = buf[j];
    images.push_back(std::move(t));
  }
  return images;
}

void write_idx_images(const std::string& path, const std::vector<Tensor>& images) {
  auto out = open_out(path);
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  int h = 0, w = 0;
  if (!images.empty()) {
    const auto& s = images[0].shape();
    h = s[s.size() - 2];
    w = s[s.size() - 1];
  }
  write_be32(out, static_cast<std::uint32_t>(h));
  write_be32(out, static_cast<std::uint32_t>(w));
  for (const Tensor& t : images) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double v = std::clamp(t[i], 0.0, 255.0);
      const unsigned char b = static_cast<unsigned char>(std::lround(v));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
}

std::vector<int> read_idx_labels(const std::string& path) {
  auto in = open_in(path);
  if (read_be32(in) != kLabelMagic) throw std::runtime_error("bad IDX label magic in " + path);
  const int n = static_cast<int>(read_be32(in));
  std::vector<int> labels(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    unsigned char b;
    in.read(reinterpret_cast<char*>(&b), 1);
    if (!in) throw std::runtime_error("truncated IDX label data in " + path);
    labels[static_cast<size_t>(i)] = b;
  }
  return labels;
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
}

LabeledDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                int num_classes) {
  LabeledDataset ds;
  ds.images = read_idx_images(images_path);
  ds.labels = read_idx_labels(labels_path);
  ds.num_classes = num_classes;
  if (ds.images.size() != ds.labels.size())
    throw std::runtime_error("image/label count mismatch: " + std::to_string(ds.images.size()) +
                             " vs " + std::to_string(ds.labels.size()));
  return ds;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  LabeledDataset ds;
  ds.num_classes = spec.num_classes;
  const int h = spec.height, w = spec.width;

  struct Bump {
    double cy, cx, sigma, amp;
  };
  std::vector<std::vector<Bump>> class_bumps(static_cast<size_t>(spec.num_classes));
  std::mt19937_64 template_rng(spec.seed);
  std::uniform_real_distribution<double> upos(0.2, 0.8);
  std::uniform_real_distribution<double> usigma(1.8, 3.5);
  std::uniform_real_distribution<double> uamp(140.0, 255.0);
  for (auto& bumps : class_bumps) {
    const int n_bumps = 3;
    for (int b = 0; b < n_bumps; ++b)
      bumps.push_back({upos(template_rng) * h, upos(template_rng) * w, usigma(template_rng),
                       uamp(template_rng)});
  }

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> shift(-spec.max_shift, spec.max_shift);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  std::uniform_real_distribution<double> contrast(0.7, 1.0);

  // Interleave classes so any prefix of the dataset is roughly balanced.
  for (int s = 0; s < spec.samples_per_class; ++s) {
    for (int c = 0; c < spec.num_classes; ++c) {
      const double dy = shift(rng), dx = shift(rng);
      const double gain = contrast(rng);
      Tensor img({1, h, w});
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double v = 0.0;
          for (const Bump& b : class_bumps[static_cast<size_t>(c)]) {
            const double ry = y - (b.cy + dy), rx = x - (b.cx + dx);
            v += b.amp * std::exp(-(ry * ry + rx * rx) / (2.0 * b.sigma * b.sigma));
          }
          v = gain * v + noise(rng);
          img[y * w + x] = std::clamp(std::round(v), 0.0, 255.0);
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace advforge
