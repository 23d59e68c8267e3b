#include "advforge/tensor.hpp"

#include <cmath>
#include <sstream>

namespace advforge {

Eigen::Index Tensor::shape_size(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(Arr::Zero(shape_size(shape_))) {}

Tensor::Tensor(std::vector<int> shape, Arr data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw ShapeError("shape " + shape_str(shape_) + " does not match data length " +
                     std::to_string(data_.size()));
}

Tensor Tensor::from_vector(const std::vector<Scalar>& v) {
  Arr a(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) a[static_cast<Eigen::Index>(i)] = v[i];
  return Tensor({static_cast<int>(v.size())}, std::move(a));
}

void Tensor::check_finite(const std::string& context) const {
  if (!data_.isFinite().all())
    throw std::runtime_error("non-finite values in " + context);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

}  // namespace advforge
