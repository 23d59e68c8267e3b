#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace advforge {

using Scalar = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Arr = Eigen::ArrayXd;

/// Dense n-dimensional array of doubles, row-major flat storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, Arr data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor from_vector(const std::vector<Scalar>& v);

  const std::vector<int>& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }

  Arr& data() { return data_; }
  const Arr& data() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Throws if any element is NaN or infinite.
  void check_finite(const std::string& context) const;

  Tensor reshaped(std::vector<int> shape) const;

  static Eigen::Index shape_size(const std::vector<int>& shape);
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  Arr data_;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace advforge
