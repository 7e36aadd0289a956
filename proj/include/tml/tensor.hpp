#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace tml {

// Dense float64 array of rank 1-4. Row-major, contiguous. This is the
// carrier for activations, parameters and gradients; hot loops index the
// raw data() pointer directly.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::initializer_list<int> s, double fill = 0.0) : Tensor(std::vector<int>(s), fill) {}

  size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  const double& at(int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  const double& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const double& at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const double& at(int i, int j, int k, int l) const {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }
};

}  // namespace tml
