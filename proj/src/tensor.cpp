#include "tml/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tml {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("Tensor: rank must be 1-4");
  }
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: dimensions must be positive");
    n *= static_cast<size_t>(d);
  }
  data.assign(n, fill);
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace tml
