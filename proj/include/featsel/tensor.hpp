#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace featsel {

/// Dense row-major tensor of 64-bit floats. The single storage layout used
/// by every dense quantity in the project.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("Tensor: shape does not match data length");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * shape[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<EMat> emap(Tensor& t, std::size_t rows, std::size_t cols) {
  return Eigen::Map<EMat>(t.data.data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
}

inline Eigen::Map<const EMat> ecmap(const Tensor& t, std::size_t rows,
                                    std::size_t cols) {
  return Eigen::Map<const EMat>(t.data.data(), static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
}

/// Standard 2-D matrix product.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: dimension mismatch " +
                                shape_str(a.shape) + " x " + shape_str(b.shape));
  Tensor out({a.shape[0], b.shape[1]});
  emap(out, out.shape[0], out.shape[1]).noalias() =
      ecmap(a, a.shape[0], a.shape[1]) * ecmap(b, b.shape[0], b.shape[1]);
  return out;
}

/// Numerically stable logistic function.
inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace featsel
