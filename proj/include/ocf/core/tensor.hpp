#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocf {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + ")";
}

// Dense row-major double tensor. Rank is dynamic; networks use (C,H,W) for
// feature maps and (N) for vectors, scalars are shape (1).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  static Tensor scalar(double v) {
    Tensor t(Shape{1});
    t.data_[0] = v;
    return t;
  }
  static Tensor from(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("Tensor::from: size mismatch for " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // (C,H,W) accessors
  double& at(int c, int h, int w) {
    return data_[(static_cast<int64_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at(int c, int h, int w) const {
    return data_[(static_cast<int64_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
  double min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }
  double max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void check_shape(const Tensor& t, const Shape& expect, const char* what) {
  if (t.shape() != expect)
    throw std::invalid_argument(std::string(what) + ": expected shape " + shape_str(expect) +
                                ", got " + shape_str(t.shape()));
}

}  // namespace ocf
