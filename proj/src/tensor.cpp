#include "summ/tensor.hpp"

#include <cmath>
#include <sstream>

namespace summ {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

static void check_shape(const Shape& s) {
  if (s.empty() || s.size() > 2) throw ShapeError("tensor rank must be 1 or 2, got " + shape_str(s));
  for (auto e : s)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::vector(std::vector<Real> v) {
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1;
  return t;
}

Real Tensor::item() const {
  if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

void Tensor::fill(Real v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (auto x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::axpy(Real scale, const Tensor& other) {
  if (other.shape_ != shape_) throw ShapeError("axpy shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  const Real* src = other.data_.data();
  Real* dst = data_.data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

}  // namespace summ
