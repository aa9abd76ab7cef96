#include "shot/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "shot/error.hpp"

namespace shot {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("Tensor: dimensions must be positive");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("Tensor: empty shape");
  std::size_t n = 1;
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("Tensor: dimensions must be positive, got " + shape_string(shape_));
    n *= d;
  }
  if (n != data_.size()) {
    throw ShapeError("Tensor: shape " + shape_string(shape_) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(std::vector<std::size_t>{1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::zeros_like(const Tensor& t) {
  return Tensor(t.shape_, std::vector<double>(t.size(), 0.0));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  return shape_.empty() ? 0 : 1;
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("Tensor::item: tensor of shape " + shape_string(shape_) + " is not a scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  std::vector<double> out;
  out.reserve(indices.size() * c);
  for (auto i : indices) {
    if (i >= rows()) throw ShapeError("Tensor::gather_rows: index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({indices.size(), c}, std::move(out));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void require_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) throw NumericError(where + ": non-finite value");
}

}  // namespace shot
