#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dsbf {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. A 0x0 matrix is the only empty shape;
// every other shape has both dimensions positive.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
// a += s * b
void add_scaled_inplace(Matrix& a, const Matrix& b, double s);

Vector column_sums(const Matrix& a);
Vector column_means(const Matrix& a);

// Rows selected by index, in the given order.
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);
// Horizontal concatenation; all inputs share the row count.
Matrix hconcat(std::span<const Matrix> parts);

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a) noexcept;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// 1 - cos(u, v). A zero-norm argument yields 1.0 and bumps the counter
// returned by cosine_zero_norm_events().
double cosine_distance(std::span<const double> u, std::span<const double> v);
std::size_t cosine_zero_norm_events() noexcept;

// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace dsbf
