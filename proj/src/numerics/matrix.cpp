#include "dsbf/numerics/matrix.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "dsbf/error.hpp"
#include "dsbf/numerics/kernels.hpp"

namespace dsbf {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool cond, const char* op, const Matrix& a, const Matrix& b) {
  if (!cond) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
  }
}

std::atomic<std::size_t> g_zero_norm_events{0};

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if ((rows == 0) != (cols == 0)) {
    throw DimensionError("Matrix: degenerate shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols || ((rows == 0) != (cols == 0))) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), values.empty() ? 0 : 1, std::vector<double>(values.begin(), values.end()));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s != 0.0) kernels::axpy(s, b.row(k).data(), out, n);
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* brow = b.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s != 0.0) kernels::axpy(s, brow, c.row(k).data(), n);
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      c(i, j) = kernels::dot(a.row(i).data(), b.row(j).data(), a.cols());
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_scaled_inplace(c, b, 1.0);
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_scaled_inplace(c, b, -1.0);
  return c;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix c = a;
  kernels::scale(s, c.values().data(), c.size());
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard", a, b);
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

void add_scaled_inplace(Matrix& a, const Matrix& b, double s) {
  require(a.same_shape(b), "add", a, b);
  kernels::axpy(s, b.values().data(), a.values().data(), a.size());
}

Vector column_sums(const Matrix& a) {
  Vector s(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) kernels::axpy(1.0, a.row(i).data(), s.data(), a.cols());
  return s;
}

Vector column_means(const Matrix& a) {
  Vector s = column_sums(a);
  if (a.rows() > 0) kernels::scale(1.0 / static_cast<double>(a.rows()), s.data(), s.size());
  return s;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices) {
  if (indices.empty()) return {};
  Matrix out(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(a.row(indices[i]).data(), a.cols(), out.row(i).data());
  }
  return out;
}

Matrix hconcat(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == parts[0].rows(), "hconcat", parts[0], p);
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* dst = out.row(i).data();
    for (const auto& p : parts) dst = std::copy_n(p.row(i).data(), p.cols(), dst);
  }
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw DimensionError("softmax_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const double inv = 1.0 / total;
    for (double& v : o) v *= inv;
  }
  return out;
}

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff", a, b);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

bool all_finite(const Matrix& a) noexcept {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  return kernels::dot(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> a) { return std::sqrt(kernels::dot(a.data(), a.data(), a.size())); }

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_distance: length mismatch");
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) {
    g_zero_norm_events.fetch_add(1, std::memory_order_relaxed);
    return 1.0;
  }
  return 1.0 - dot(u, v) / (nu * nv);
}

std::size_t cosine_zero_norm_events() noexcept { return g_zero_norm_events.load(std::memory_order_relaxed); }

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace dsbf
