#include "dsbf/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dsbf/error.hpp"
#include "dsbf/numerics/kernels.hpp"

namespace dsbf {
namespace {

constexpr double kRidgeScale = 1e-10;
// A pivot no larger than this multiple of the ridge carries no information
// from the original matrix.
constexpr double kPivotFloorInRidges = 10.0;
constexpr double kSymmetryTol = 1e-10;

}  // namespace

Matrix solve_spd(const Matrix& a, const Matrix& b, SolveDiagnostics* diag) {
  const std::size_t n = a.rows();
  if (n == 0 || a.cols() != n) throw DimensionError("solve_spd: matrix must be square and non-empty");
  if (b.rows() != n) throw DimensionError("solve_spd: right-hand side has wrong row count");

  double trace = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trace += a(i, i);
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > kSymmetryTol * std::max(scale, 1.0)) {
        throw DimensionError("solve_spd: matrix is not symmetric at (" + std::to_string(i) + "," +
                             std::to_string(j) + ")");
      }
    }
  }

  const double ridge = trace > 0.0 ? kRidgeScale * trace / static_cast<double>(n) : 0.0;
  const double floor = kPivotFloorInRidges * ridge;

  // Lower-triangular Cholesky factor, row-major.
  Matrix l(n, n);
  double min_pivot = std::numeric_limits<double>::infinity();
  std::size_t min_index = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double* lj = l.row(j).data();
    double pivot = a(j, j) + ridge - kernels::dot(lj, lj, j);
    if (pivot < min_pivot) {
      min_pivot = pivot;
      min_index = j;
    }
    if (!(pivot > floor)) {
      throw SingularityError("solve_spd: matrix is not positive definite; pivot " + std::to_string(j) +
                                 " = " + std::to_string(pivot),
                             j, pivot);
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - kernels::dot(l.row(i).data(), lj, j)) / ljj;
    }
  }

  if (diag != nullptr) {
    diag->jitter = ridge;
    diag->min_pivot = min_pivot;
    diag->min_pivot_index = min_index;
  }

  Matrix x = b;
  const std::size_t m = b.cols();
  // forward: L y = b
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) kernels::axpy(-l(i, k), x.row(k).data(), x.row(i).data(), m);
    kernels::scale(1.0 / l(i, i), x.row(i).data(), m);
  }
  // backward: L^T x = y
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) kernels::axpy(-l(k, ii), x.row(k).data(), x.row(ii).data(), m);
    kernels::scale(1.0 / l(ii, ii), x.row(ii).data(), m);
  }
  return x;
}

double min_eigenvalue_symmetric(const Matrix& a) {
  const std::size_t n = a.rows();
  if (n == 0 || a.cols() != n) throw DimensionError("min_eigenvalue_symmetric: matrix must be square");
  Matrix m = a;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (m(p, q) == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  double lo = m(0, 0);
  for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, m(i, i));
  return lo;
}

}  // namespace dsbf
