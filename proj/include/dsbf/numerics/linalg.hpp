#pragma once

#include <cstddef>

#include "dsbf/numerics/matrix.hpp"

namespace dsbf {

struct SolveDiagnostics {
  double jitter = 0.0;
  // Smallest pivot (squared Cholesky diagonal) seen during factorization.
  double min_pivot = 0.0;
  std::size_t min_pivot_index = 0;
};

// Solves a * x = b for symmetric positive definite a by Cholesky
// factorization. A ridge of 1e-10 * trace(a) / dim is added to the diagonal
// first. Throws DimensionError for non-square or asymmetric (beyond 1e-10
// relative) input and SingularityError when a pivot is not positive.
Matrix solve_spd(const Matrix& a, const Matrix& b, SolveDiagnostics* diag = nullptr);

// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
double min_eigenvalue_symmetric(const Matrix& a);

}  // namespace dsbf
