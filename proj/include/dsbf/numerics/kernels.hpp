#pragma once

// Inner-loop kernels shared by every dense operation.
//
// Each kernel has a scalar reference implementation and, where the target
// supports it, a vectorized one (AVX2+FMA on x86-64, NEON on AArch64). The
// active table is chosen once per process from the CPU feature bits; setting
// DSBF_SIMD=scalar in the environment forces the reference path. The two
// paths agree to rounding (they sum in different orders), not bit-for-bit.

#include <cstddef>
#include <string_view>

namespace dsbf::kernels {

using DotFn = double (*)(const double* a, const double* b, std::size_t n);
// y[i] += alpha * x[i]
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);
// y[i] = alpha * y[i]
using ScaleFn = void (*)(double alpha, double* y, std::size_t n);
using SumFn = double (*)(const double* x, std::size_t n);

struct KernelTable {
  std::string_view name;
  DotFn dot;
  AxpyFn axpy;
  ScaleFn scale;
  SumFn sum;
};

const KernelTable& scalar_table() noexcept;

// nullptr when the build or the running CPU lacks the instruction set.
const KernelTable* simd_table() noexcept;

// The table selected for this process.
const KernelTable& active() noexcept;

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double alpha, double* y, std::size_t n) { active().scale(alpha, y, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }

namespace detail {
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;
}  // namespace detail

}  // namespace dsbf::kernels
