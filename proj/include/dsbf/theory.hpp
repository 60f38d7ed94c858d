#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsbf/datagen.hpp"
#include "dsbf/numerics/linalg.hpp"

namespace dsbf::theory {

struct EstimatorResult {
  Matrix mu_hat;  // d_h x d_h (or pooled_dim x d_h)
  Vector beta_hat;
  std::size_t n = 0;
  double min_pivot = 0.0;  // smallest Cholesky pivot over both solves
};

// mu = (Hm^T Hm)^-1 Hm^T Hn. Requires n > columns of Hm.
Matrix project_regress(const Matrix& h_unlabeled, const Matrix& h_labeled, SolveDiagnostics* diag = nullptr);

// beta = (Hhat^T Hhat)^-1 Hhat^T y with Hhat = Hm mu.
Vector rectify_regress(const Matrix& h_unlabeled, const Matrix& mu_hat, std::span<const double> y_labeled,
                       SolveDiagnostics* diag = nullptr);

EstimatorResult two_stage_estimate(const Matrix& h_unlabeled, const Matrix& h_labeled,
                                   std::span<const double> y_labeled);

// Ordinary least squares of y on Hn, no projection.
Vector naive_regress(const Matrix& h_labeled, std::span<const double> y_labeled);

struct SweepOptions {
  std::size_t labeled_domain = 0;
  std::vector<std::size_t> unlabeled_domains{1};
  // Stack the unlabeled domains' features side by side as the first-stage
  // regressors. Without it only the first unlabeled domain is used.
  bool pool_unlabeled = false;
};

struct SweepRow {
  std::size_t n = 0;
  double mean_error = 0.0;  // mean ||beta_hat - beta||_2 over reps
  double se_error = 0.0;
  Vector mean_beta;
  Vector se_beta;
  double naive_mean_error = 0.0;
  double naive_se_error = 0.0;
  Vector naive_mean_beta;
  double min_pivot = 0.0;
};

struct RateReport {
  std::vector<SweepRow> rows;
  Vector beta;
  std::size_t reps = 0;
  double slope = 0.0;  // least-squares slope of log mean_error on log n
  double slope_lo = -0.65;
  double slope_hi = -0.35;
  bool slope_ok = false;
  // every coordinate of mean beta_hat within 4 standard errors of beta, at every n
  bool unbiased_ok = false;
  // mean errors non-increasing in n up to 2 standard errors
  bool monotone_ok = false;
  // naive mean error / two-stage mean error at the largest n
  double naive_factor = 0.0;
  bool naive_factor_ok = false;
  double naive_factor_min = 3.0;
  std::vector<std::string> warnings;
};

RateReport consistency_sweep(const StructuralSpec& spec, std::span<const std::size_t> n_grid, std::size_t reps,
                             std::uint64_t seed, const SweepOptions& opts = {});

// Least-squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

// n,mean_error,se_error,naive_mean_error,naive_se_error,mean_beta_0..,se_beta_0..
void write_rate_csv(const std::filesystem::path& path, const RateReport& report);
std::string rate_summary_json(const RateReport& report);

}  // namespace dsbf::theory
