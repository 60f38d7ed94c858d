#include "dsbf/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "dsbf/error.hpp"

namespace dsbf::theory {
namespace {

Vector column_to_vector(const Matrix& m) {
  Vector v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, 0);
  return v;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

Matrix project_regress(const Matrix& h_unlabeled, const Matrix& h_labeled, SolveDiagnostics* diag) {
  if (h_unlabeled.rows() != h_labeled.rows()) throw DimensionError("project_regress: row counts differ");
  if (h_unlabeled.rows() <= h_unlabeled.cols()) {
    throw DimensionError("project_regress: need more samples than regressors");
  }
  return solve_spd(matmul_tn(h_unlabeled, h_unlabeled), matmul_tn(h_unlabeled, h_labeled), diag);
}

Vector rectify_regress(const Matrix& h_unlabeled, const Matrix& mu_hat, std::span<const double> y_labeled,
                       SolveDiagnostics* diag) {
  if (y_labeled.size() != h_unlabeled.rows()) throw DimensionError("rectify_regress: label count mismatch");
  const Matrix h_hat = matmul(h_unlabeled, mu_hat);
  const Matrix y = Matrix::column(y_labeled);
  return column_to_vector(solve_spd(matmul_tn(h_hat, h_hat), matmul_tn(h_hat, y), diag));
}

EstimatorResult two_stage_estimate(const Matrix& h_unlabeled, const Matrix& h_labeled,
                                   std::span<const double> y_labeled) {
  EstimatorResult r;
  SolveDiagnostics first;
  SolveDiagnostics second;
  r.mu_hat = project_regress(h_unlabeled, h_labeled, &first);
  r.beta_hat = rectify_regress(h_unlabeled, r.mu_hat, y_labeled, &second);
  r.n = h_unlabeled.rows();
  r.min_pivot = std::min(first.min_pivot, second.min_pivot);
  if (!std::all_of(r.beta_hat.begin(), r.beta_hat.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericalError("two_stage_estimate: non-finite estimate");
  }
  return r;
}

Vector naive_regress(const Matrix& h_labeled, std::span<const double> y_labeled) {
  if (y_labeled.size() != h_labeled.rows()) throw DimensionError("naive_regress: label count mismatch");
  if (h_labeled.rows() <= h_labeled.cols()) throw DimensionError("naive_regress: need more samples than regressors");
  const Matrix y = Matrix::column(y_labeled);
  return column_to_vector(solve_spd(matmul_tn(h_labeled, h_labeled), matmul_tn(h_labeled, y)));
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope: need two or more points");
  double mx = 0.0;
  double my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

RateReport consistency_sweep(const StructuralSpec& spec, std::span<const std::size_t> n_grid, std::size_t reps,
                             std::uint64_t seed, const SweepOptions& opts) {
  spec.validate();
  if (n_grid.empty()) throw ConfigError("consistency_sweep: empty n grid");
  if (reps == 0) throw ConfigError("consistency_sweep: reps must be positive");
  if (opts.labeled_domain >= spec.k) throw ConfigError("consistency_sweep: labeled domain out of range");
  if (opts.unlabeled_domains.empty()) throw ConfigError("consistency_sweep: no unlabeled domain");
  for (std::size_t u : opts.unlabeled_domains) {
    if (u >= spec.k || u == opts.labeled_domain) throw ConfigError("consistency_sweep: bad unlabeled domain index");
  }

  RateReport report;
  report.beta = spec.beta;
  report.reps = reps;
  if (reps < 2) report.warnings.push_back("reps < 2: standard errors undefined, Monte Carlo noise dominates");
  const std::size_t d = spec.d_h;
  const Rng root(seed);

  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const std::size_t n = n_grid[gi];
    Moments err;
    Moments naive_err;
    std::vector<Moments> coord(d);
    std::vector<Moments> naive_coord(d);
    double min_pivot = std::numeric_limits<double>::infinity();
    for (std::size_t rep = 0; rep < reps; ++rep) {
      Rng rng = root.derive(gi * 1'000'003ULL + rep);
      const StructuralSample sample = gen_structural(spec, n, rng);
      const auto& labeled = sample.domains[opts.labeled_domain];
      Matrix instruments;
      if (opts.pool_unlabeled) {
        std::vector<Matrix> parts;
        for (std::size_t u : opts.unlabeled_domains) parts.push_back(sample.domains[u].h);
        instruments = hconcat(parts);
      } else {
        instruments = sample.domains[opts.unlabeled_domains.front()].h;
      }
      const EstimatorResult est = two_stage_estimate(instruments, labeled.h, labeled.y);
      const Vector naive = naive_regress(labeled.h, labeled.y);
      min_pivot = std::min(min_pivot, est.min_pivot);
      err.add(l2_distance(est.beta_hat, spec.beta));
      naive_err.add(l2_distance(naive, spec.beta));
      for (std::size_t c = 0; c < d; ++c) {
        coord[c].add(est.beta_hat[c]);
        naive_coord[c].add(naive[c]);
      }
    }
    SweepRow row;
    row.n = n;
    row.mean_error = err.mean();
    row.se_error = err.se();
    row.naive_mean_error = naive_err.mean();
    row.naive_se_error = naive_err.se();
    row.min_pivot = min_pivot;
    for (std::size_t c = 0; c < d; ++c) {
      row.mean_beta.push_back(coord[c].mean());
      row.se_beta.push_back(coord[c].se());
      row.naive_mean_beta.push_back(naive_coord[c].mean());
    }
    report.rows.push_back(std::move(row));
  }

  if (report.rows.size() >= 2) {
    Vector xs;
    Vector ys;
    for (const auto& r : report.rows) {
      xs.push_back(static_cast<double>(r.n));
      ys.push_back(std::max(r.mean_error, std::numeric_limits<double>::min()));
    }
    report.slope = loglog_slope(xs, ys);
  } else {
    report.slope = std::numeric_limits<double>::quiet_NaN();
    report.warnings.push_back("single grid point: slope undefined");
  }
  report.slope_ok = report.slope >= report.slope_lo && report.slope <= report.slope_hi;

  // The 1e-8 relative floor only matters when the standard error collapses
  // (the eta = psi = 0 world); there the solver's ridge leaves a fixed bias
  // around 1e-10.
  report.unbiased_ok = reps >= 2;
  for (const auto& r : report.rows) {
    for (std::size_t c = 0; c < d; ++c) {
      const double tol = 4.0 * r.se_beta[c] + 1e-8 * std::max(1.0, std::abs(spec.beta[c]));
      if (!(std::abs(r.mean_beta[c] - spec.beta[c]) <= tol)) report.unbiased_ok = false;
    }
  }
  report.monotone_ok = reps >= 2;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const auto& prev = report.rows[i - 1];
    const auto& cur = report.rows[i];
    if (cur.mean_error > prev.mean_error + 2.0 * std::hypot(prev.se_error, cur.se_error)) report.monotone_ok = false;
  }
  const auto& last = report.rows.back();
  report.naive_factor = last.naive_mean_error / last.mean_error;
  report.naive_factor_ok = report.naive_factor >= report.naive_factor_min;
  return report;
}

void write_rate_csv(const std::filesystem::path& path, const RateReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write rate report: " + path.string());
  const std::size_t d = report.beta.size();
  out << "n,mean_error,se_error,naive_mean_error,naive_se_error";
  for (std::size_t c = 0; c < d; ++c) out << ",mean_beta_" << c;
  for (std::size_t c = 0; c < d; ++c) out << ",se_beta_" << c;
  for (std::size_t c = 0; c < d; ++c) out << ",naive_mean_beta_" << c;
  out << '\n';
  for (const auto& r : report.rows) {
    out << r.n << ',' << fmt6(r.mean_error) << ',' << fmt6(r.se_error) << ',' << fmt6(r.naive_mean_error) << ','
        << fmt6(r.naive_se_error);
    for (double v : r.mean_beta) out << ',' << fmt6(v);
    for (double v : r.se_beta) out << ',' << fmt6(v);
    for (double v : r.naive_mean_beta) out << ',' << fmt6(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string rate_summary_json(const RateReport& report) {
  nlohmann::ordered_json j;
  j["reps"] = report.reps;
  j["slope"] = report.slope;
  j["slope_band"] = {report.slope_lo, report.slope_hi};
  j["slope_ok"] = report.slope_ok;
  j["unbiased_ok"] = report.unbiased_ok;
  j["monotone_ok"] = report.monotone_ok;
  j["naive_factor"] = report.naive_factor;
  j["naive_factor_min"] = report.naive_factor_min;
  j["naive_factor_ok"] = report.naive_factor_ok;
  j["beta"] = report.beta;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"n", r.n},
                    {"mean_error", r.mean_error},
                    {"se_error", r.se_error},
                    {"naive_mean_error", r.naive_mean_error},
                    {"mean_beta", r.mean_beta}});
  }
  j["rows"] = rows;
  j["warnings"] = report.warnings;
  return j.dump(2);
}

}  // namespace dsbf::theory
