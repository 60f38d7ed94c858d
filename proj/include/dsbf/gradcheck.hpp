#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsbf/networks.hpp"

namespace dsbf {

// One additive piece of an objective together with the parameter groups its
// gradient is routed to. A stop-gradient convention is expressed by leaving a
// group out of `routes`: the numeric derivative of this term is then never
// taken with respect to that group's coordinates.
struct GradTerm {
  std::string name;
  double weight = 1.0;
  BlockMask routes;
  std::function<double(const ModelBundle&)> value;
};

struct GradCheckOptions {
  double h = 1e-5;
  std::size_t min_coords = 200;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Central differences (L(p+h) - L(p-h)) / 2h on a seeded subset of the
// coordinates belonging to routed groups: every coordinate when there are at
// most `min_coords`, otherwise at least `min_coords` spread over all routed
// blocks in proportion to their size (and at least a few from each block).
// For a coordinate in group G the numeric side sums only the terms that route
// to G. Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(std::span<const GradTerm> terms, const Gradients& analytic,
                                  const ModelBundle& model, const GradCheckOptions& opts = {});

// Single-term convenience.
GradCheckReport finite_diff_check(const std::function<double(const ModelBundle&)>& loss_fn,
                                  const Gradients& analytic, BlockMask routes, const ModelBundle& model,
                                  const GradCheckOptions& opts = {});

}  // namespace dsbf
