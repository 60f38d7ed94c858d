#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsbf/gradcheck.hpp"
#include "dsbf/losses.hpp"

namespace dsbf {

// Small seeded problem for finite-difference checks. Every relu
// pre-activation reached by any batch sits at least `kink_margin` away from
// zero, so central differences never straddle a kink.
struct GradFixture {
  ModelBundle model;
  Stage2Batch batch;
};

struct GradFixtureOptions {
  ModelDims dims{3, 7, 6, 5, 3, 3};
  std::size_t rows = 6;
  double kink_margin = 1e-3;
  std::size_t max_attempts = 1000;
};

GradFixture make_grad_fixture(std::uint64_t seed, const GradFixtureOptions& opts = {});

struct LossCheckLine {
  std::string loss;
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t seeds = 0;
  std::size_t coords = 0;
  bool pass = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 20;
  double h = 1e-5;
  double tolerance = 1e-4;
  // Test hook: called on each analytic gradient before comparison.
  std::function<void(const std::string& loss, Gradients& grads)> corrupt;
};

// cl, im, cu, fp, bf and the stage-2 composite (with cl added), each over
// `seeds` fixtures.
std::vector<LossCheckLine> run_grad_suite(const GradSuiteOptions& opts = {});

// One line per loss: name, max relative error, worst block, PASS/FAIL.
std::string format_grad_report(const std::vector<LossCheckLine>& lines);

}  // namespace dsbf
