#include "dsbf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsbf/error.hpp"
#include "dsbf/numerics/rng.hpp"

namespace dsbf {
namespace {

struct Coord {
  std::size_t block;
  std::size_t offset;
};

constexpr std::size_t kMinPerBlock = 4;
constexpr double kDenominatorFloor = 1e-8;

}  // namespace

GradCheckReport finite_diff_check(std::span<const GradTerm> terms, const Gradients& analytic,
                                  const ModelBundle& model, const GradCheckOptions& opts) {
  if (!(opts.h >= 1e-6 && opts.h <= 1e-4)) throw ConfigError("finite_diff_check: h must lie in [1e-6, 1e-4]");

  BlockMask routed;
  for (const auto& t : terms) routed = routed | t.routes;

  ModelBundle probe = model;
  std::vector<ParamBlock> blocks;
  for_each_block(probe, [&](const ParamBlock& blk) { blocks.push_back(blk); });
  std::vector<ConstParamBlock> grad_blocks;
  for_each_block(analytic, [&](const ConstParamBlock& blk) { grad_blocks.push_back(blk); });
  if (grad_blocks.size() != blocks.size()) throw DimensionError("finite_diff_check: gradient/model shape mismatch");

  std::size_t total = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (grad_blocks[b].values.size() != blocks[b].values.size()) {
      throw DimensionError("finite_diff_check: gradient/model shape mismatch at " + blocks[b].name);
    }
    if (routed.contains(blocks[b].group)) total += blocks[b].values.size();
  }

  Rng rng(opts.seed);
  std::vector<Coord> coords;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!routed.contains(blocks[b].group)) continue;
    const std::size_t n = blocks[b].values.size();
    std::size_t take = n;
    if (total > opts.min_coords) {
      const auto share = static_cast<std::size_t>(
          std::ceil(static_cast<double>(opts.min_coords) * static_cast<double>(n) / static_cast<double>(total)));
      take = std::min(n, std::max(share, kMinPerBlock));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    for (std::size_t o : idx) coords.push_back({b, o});
  }

  GradCheckReport report;
  for (const Coord& c : coords) {
    const BlockGroup group = blocks[c.block].group;
    double& p = blocks[c.block].values[c.offset];
    const double saved = p;
    double numeric = 0.0;
    for (const auto& term : terms) {
      if (!term.routes.contains(group)) continue;
      p = saved + opts.h;
      const double plus = term.value(probe);
      p = saved - opts.h;
      const double minus = term.value(probe);
      numeric += term.weight * (plus - minus) / (2.0 * opts.h);
    }
    p = saved;
    const double an = grad_blocks[c.block].values[c.offset];
    const double denom = std::max({std::abs(an), std::abs(numeric), kDenominatorFloor});
    const double rel = std::abs(an - numeric) / denom;
    ++report.coords_checked;
    if (report.coords_checked == 1 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_block = blocks[c.block].name;
      report.worst_index = c.offset;
      report.worst_analytic = an;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

GradCheckReport finite_diff_check(const std::function<double(const ModelBundle&)>& loss_fn,
                                  const Gradients& analytic, BlockMask routes, const ModelBundle& model,
                                  const GradCheckOptions& opts) {
  const GradTerm term{"loss", 1.0, routes, loss_fn};
  return finite_diff_check(std::span<const GradTerm>(&term, 1), analytic, model, opts);
}

}  // namespace dsbf
