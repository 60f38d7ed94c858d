#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsbf/gradcheck.hpp"
#include "dsbf/networks.hpp"

namespace dsbf {

// Floor applied inside every log so confident wrong predictions stay finite.
inline constexpr double kLogClamp = 1e-12;

// A loss value with its gradient already restricted to the blocks the loss
// is allowed to update (`routes`).
struct LossValue {
  double value = 0.0;
  Gradients grads;
  BlockMask routes;
};

struct LabeledBatch {
  Matrix x;
  std::vector<std::size_t> labels;
};

// One unlabeled domain's batch, rows positionally paired with the labeled
// batch. `pseudo` holds the pseudo label of each row.
struct UnlabeledBatch {
  Matrix x;
  std::vector<std::size_t> pseudo;
};

Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes);

// Routes used by the stage-2 update.
inline constexpr BlockMask kRouteCl = BlockGroup::backbone | BlockGroup::bottleneck | BlockGroup::classifier;
inline constexpr BlockMask kRouteExtractor = BlockGroup::backbone | BlockGroup::bottleneck;
inline constexpr BlockMask kRouteFp = BlockMask(BlockGroup::projection);
inline constexpr BlockMask kRouteBf = BlockGroup::classifier | BlockGroup::attention | BlockGroup::projection;

// Mean cross-entropy of softmax(c(b(g(x)))) against indicator rows of y.
LossValue loss_cl(const ModelBundle& model, const Matrix& x, const Matrix& y);
double loss_cl_value(const ModelBundle& model, const Matrix& x, const Matrix& y);

// Information maximization averaged over the unlabeled domains:
// sum_r t_r log t_r - mean_i sum_r u_ir log u_ir, with t the batch-mean prediction.
// The classifier gradient is dropped unless `route_classifier` is set.
LossValue loss_im(const ModelBundle& model, std::span<const Matrix> unlabeled, bool route_classifier = false);
double loss_im_value(const ModelBundle& model, std::span<const Matrix> unlabeled);

// Pseudo-label cross-entropy averaged over the unlabeled domains. The
// classifier gradient is dropped unless `route_classifier` is set.
LossValue loss_cu(const ModelBundle& model, std::span<const UnlabeledBatch> unlabeled, bool route_classifier = false);
double loss_cu_value(const ModelBundle& model, std::span<const UnlabeledBatch> unlabeled);

// Squared distance between v_s(g(x^s)) and b(g(x^1)) over rows whose pseudo
// label equals the labeled row's label; mean over matched rows per domain,
// then mean over domains that have at least one match. The b(g(.)) side is a
// constant target: only the projections receive gradient.
LossValue loss_fp(const ModelBundle& model, const LabeledBatch& labeled, std::span<const UnlabeledBatch> unlabeled);
double loss_fp_value(const ModelBundle& model, const LabeledBatch& labeled, std::span<const UnlabeledBatch> unlabeled);

// Cross-entropy of softmax(c(attention(v_s(g(x^s))))) against the labeled
// rows' labels over matched rows; mean over matched rows per domain, summed
// over domains and divided by K - 1. Gradient reaches c, attention and v.
LossValue loss_bf(const ModelBundle& model, std::span<const std::size_t> labeled_labels,
                  std::span<const UnlabeledBatch> unlabeled, double alpha_offset = 0.0);
double loss_bf_value(const ModelBundle& model, std::span<const std::size_t> labeled_labels,
                     std::span<const UnlabeledBatch> unlabeled, double alpha_offset = 0.0);

struct StageLossParts {
  double cl = 0.0;
  double im = 0.0;
  double cu = 0.0;
  double fp = 0.0;
  double bf = 0.0;
};

struct StageLosses {
  double s1 = 0.0;
  double s2 = 0.0;
};

// s1 = cl; s2 = lambda (im + cu) + gamma (fp + bf) [+ cl when add_cl].
StageLosses stage_losses(double lambda, double gamma, const StageLossParts& parts, bool add_cl = false);

struct Stage2Batch {
  LabeledBatch labeled;
  std::vector<UnlabeledBatch> unlabeled;
};

struct Stage2Weights {
  double lambda = 1.0;
  double gamma = 1.0;
  bool add_cl = false;
};

struct Stage2Result {
  StageLossParts parts;
  double total = 0.0;
  Gradients grads;
};

// Evaluates every stage-2 loss on one batch and returns the weighted,
// routed gradient.
Stage2Result stage2_objective(const ModelBundle& model, const Stage2Batch& batch, const Stage2Weights& w,
                              double alpha_offset = 0.0);

// The same objective as a list of routed terms, for finite-difference checks.
// Captures `batch` by reference.
std::vector<GradTerm> stage2_terms(const Stage2Batch& batch, const Stage2Weights& w);

}  // namespace dsbf
