#include "dsbf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsbf/attention.hpp"
#include "dsbf/error.hpp"

namespace dsbf {
namespace {

double clamped_log(double x) { return std::log(std::max(x, kLogClamp)); }

// sum_i w_i * (-sum_r y_ir log u_ir) / norm over rows with w_i != 0, where
// u = softmax(logits). When dlogits is non-null it receives the exact
// gradient of that expression (including the clamp) w.r.t. the logits.
double cross_entropy(const Matrix& logits, const Matrix& targets, std::span<const double> row_weight, double norm,
                     Matrix* dlogits) {
  if (!logits.same_shape(targets)) throw DimensionError("cross_entropy: logits and targets differ in shape");
  const Matrix u = softmax_rows(logits);
  if (dlogits != nullptr) *dlogits = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < u.rows(); ++i) {
    const double w = row_weight.empty() ? 1.0 : row_weight[i];
    if (w == 0.0) continue;
    double row_loss = 0.0;
    double unclamped_mass = 0.0;
    for (std::size_t r = 0; r < u.cols(); ++r) {
      const double y = targets(i, r);
      if (y == 0.0) continue;
      row_loss -= y * clamped_log(u(i, r));
      if (u(i, r) >= kLogClamp) unclamped_mass += y;
    }
    total += w * row_loss;
    if (dlogits != nullptr) {
      const double scale = w / norm;
      for (std::size_t r = 0; r < u.cols(); ++r) {
        const double y_live = u(i, r) >= kLogClamp ? targets(i, r) : 0.0;
        (*dlogits)(i, r) = scale * (u(i, r) * unclamped_mass - y_live);
      }
    }
  }
  return total / norm;
}

// Backprop through softmax rows: dz = u * (du - <u, du>).
Matrix softmax_backward(const Matrix& u, const Matrix& du) {
  Matrix dz(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    const double inner = dot(u.row(i), du.row(i));
    for (std::size_t r = 0; r < u.cols(); ++r) dz(i, r) = u(i, r) * (du(i, r) - inner);
  }
  return dz;
}

// Information maximization for one domain's logits. Returns the value and,
// if requested, the gradient w.r.t. the logits scaled by `scale`.
double information_max(const Matrix& logits, double scale, Matrix* dlogits) {
  const Matrix u = softmax_rows(logits);
  const std::size_t n = u.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector t = column_means(u);
  double diversity = 0.0;
  for (double tr : t) diversity += tr * clamped_log(tr);
  double entropy = 0.0;
  for (double ur : u.values()) entropy -= ur * clamped_log(ur);
  entropy *= inv_n;
  if (dlogits != nullptr) {
    Matrix du(u.rows(), u.cols());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < u.cols(); ++r) {
        const double dt = clamped_log(t[r]) + (t[r] >= kLogClamp ? 1.0 : 0.0);
        const double dself = clamped_log(u(i, r)) + (u(i, r) >= kLogClamp ? 1.0 : 0.0);
        du(i, r) = scale * inv_n * (dt - dself);
      }
    }
    *dlogits = softmax_backward(u, du);
  }
  return diversity + entropy;
}

void require_slots(const ModelBundle& model, std::size_t given, const char* who) {
  if (given == 0) throw ConfigError(std::string(who) + ": needs at least one unlabeled domain");
  if (given != model.dims.unlabeled_domains) {
    throw DimensionError(std::string(who) + ": got " + std::to_string(given) + " unlabeled batches, model has " +
                         std::to_string(model.dims.unlabeled_domains) + " slots");
  }
}

std::vector<double> match_mask(std::span<const std::size_t> labels, std::span<const std::size_t> pseudo,
                               std::size_t& matches) {
  if (labels.size() != pseudo.size()) throw DimensionError("paired batches differ in length");
  std::vector<double> mask(labels.size(), 0.0);
  matches = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == pseudo[i]) {
      mask[i] = 1.0;
      ++matches;
    }
  }
  return mask;
}

double cl_impl(const ModelBundle& model, const Matrix& x, const Matrix& y, Gradients* grads) {
  if (y.rows() != x.rows() || y.cols() != model.dims.classes) throw DimensionError("loss_cl: label matrix shape");
  ForwardCache cache;
  const Matrix logits = forward_logits(model, x, grads != nullptr ? &cache : nullptr);
  Matrix dlogits;
  const double value =
      cross_entropy(logits, y, {}, static_cast<double>(x.rows()), grads != nullptr ? &dlogits : nullptr);
  if (grads != nullptr) backward_logits(model, cache, dlogits, *grads, kRouteCl);
  return value;
}

double im_impl(const ModelBundle& model, std::span<const Matrix> unlabeled, Gradients* grads, BlockMask route) {
  require_slots(model, unlabeled.size(), "loss_im");
  const double inv_k = 1.0 / static_cast<double>(unlabeled.size());
  double total = 0.0;
  for (const auto& x : unlabeled) {
    ForwardCache cache;
    const Matrix logits = forward_logits(model, x, grads != nullptr ? &cache : nullptr);
    Matrix dlogits;
    total += information_max(logits, inv_k, grads != nullptr ? &dlogits : nullptr);
    if (grads != nullptr) backward_logits(model, cache, dlogits, *grads, route);
  }
  return total * inv_k;
}

double cu_impl(const ModelBundle& model, std::span<const UnlabeledBatch> unlabeled, Gradients* grads,
               BlockMask route) {
  require_slots(model, unlabeled.size(), "loss_cu");
  const double k1 = static_cast<double>(unlabeled.size());
  double total = 0.0;
  for (const auto& batch : unlabeled) {
    ForwardCache cache;
    const Matrix logits = forward_logits(model, batch.x, grads != nullptr ? &cache : nullptr);
    if (batch.pseudo.size() != batch.x.rows()) throw DimensionError("loss_cu: pseudo label count");
    const Matrix y = one_hot(batch.pseudo, model.dims.classes);
    Matrix dlogits;
    total += cross_entropy(logits, y, {}, static_cast<double>(batch.x.rows()) * k1,
                           grads != nullptr ? &dlogits : nullptr);
    if (grads != nullptr) backward_logits(model, cache, dlogits, *grads, route);
  }
  return total;
}

double fp_impl(const ModelBundle& model, const LabeledBatch& labeled, std::span<const UnlabeledBatch> unlabeled,
               Gradients* grads) {
  require_slots(model, unlabeled.size(), "loss_fp");
  const Matrix target = forward_features(model, labeled.x);
  struct Part {
    std::size_t slot;
    std::size_t matches;
    std::vector<double> mask;
  };
  std::vector<Part> parts;
  for (std::size_t s = 0; s < unlabeled.size(); ++s) {
    if (unlabeled[s].x.rows() != labeled.x.rows()) throw DimensionError("loss_fp: batch sizes differ");
    std::size_t matches = 0;
    auto mask = match_mask(labeled.labels, unlabeled[s].pseudo, matches);
    if (matches > 0) parts.push_back({s, matches, std::move(mask)});
  }
  if (parts.empty()) return 0.0;
  const double inv_active = 1.0 / static_cast<double>(parts.size());
  double total = 0.0;
  for (const auto& part : parts) {
    const Matrix backbone = forward_backbone(model, unlabeled[part.slot].x);
    DenseCache cache;
    const Matrix proj = dense_forward(model.v[part.slot], backbone, grads != nullptr ? &cache : nullptr);
    const double inv_m = 1.0 / static_cast<double>(part.matches);
    Matrix dproj(proj.rows(), proj.cols());
    double sq = 0.0;
    for (std::size_t i = 0; i < proj.rows(); ++i) {
      if (part.mask[i] == 0.0) continue;
      for (std::size_t d = 0; d < proj.cols(); ++d) {
        const double diff = proj(i, d) - target(i, d);
        sq += diff * diff;
        dproj(i, d) = 2.0 * diff * inv_m * inv_active;
      }
    }
    total += sq * inv_m;
    if (grads != nullptr) dense_backward(model.v[part.slot], cache, dproj, grads->v[part.slot], false);
  }
  return total * inv_active;
}

double bf_impl(const ModelBundle& model, std::span<const std::size_t> labels, std::span<const UnlabeledBatch> unlabeled,
               double alpha_offset, Gradients* grads) {
  require_slots(model, unlabeled.size(), "loss_bf");
  const std::size_t slots = unlabeled.size();
  const double k1 = static_cast<double>(slots);
  std::vector<Matrix> projections;
  std::vector<DenseCache> proj_cache(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    if (unlabeled[s].x.rows() != labels.size()) throw DimensionError("loss_bf: batch sizes differ");
    const Matrix backbone = forward_backbone(model, unlabeled[s].x);
    projections.push_back(dense_forward(model.v[s], backbone, grads != nullptr ? &proj_cache[s] : nullptr));
  }
  attention::AttentionIO io;
  const std::vector<Matrix> q = attention::attention_forward(model, projections, alpha_offset, &io);
  const Matrix targets = one_hot(labels, model.dims.classes);

  double total = 0.0;
  std::vector<Matrix> dq;
  for (std::size_t s = 0; s < slots; ++s) {
    std::size_t matches = 0;
    const auto mask = match_mask(labels, unlabeled[s].pseudo, matches);
    if (matches == 0) {
      if (grads != nullptr) dq.emplace_back(q[s].rows(), q[s].cols());
      continue;
    }
    DenseCache c_cache;
    const Matrix logits = dense_forward(model.c, q[s], grads != nullptr ? &c_cache : nullptr);
    Matrix dlogits;
    total += cross_entropy(logits, targets, mask, static_cast<double>(matches) * k1,
                           grads != nullptr ? &dlogits : nullptr);
    if (grads != nullptr) dq.push_back(dense_backward(model.c, c_cache, dlogits, grads->c));
  }
  if (grads != nullptr) {
    const auto dproj = attention::attention_backward(model, io, dq, *grads);
    for (std::size_t s = 0; s < slots; ++s) dense_backward(model.v[s], proj_cache[s], dproj[s], grads->v[s], false);
  }
  return total;
}

LossValue make_value(const ModelBundle& model, BlockMask routes) {
  return LossValue{0.0, model.zeros_like(), routes};
}

}  // namespace

Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Matrix y(labels.size(), labels.empty() ? 0 : classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DimensionError("one_hot: label " + std::to_string(labels[i]) + " out of range");
    y(i, labels[i]) = 1.0;
  }
  return y;
}

LossValue loss_cl(const ModelBundle& model, const Matrix& x, const Matrix& y) {
  LossValue lv = make_value(model, kRouteCl);
  lv.value = cl_impl(model, x, y, &lv.grads);
  return lv;
}

double loss_cl_value(const ModelBundle& model, const Matrix& x, const Matrix& y) {
  return cl_impl(model, x, y, nullptr);
}

LossValue loss_im(const ModelBundle& model, std::span<const Matrix> unlabeled, bool route_classifier) {
  const BlockMask route = route_classifier ? kRouteCl : kRouteExtractor;
  LossValue lv = make_value(model, route);
  lv.value = im_impl(model, unlabeled, &lv.grads, route);
  return lv;
}

double loss_im_value(const ModelBundle& model, std::span<const Matrix> unlabeled) {
  return im_impl(model, unlabeled, nullptr, kRouteExtractor);
}

LossValue loss_cu(const ModelBundle& model, std::span<const UnlabeledBatch> unlabeled, bool route_classifier) {
  const BlockMask route = route_classifier ? kRouteCl : kRouteExtractor;
  LossValue lv = make_value(model, route);
  lv.value = cu_impl(model, unlabeled, &lv.grads, route);
  return lv;
}

double loss_cu_value(const ModelBundle& model, std::span<const UnlabeledBatch> unlabeled) {
  return cu_impl(model, unlabeled, nullptr, kRouteExtractor);
}

LossValue loss_fp(const ModelBundle& model, const LabeledBatch& labeled, std::span<const UnlabeledBatch> unlabeled) {
  LossValue lv = make_value(model, kRouteFp);
  lv.value = fp_impl(model, labeled, unlabeled, &lv.grads);
  return lv;
}

double loss_fp_value(const ModelBundle& model, const LabeledBatch& labeled, std::span<const UnlabeledBatch> unlabeled) {
  return fp_impl(model, labeled, unlabeled, nullptr);
}

LossValue loss_bf(const ModelBundle& model, std::span<const std::size_t> labeled_labels,
                  std::span<const UnlabeledBatch> unlabeled, double alpha_offset) {
  LossValue lv = make_value(model, kRouteBf);
  lv.value = bf_impl(model, labeled_labels, unlabeled, alpha_offset, &lv.grads);
  return lv;
}

double loss_bf_value(const ModelBundle& model, std::span<const std::size_t> labeled_labels,
                     std::span<const UnlabeledBatch> unlabeled, double alpha_offset) {
  return bf_impl(model, labeled_labels, unlabeled, alpha_offset, nullptr);
}

StageLosses stage_losses(double lambda, double gamma, const StageLossParts& parts, bool add_cl) {
  StageLosses out;
  out.s1 = parts.cl;
  out.s2 = lambda * (parts.im + parts.cu) + gamma * (parts.fp + parts.bf);
  if (add_cl) out.s2 += parts.cl;
  return out;
}

Stage2Result stage2_objective(const ModelBundle& model, const Stage2Batch& batch, const Stage2Weights& w,
                              double alpha_offset) {
  std::vector<Matrix> xs;
  for (const auto& u : batch.unlabeled) xs.push_back(u.x);

  Stage2Result r;
  r.grads = model.zeros_like();
  const LossValue im = loss_im(model, xs);
  const LossValue cu = loss_cu(model, batch.unlabeled);
  const LossValue fp = loss_fp(model, batch.labeled, batch.unlabeled);
  const LossValue bf = loss_bf(model, batch.labeled.labels, batch.unlabeled, alpha_offset);
  r.parts.im = im.value;
  r.parts.cu = cu.value;
  r.parts.fp = fp.value;
  r.parts.bf = bf.value;
  accumulate(r.grads, im.grads, w.lambda);
  accumulate(r.grads, cu.grads, w.lambda);
  accumulate(r.grads, fp.grads, w.gamma);
  accumulate(r.grads, bf.grads, w.gamma);
  if (w.add_cl) {
    const LossValue cl = loss_cl(model, batch.labeled.x, one_hot(batch.labeled.labels, model.dims.classes));
    r.parts.cl = cl.value;
    accumulate(r.grads, cl.grads, 1.0);
  }
  r.total = stage_losses(w.lambda, w.gamma, r.parts, w.add_cl).s2;
  return r;
}

std::vector<GradTerm> stage2_terms(const Stage2Batch& batch, const Stage2Weights& w) {
  std::vector<GradTerm> terms;
  terms.push_back({"im", w.lambda, kRouteExtractor, [&batch](const ModelBundle& m) {
                     std::vector<Matrix> xs;
                     for (const auto& u : batch.unlabeled) xs.push_back(u.x);
                     return loss_im_value(m, xs);
                   }});
  terms.push_back({"cu", w.lambda, kRouteExtractor,
                   [&batch](const ModelBundle& m) { return loss_cu_value(m, batch.unlabeled); }});
  terms.push_back({"fp", w.gamma, kRouteFp,
                   [&batch](const ModelBundle& m) { return loss_fp_value(m, batch.labeled, batch.unlabeled); }});
  terms.push_back({"bf", w.gamma, kRouteBf, [&batch](const ModelBundle& m) {
                     return loss_bf_value(m, batch.labeled.labels, batch.unlabeled);
                   }});
  if (w.add_cl) {
    terms.push_back({"cl", 1.0, kRouteCl, [&batch](const ModelBundle& m) {
                       return loss_cl_value(m, batch.labeled.x, one_hot(batch.labeled.labels, m.dims.classes));
                     }});
  }
  return terms;
}

}  // namespace dsbf
