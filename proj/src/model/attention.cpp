#include "dsbf/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsbf/error.hpp"

namespace dsbf::attention {
namespace {

// mean_j softmax_j(raw)[a,b] evaluated as (sum_j e_j) / (S * count) with S
// accumulated in the same order, so the weights sum to one without rounding
// and z carries no noise from the scores.
Matrix aggregate_scores(const Matrix& key_m, std::span<const Matrix> queries) {
  std::vector<Matrix> raw;
  raw.reserve(queries.size());
  for (const auto& qj : queries) raw.push_back(matmul_tn(key_m, qj));
  Matrix z(raw[0].rows(), raw[0].cols());
  const double inv_count = 1.0 / static_cast<double>(raw.size());
  for (std::size_t idx = 0; idx < z.size(); ++idx) {
    double mx = raw[0].values()[idx];
    for (const auto& r : raw) mx = std::max(mx, r.values()[idx]);
    double total = 0.0;
    for (const auto& r : raw) total += std::exp(r.values()[idx] - mx);
    double num = 0.0;
    for (const auto& r : raw) num += std::exp(r.values()[idx] - mx);
    z.values()[idx] = num / total * inv_count;
  }
  return z;
}

}  // namespace

Embeddings embed(const ModelBundle& model, std::span<const Matrix> projections, AttentionIO* io) {
  const std::size_t slots = projections.size();
  if (slots != model.a_q.size()) {
    throw DimensionError("attention: got " + std::to_string(slots) + " projections for " +
                         std::to_string(model.a_q.size()) + " unlabeled domains");
  }
  Embeddings e;
  if (io != nullptr) {
    io->query_cache.assign(slots, {});
    io->key_cache.assign(slots, {});
    io->value_cache.assign(slots, {});
  }
  for (std::size_t s = 0; s < slots; ++s) {
    if (s > 0 && !projections[s].same_shape(projections[0])) {
      throw DimensionError("attention: projections must share the B x D shape");
    }
    e.query.push_back(dense_forward(model.a_q[s], projections[s], io ? &io->query_cache[s] : nullptr));
    e.key.push_back(dense_forward(model.a_k[s], projections[s], io ? &io->key_cache[s] : nullptr));
    e.value.push_back(dense_forward(model.a_v[s], projections[s], io ? &io->value_cache[s] : nullptr));
  }
  return e;
}

std::vector<Matrix> similarity(const Matrix& key_m, std::span<const Matrix> queries) {
  std::vector<Matrix> p;
  p.reserve(queries.size());
  for (const auto& qj : queries) p.push_back(matmul_tn(key_m, qj));
  if (p.empty()) return p;
  const std::size_t n = p[0].size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    double mx = p[0].values()[idx];
    for (const auto& pj : p) mx = std::max(mx, pj.values()[idx]);
    double total = 0.0;
    for (auto& pj : p) {
      double& v = pj.values()[idx];
      v = std::exp(v - mx);
      total += v;
    }
    const double inv = 1.0 / total;
    for (auto& pj : p) pj.values()[idx] *= inv;
  }
  return p;
}

Matrix aggregate(std::span<const Matrix> p_m) {
  if (p_m.empty()) throw DimensionError("aggregate: no similarity maps");
  Matrix z = p_m[0];
  for (std::size_t j = 1; j < p_m.size(); ++j) add_scaled_inplace(z, p_m[j], 1.0);
  return scaled(z, 1.0 / static_cast<double>(p_m.size()));
}

Matrix reweight(const Matrix& value_m, const Matrix& z_m, double alpha) {
  if (alpha == 0.0) return value_m;
  Matrix q = matmul(value_m, z_m);
  for (std::size_t i = 0; i < q.size(); ++i) q.values()[i] = alpha * q.values()[i] + value_m.values()[i];
  return q;
}

std::vector<Matrix> attention_forward(const ModelBundle& model, std::span<const Matrix> projections,
                                      double alpha_offset, AttentionIO* io) {
  AttentionIO local;
  AttentionIO& st = io != nullptr ? *io : local;
  st.emb = embed(model, projections, &st);
  st.alpha_used = model.alpha + alpha_offset;
  const std::size_t slots = projections.size();
  st.p.clear();
  st.z.clear();
  st.mixed.clear();
  st.q.clear();
  for (std::size_t m = 0; m < slots; ++m) {
    st.p.push_back(similarity(st.emb.key[m], st.emb.query));
    st.z.push_back(aggregate_scores(st.emb.key[m], st.emb.query));
    st.mixed.push_back(matmul(st.emb.value[m], st.z[m]));
    Matrix q = st.emb.value[m];
    if (st.alpha_used != 0.0) add_scaled_inplace(q, st.mixed[m], st.alpha_used);
    st.q.push_back(std::move(q));
  }
  return st.q;
}

std::vector<Matrix> attention_backward(const ModelBundle& model, const AttentionIO& io, std::span<const Matrix> dq,
                                       Gradients& grads) {
  const std::size_t slots = io.q.size();
  if (dq.size() != slots) throw DimensionError("attention_backward: gradient count mismatch");
  const double alpha = io.alpha_used;
  const double inv_slots = 1.0 / static_cast<double>(slots);

  std::vector<Matrix> d_query, d_key, d_value;
  for (std::size_t s = 0; s < slots; ++s) {
    d_query.emplace_back(io.emb.query[s].rows(), io.emb.query[s].cols());
    d_key.emplace_back(io.emb.key[s].rows(), io.emb.key[s].cols());
    d_value.push_back(dq[s]);
  }

  double d_alpha = 0.0;
  for (std::size_t m = 0; m < slots; ++m) {
    d_alpha += dot(dq[m].values(), io.mixed[m].values());
    if (alpha == 0.0) continue;
    add_scaled_inplace(d_value[m], matmul_nt(dq[m], io.z[m]), alpha);
    Matrix dz = scaled(matmul_tn(io.emb.value[m], dq[m]), alpha * inv_slots);
    // softmax over j at each position: draw_j = p_j * (dp - sum_k p_k * dp); dp is shared by all j
    const auto& p = io.p[m];
    Matrix shared(dz.rows(), dz.cols());
    for (const auto& pj : p) {
      for (std::size_t i = 0; i < shared.size(); ++i) shared.values()[i] += pj.values()[i] * dz.values()[i];
    }
    for (std::size_t j = 0; j < slots; ++j) {
      Matrix draw(dz.rows(), dz.cols());
      for (std::size_t i = 0; i < draw.size(); ++i) {
        draw.values()[i] = p[j].values()[i] * (dz.values()[i] - shared.values()[i]);
      }
      add_scaled_inplace(d_key[m], matmul_nt(io.emb.query[j], draw), 1.0);
      add_scaled_inplace(d_query[j], matmul(io.emb.key[m], draw), 1.0);
    }
  }
  grads.alpha += d_alpha;

  std::vector<Matrix> d_proj;
  for (std::size_t s = 0; s < slots; ++s) {
    Matrix d = dense_backward(model.a_q[s], io.query_cache[s], d_query[s], grads.a_q[s]);
    add_scaled_inplace(d, dense_backward(model.a_k[s], io.key_cache[s], d_key[s], grads.a_k[s]), 1.0);
    add_scaled_inplace(d, dense_backward(model.a_v[s], io.value_cache[s], d_value[s], grads.a_v[s]), 1.0);
    d_proj.push_back(std::move(d));
  }
  return d_proj;
}

}  // namespace dsbf::attention
