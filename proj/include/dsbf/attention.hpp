#pragma once

#include <span>
#include <vector>

#include "dsbf/networks.hpp"

// Inter-domain attention over the projected features of the unlabeled
// domains. Each slot m embeds its B x D projection into query, key and value
// parts; p(m, j) = softmax over j of key_m^T * query_j taken position by
// position in the D x D map; z_m is the mean of p(m, .) over j; and
// q_m = alpha * value_m * z_m + value_m.
namespace dsbf::attention {

struct Embeddings {
  std::vector<Matrix> query;
  std::vector<Matrix> key;
  std::vector<Matrix> value;
};

// Everything the forward pass produces, kept for inspection and backprop.
struct AttentionIO {
  std::vector<DenseCache> query_cache, key_cache, value_cache;
  Embeddings emb;
  std::vector<std::vector<Matrix>> p;  // p[m][j], each D x D
  std::vector<Matrix> z;               // D x D per slot
  std::vector<Matrix> mixed;           // value_m * z_m
  std::vector<Matrix> q;               // B x D per slot
  double alpha_used = 0.0;
};

Embeddings embed(const ModelBundle& model, std::span<const Matrix> projections, AttentionIO* io = nullptr);

// p(m, j) for every j given key_m and all queries.
std::vector<Matrix> similarity(const Matrix& key_m, std::span<const Matrix> queries);

Matrix aggregate(std::span<const Matrix> p_m);

Matrix reweight(const Matrix& value_m, const Matrix& z_m, double alpha);

// Full pass. The gate used is model.alpha + alpha_offset. Evaluation passes
// zero; stage-2 steps pass a small random jitter.
std::vector<Matrix> attention_forward(const ModelBundle& model, std::span<const Matrix> projections,
                                      double alpha_offset = 0.0, AttentionIO* io = nullptr);

// Given d(loss)/d(q_m) for every slot, accumulates gradients for a_q, a_k,
// a_v and alpha into `grads` and returns d(loss)/d(projection_m).
std::vector<Matrix> attention_backward(const ModelBundle& model, const AttentionIO& io, std::span<const Matrix> dq,
                                       Gradients& grads);

}  // namespace dsbf::attention
