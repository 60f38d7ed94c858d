#include "dsbf/networks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsbf/error.hpp"
#include "dsbf/numerics/kernels.hpp"

namespace dsbf {

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out, Activation act) {
  return DenseLayer{Matrix(in, out), Vector(out, 0.0), act};
}

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer = zeros(in, out, act);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
  return layer;
}

DenseLayer DenseLayer::identity(std::size_t n, Activation act) {
  return DenseLayer{Matrix::identity(n), Vector(n, 0.0), act};
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache) {
  if (x.cols() != layer.in_dim()) {
    throw DimensionError("dense_forward: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                         std::to_string(layer.in_dim()));
  }
  Matrix pre = matmul(x, layer.weight);
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    kernels::axpy(1.0, layer.bias.data(), pre.row(i).data(), pre.cols());
  }
  Matrix out = pre;
  if (layer.activation == Activation::relu) {
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->pre = std::move(pre);
  }
  return out;
}

Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& dy, DenseLayer& grad,
                      bool need_input_grad) {
  if (!dy.same_shape(cache.pre)) throw DimensionError("dense_backward: gradient shape mismatch");
  Matrix dz = dy;
  if (layer.activation == Activation::relu) {
    auto pre = cache.pre.values();
    auto d = dz.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(pre[i] > 0.0)) d[i] = 0.0;
    }
  }
  add_scaled_inplace(grad.weight, matmul_tn(cache.input, dz), 1.0);
  const Vector db = column_sums(dz);
  kernels::axpy(1.0, db.data(), grad.bias.data(), db.size());
  if (!need_input_grad) return {};
  return matmul_nt(dz, layer.weight);
}

Matrix stack_forward(const LayerStack& stack, const Matrix& x, StackCache* cache) {
  if (cache != nullptr) cache->layers.assign(stack.size(), DenseCache{});
  Matrix h = x;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    h = dense_forward(stack[i], h, cache != nullptr ? &cache->layers[i] : nullptr);
  }
  return h;
}

Matrix stack_backward(const LayerStack& stack, const StackCache& cache, const Matrix& dy, LayerStack& grad,
                      bool need_input_grad) {
  Matrix d = dy;
  for (std::size_t i = stack.size(); i-- > 0;) {
    d = dense_backward(stack[i], cache.layers[i], d, grad[i], need_input_grad || i > 0);
  }
  return d;
}

void ModelDims::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || feat_dim == 0 || bottleneck_dim == 0) {
    throw ConfigError("model dims: every layer width must be positive");
  }
  if (classes < 2) throw ConfigError("model dims: need at least two classes");
}

ModelBundle ModelBundle::create(const ModelDims& dims, Rng& rng) {
  dims.validate();
  ModelBundle m;
  m.dims = dims;
  m.g.push_back(DenseLayer::glorot(dims.input_dim, dims.hidden_dim, Activation::relu, rng));
  m.g.push_back(DenseLayer::glorot(dims.hidden_dim, dims.feat_dim, Activation::relu, rng));
  m.b.push_back(DenseLayer::glorot(dims.feat_dim, dims.bottleneck_dim, Activation::relu, rng));
  m.c = DenseLayer::glorot(dims.bottleneck_dim, dims.classes, Activation::identity, rng);
  const std::size_t d = dims.bottleneck_dim;
  for (std::size_t s = 0; s < dims.unlabeled_domains; ++s) {
    m.v.push_back(DenseLayer::glorot(dims.feat_dim, d, Activation::identity, rng));
    m.a_q.push_back(DenseLayer::glorot(d, d, Activation::identity, rng));
    m.a_k.push_back(DenseLayer::glorot(d, d, Activation::identity, rng));
    m.a_v.push_back(DenseLayer::glorot(d, d, Activation::identity, rng));
  }
  m.alpha = 0.0;
  return m;
}

ModelBundle ModelBundle::zeros_like() const {
  ModelBundle z = *this;
  for_each_block(z, [](const ParamBlock& blk) { std::fill(blk.values.begin(), blk.values.end(), 0.0); });
  return z;
}

void ModelBundle::validate() const {
  dims.validate();
  auto check = [](const DenseLayer& l, std::size_t in, std::size_t out, const char* what) {
    if (l.in_dim() != in || l.out_dim() != out || l.bias.size() != out) {
      throw DimensionError(std::string("model: block ") + what + " has inconsistent dimensions");
    }
  };
  if (g.empty() || b.empty()) throw DimensionError("model: g and b need at least one layer");
  check(g.front(), dims.input_dim, g.front().out_dim(), "g");
  if (g.back().out_dim() != dims.feat_dim) throw DimensionError("model: g output width != feat_dim");
  for (std::size_t i = 1; i < g.size(); ++i) check(g[i], g[i - 1].out_dim(), g[i].out_dim(), "g");
  check(b.front(), dims.feat_dim, b.front().out_dim(), "b");
  for (std::size_t i = 1; i < b.size(); ++i) check(b[i], b[i - 1].out_dim(), b[i].out_dim(), "b");
  if (b.back().out_dim() != dims.bottleneck_dim) throw DimensionError("model: b output width != bottleneck_dim");
  check(c, dims.bottleneck_dim, dims.classes, "c");
  const std::size_t k1 = dims.unlabeled_domains;
  if (v.size() != k1 || a_q.size() != k1 || a_k.size() != k1 || a_v.size() != k1) {
    throw DimensionError("model: per-domain block count differs from unlabeled_domains");
  }
  const std::size_t d = dims.bottleneck_dim;
  for (std::size_t s = 0; s < k1; ++s) {
    check(v[s], dims.feat_dim, d, "v");
    check(a_q[s], d, d, "a_q");
    check(a_k[s], d, d, "a_k");
    check(a_v[s], d, d, "a_v");
  }
}

namespace {

template <typename Model, typename Fn>
void visit_layers(Model& m, Fn&& fn) {
  for (std::size_t i = 0; i < m.g.size(); ++i) fn("g." + std::to_string(i), BlockGroup::backbone, m.g[i]);
  for (std::size_t i = 0; i < m.b.size(); ++i) fn("b." + std::to_string(i), BlockGroup::bottleneck, m.b[i]);
  fn(std::string("c"), BlockGroup::classifier, m.c);
  for (std::size_t i = 0; i < m.v.size(); ++i) fn("v." + std::to_string(i), BlockGroup::projection, m.v[i]);
  for (std::size_t i = 0; i < m.a_q.size(); ++i) fn("a_q." + std::to_string(i), BlockGroup::attention, m.a_q[i]);
  for (std::size_t i = 0; i < m.a_k.size(); ++i) fn("a_k." + std::to_string(i), BlockGroup::attention, m.a_k[i]);
  for (std::size_t i = 0; i < m.a_v.size(); ++i) fn("a_v." + std::to_string(i), BlockGroup::attention, m.a_v[i]);
}

}  // namespace

void for_each_block(ModelBundle& model, const std::function<void(const ParamBlock&)>& fn) {
  visit_layers(model, [&](const std::string& name, BlockGroup group, DenseLayer& layer) {
    fn(ParamBlock{name + ".weight", group, layer.weight.values()});
    fn(ParamBlock{name + ".bias", group, std::span<double>(layer.bias)});
  });
  fn(ParamBlock{"alpha", BlockGroup::attention, std::span<double>(&model.alpha, 1)});
}

void for_each_block(const ModelBundle& model, const std::function<void(const ConstParamBlock&)>& fn) {
  visit_layers(model, [&](const std::string& name, BlockGroup group, const DenseLayer& layer) {
    fn(ConstParamBlock{name + ".weight", group, layer.weight.values()});
    fn(ConstParamBlock{name + ".bias", group, std::span<const double>(layer.bias)});
  });
  fn(ConstParamBlock{"alpha", BlockGroup::attention, std::span<const double>(&model.alpha, 1)});
}

std::size_t parameter_count(const ModelBundle& model) {
  std::size_t n = 0;
  for_each_block(model, [&](const ConstParamBlock& blk) { n += blk.values.size(); });
  return n;
}

namespace {

// Pairs up the blocks of two same-shaped bundles.
template <typename Fn>
void zip_blocks(ModelBundle& dst, const ModelBundle& src, Fn&& fn) {
  std::vector<ConstParamBlock> src_blocks;
  for_each_block(src, [&](const ConstParamBlock& blk) { src_blocks.push_back(blk); });
  std::size_t i = 0;
  for_each_block(dst, [&](const ParamBlock& blk) {
    if (i >= src_blocks.size() || src_blocks[i].values.size() != blk.values.size()) {
      throw DimensionError("gradient bundle does not match model shape at " + blk.name);
    }
    fn(blk, src_blocks[i]);
    ++i;
  });
  if (i != src_blocks.size()) throw DimensionError("gradient bundle does not match model shape");
}

}  // namespace

void accumulate(Gradients& dst, const Gradients& src, double scale, BlockMask mask) {
  zip_blocks(dst, src, [&](const ParamBlock& d, const ConstParamBlock& s) {
    if (mask.contains(d.group)) kernels::axpy(scale, s.values.data(), d.values.data(), d.values.size());
  });
}

void restrict_to(Gradients& grads, BlockMask keep) {
  for_each_block(grads, [&](const ParamBlock& blk) {
    if (!keep.contains(blk.group)) std::fill(blk.values.begin(), blk.values.end(), 0.0);
  });
}

Matrix forward_backbone(const ModelBundle& model, const Matrix& x, StackCache* cache) {
  if (x.cols() != model.dims.input_dim) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(model.dims.input_dim));
  }
  return stack_forward(model.g, x, cache);
}

Matrix forward_features(const ModelBundle& model, const Matrix& x, ForwardCache* cache) {
  Matrix h = forward_backbone(model, x, cache != nullptr ? &cache->g : nullptr);
  return stack_forward(model.b, h, cache != nullptr ? &cache->b : nullptr);
}

Matrix forward_logits(const ModelBundle& model, const Matrix& x, ForwardCache* cache) {
  Matrix f = forward_features(model, x, cache);
  return dense_forward(model.c, f, cache != nullptr ? &cache->c : nullptr);
}

Matrix forward_projection(const ModelBundle& model, std::size_t slot, const Matrix& x) {
  if (slot >= model.v.size()) {
    throw DimensionError("forward_projection: unlabeled slot " + std::to_string(slot) + " out of range (have " +
                         std::to_string(model.v.size()) + ")");
  }
  return dense_forward(model.v[slot], forward_backbone(model, x));
}

void backward_logits(const ModelBundle& model, const ForwardCache& cache, const Matrix& dlogits, Gradients& grads,
                     BlockMask route) {
  const bool to_g = route.contains(BlockGroup::backbone);
  const bool to_b = route.contains(BlockGroup::bottleneck) || to_g;
  Matrix dfeat;
  if (route.contains(BlockGroup::classifier)) {
    dfeat = dense_backward(model.c, cache.c, dlogits, grads.c, to_b);
  } else if (to_b) {
    DenseLayer scratch = DenseLayer::zeros(model.c.in_dim(), model.c.out_dim(), model.c.activation);
    dfeat = dense_backward(model.c, cache.c, dlogits, scratch, true);
  }
  if (!to_b) return;
  if (route.contains(BlockGroup::bottleneck)) {
    Matrix dh = stack_backward(model.b, cache.b, dfeat, grads.b, to_g);
    if (to_g) stack_backward(model.g, cache.g, dh, grads.g, false);
  } else {
    LayerStack scratch;
    for (const auto& l : model.b) scratch.push_back(DenseLayer::zeros(l.in_dim(), l.out_dim(), l.activation));
    Matrix dh = stack_backward(model.b, cache.b, dfeat, scratch, true);
    stack_backward(model.g, cache.g, dh, grads.g, false);
  }
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be non-negative");
}

void sgd_step(ModelBundle& model, const Gradients& grads, const SgdConfig& cfg, SgdState& state, BlockMask mask) {
  std::vector<ConstParamBlock> g_blocks;
  for_each_block(grads, [&](const ConstParamBlock& blk) {
    if (!mask.contains(blk.group)) return;
    for (double v : blk.values) {
      if (!std::isfinite(v)) throw NumericalError("sgd_step: non-finite gradient in block " + blk.name);
    }
  });
  for_each_block(grads, [&](const ConstParamBlock& blk) { g_blocks.push_back(blk); });
  std::vector<ParamBlock> v_blocks;
  for_each_block(state.velocity, [&](const ParamBlock& blk) { v_blocks.push_back(blk); });
  if (v_blocks.size() != g_blocks.size()) throw DimensionError("sgd_step: optimizer state does not match model");

  std::size_t i = 0;
  for_each_block(model, [&](const ParamBlock& p) {
    const auto& gb = g_blocks[i];
    const auto& vb = v_blocks[i];
    ++i;
    if (gb.values.size() != p.values.size() || vb.values.size() != p.values.size()) {
      throw DimensionError("sgd_step: gradient shape mismatch at " + p.name);
    }
    if (!mask.contains(p.group)) return;
    const double decay = p.name == "alpha" ? 0.0 : cfg.weight_decay;
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      vb.values[k] = cfg.momentum * vb.values[k] + gb.values[k] + decay * p.values[k];
      p.values[k] -= cfg.learning_rate * vb.values[k];
    }
  });
}

}  // namespace dsbf
