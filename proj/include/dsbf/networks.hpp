#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsbf/numerics/matrix.hpp"
#include "dsbf/numerics/rng.hpp"

namespace dsbf {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

// y = act(x * weight + bias), weight is in_dim x out_dim.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  static DenseLayer zeros(std::size_t in, std::size_t out, Activation act);
  // Uniform in +-sqrt(6 / (in + out)), zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Activation act, Rng& rng);
  static DenseLayer identity(std::size_t n, Activation act);

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseCache {
  Matrix input;
  Matrix pre;  // pre-activation
};

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache = nullptr);

// Accumulates parameter gradients into `grad` and returns d(loss)/d(input),
// or an empty matrix when `need_input_grad` is false.
Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& dy, DenseLayer& grad,
                      bool need_input_grad = true);

using LayerStack = std::vector<DenseLayer>;

struct StackCache {
  std::vector<DenseCache> layers;
};

Matrix stack_forward(const LayerStack& stack, const Matrix& x, StackCache* cache = nullptr);
Matrix stack_backward(const LayerStack& stack, const StackCache& cache, const Matrix& dy, LayerStack& grad,
                      bool need_input_grad = true);

struct ModelDims {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 64;
  std::size_t feat_dim = 64;        // F, output of the backbone g
  std::size_t bottleneck_dim = 32;  // D, output of the bottleneck b
  std::size_t classes = 2;          // C
  std::size_t unlabeled_domains = 1;  // K - 1

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Every trainable parameter. Unlabeled domains are addressed by a zero-based
// slot: slot s holds the blocks of source domain s + 2.
struct ModelBundle {
  ModelDims dims;
  LayerStack g;  // input -> hidden -> F, relu
  LayerStack b;  // F -> D, relu
  DenseLayer c;  // D -> C logits
  std::vector<DenseLayer> v;    // F -> D per slot
  std::vector<DenseLayer> a_q;  // D -> D per slot
  std::vector<DenseLayer> a_k;
  std::vector<DenseLayer> a_v;
  double alpha = 0.0;

  static ModelBundle create(const ModelDims& dims, Rng& rng);
  // Same shapes, every value zero. Used as the gradient and momentum carrier.
  ModelBundle zeros_like() const;
  void validate() const;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

using Gradients = ModelBundle;

// Parameter groups that the stage losses route gradients to.
enum class BlockGroup : std::uint32_t {
  backbone = 1u << 0,
  bottleneck = 1u << 1,
  classifier = 1u << 2,
  projection = 1u << 3,
  attention = 1u << 4,
};

class BlockMask {
 public:
  constexpr BlockMask() = default;
  constexpr BlockMask(BlockGroup g) : bits_(static_cast<std::uint32_t>(g)) {}  // NOLINT
  constexpr bool contains(BlockGroup g) const { return (bits_ & static_cast<std::uint32_t>(g)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr BlockMask operator|(BlockMask o) const { return from_bits(bits_ | o.bits_); }
  constexpr BlockMask operator&(BlockMask o) const { return from_bits(bits_ & o.bits_); }
  constexpr BlockMask without(BlockMask o) const { return from_bits(bits_ & ~o.bits_); }
  constexpr std::uint32_t bits() const { return bits_; }
  static constexpr BlockMask all() { return from_bits(0x1f); }
  friend constexpr bool operator==(BlockMask, BlockMask) = default;

 private:
  static constexpr BlockMask from_bits(std::uint32_t b) {
    BlockMask m;
    m.bits_ = b;
    return m;
  }
  std::uint32_t bits_ = 0;
};

constexpr BlockMask operator|(BlockGroup a, BlockGroup b) { return BlockMask(a) | BlockMask(b); }

struct ParamBlock {
  std::string name;
  BlockGroup group;
  std::span<double> values;
};

struct ConstParamBlock {
  std::string name;
  BlockGroup group;
  std::span<const double> values;
};

// Visits blocks in a fixed order: g, b, c, v, a_q, a_k, a_v, alpha.
void for_each_block(ModelBundle& model, const std::function<void(const ParamBlock&)>& fn);
void for_each_block(const ModelBundle& model, const std::function<void(const ConstParamBlock&)>& fn);

std::size_t parameter_count(const ModelBundle& model);

// dst += scale * src over the groups in `mask`.
void accumulate(Gradients& dst, const Gradients& src, double scale, BlockMask mask = BlockMask::all());
// Zero every group not in `keep`.
void restrict_to(Gradients& grads, BlockMask keep);

// --- forward passes -------------------------------------------------------

struct ForwardCache {
  StackCache g;
  StackCache b;
  DenseCache c;
};

// g(x): batch x F
Matrix forward_backbone(const ModelBundle& model, const Matrix& x, StackCache* cache = nullptr);
// b(g(x)): batch x D
Matrix forward_features(const ModelBundle& model, const Matrix& x, ForwardCache* cache = nullptr);
// c(b(g(x))): batch x C, pre-softmax
Matrix forward_logits(const ModelBundle& model, const Matrix& x, ForwardCache* cache = nullptr);
// v_slot(g(x)): batch x D
Matrix forward_projection(const ModelBundle& model, std::size_t slot, const Matrix& x);

// Backpropagates d(loss)/d(logits) through c, b, g. Parameter gradients are
// written only for groups in `route`; c is still traversed when excluded.
void backward_logits(const ModelBundle& model, const ForwardCache& cache, const Matrix& dlogits, Gradients& grads,
                     BlockMask route);

// --- optimizer ------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;

  void validate() const;
};

struct SgdState {
  ModelBundle velocity;
  static SgdState for_model(const ModelBundle& model) { return SgdState{model.zeros_like()}; }
};

// velocity <- momentum * velocity + grad + weight_decay * p;  p <- p - lr * velocity.
// alpha is exempt from weight decay. Only groups in `mask` move.
// Throws NumericalError naming the block if any gradient entry is non-finite.
void sgd_step(ModelBundle& model, const Gradients& grads, const SgdConfig& cfg, SgdState& state,
              BlockMask mask = BlockMask::all());

}  // namespace dsbf
