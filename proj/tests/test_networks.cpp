#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dsbf/checkpoint.hpp"
#include "dsbf/error.hpp"
#include "dsbf/gradcheck.hpp"
#include "dsbf/networks.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace dsbf;

namespace {

ModelDims small_dims() { return ModelDims{3, 7, 6, 5, 4, 2}; }

double max_rel(const Matrix& a, const Matrix& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.values()[i] - b.values()[i]);
    worst = std::max(worst, d / std::max(1.0, std::abs(b.values()[i])));
  }
  return worst;
}

}  // namespace

TEST(Networks, ForwardMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelBundle m = test::random_model(small_dims(), seed);
    Rng rng(seed + 100);
    const Matrix x = test::random_matrix(9, 3, rng);
    EXPECT_LT(max_rel(forward_backbone(m, x), oracle::backbone(m, x)), 1e-12);
    EXPECT_LT(max_rel(forward_features(m, x), oracle::features(m, x)), 1e-12);
    EXPECT_LT(max_rel(forward_logits(m, x), oracle::logits(m, x)), 1e-12);
    for (std::size_t s = 0; s < 2; ++s) EXPECT_LT(max_rel(forward_projection(m, s, x), oracle::projection(m, s, x)), 1e-12);
  }
}

TEST(Networks, ZeroModelGivesZeroOutputs) {
  Rng rng(1);
  const ModelBundle m = ModelBundle::create(small_dims(), rng).zeros_like();
  const Matrix x = test::random_matrix(5, 3, rng);
  EXPECT_EQ(forward_features(m, x), Matrix(5, 5));
  EXPECT_EQ(forward_logits(m, x), Matrix(5, 4));
}

TEST(Networks, IdentityLayerPassesThrough) {
  Rng rng(2);
  const Matrix x = test::random_matrix(4, 6, rng);
  EXPECT_EQ(dense_forward(DenseLayer::identity(6, Activation::identity), x), x);
  Matrix pos = x;
  for (double& v : pos.values()) v = std::abs(v) + 0.1;
  EXPECT_EQ(dense_forward(DenseLayer::identity(6, Activation::relu), pos), pos);
}

TEST(Networks, GlorotWithinBound) {
  Rng rng(3);
  const DenseLayer l = DenseLayer::glorot(10, 30, Activation::relu, rng);
  const double bound = std::sqrt(6.0 / 40.0);
  for (double v : l.weight.values()) EXPECT_LE(std::abs(v), bound);
  for (double v : l.bias) EXPECT_EQ(v, 0.0);
}

TEST(Networks, DenseBackwardMatchesFiniteDifference) {
  Rng rng(4);
  for (Activation act : {Activation::identity, Activation::relu}) {
    DenseLayer l = DenseLayer::glorot(4, 3, act, rng);
    for (double& b : l.bias) b = rng.uniform(-0.3, 0.3);
    const Matrix x = test::random_matrix(5, 4, rng);
    const Matrix w = test::random_matrix(5, 3, rng);  // loss = sum(w .* y)
    const auto loss = [&](const DenseLayer& layer, const Matrix& in) {
      const Matrix y = dense_forward(layer, in);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    DenseCache cache;
    dense_forward(l, x, &cache);
    DenseLayer grad{Matrix(4, 3), Vector(3, 0.0), act};
    const Matrix dx = dense_backward(l, cache, w, grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < l.weight.size(); ++i) {
      DenseLayer p = l, q = l;
      p.weight.values()[i] += h;
      q.weight.values()[i] -= h;
      EXPECT_NEAR(grad.weight.values()[i], (loss(p, x) - loss(q, x)) / (2 * h), 1e-6);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      Matrix p = x, q = x;
      p.values()[i] += h;
      q.values()[i] -= h;
      EXPECT_NEAR(dx.values()[i], (loss(l, p) - loss(l, q)) / (2 * h), 1e-6);
    }
  }
}

TEST(Networks, ReluBackwardMasksInactiveUnits) {
  DenseLayer l = DenseLayer::identity(2, Activation::relu);
  const Matrix x{{1.0, -1.0}, {-2.0, 3.0}};
  DenseCache cache;
  dense_forward(l, x, &cache);
  DenseLayer grad{Matrix(2, 2), Vector(2, 0.0), Activation::relu};
  const Matrix dx = dense_backward(l, cache, Matrix{{5.0, 7.0}, {11.0, 13.0}}, grad);
  EXPECT_EQ(dx, (Matrix{{5.0, 0.0}, {0.0, 13.0}}));
  EXPECT_EQ(grad.bias, (Vector{5.0, 13.0}));
}

TEST(Networks, ForwardProjectionRejectsBadSlot) {
  const ModelBundle m = test::random_model(small_dims(), 5);
  EXPECT_THROW(forward_projection(m, 2, Matrix(1, 3)), DimensionError);
}

TEST(Networks, ParameterCountAndMask) {
  const ModelDims d = small_dims();
  const ModelBundle m = test::random_model(d, 6);
  const std::size_t expected = (3 * 7 + 7) + (7 * 6 + 6) + (6 * 5 + 5) + (5 * 4 + 4) + 2 * (6 * 5 + 5) +
                               3 * 2 * (5 * 5 + 5) + 1;
  EXPECT_EQ(parameter_count(m), expected);
  const BlockMask mk = BlockGroup::backbone | BlockGroup::classifier;
  EXPECT_TRUE(mk.contains(BlockGroup::backbone));
  EXPECT_FALSE(mk.contains(BlockGroup::attention));
  EXPECT_EQ(mk.without(BlockGroup::backbone), BlockMask(BlockGroup::classifier));
  EXPECT_TRUE(BlockMask().empty());

  Gradients g = m;
  restrict_to(g, BlockGroup::projection);
  for_each_block(static_cast<const Gradients&>(g), [](const ConstParamBlock& blk) {
    if (blk.group == BlockGroup::projection) return;
    for (double v : blk.values) EXPECT_EQ(v, 0.0) << blk.name;
  });
}

TEST(Networks, InvalidDimsRejected) {
  ModelDims d = small_dims();
  d.classes = 1;
  Rng rng(0);
  EXPECT_THROW(ModelBundle::create(d, rng), ConfigError);
}

TEST(Sgd, PlainStepSubtractsGradient) {
  ModelBundle m = test::random_model(small_dims(), 7);
  const ModelBundle before = m;
  const Gradients g = test::random_model(small_dims(), 8);
  SgdState st = SgdState::for_model(m);
  sgd_step(m, g, SgdConfig{1.0, 0.0, 0.0}, st);
  std::vector<double> p, p0, gv;
  for_each_block(static_cast<const ModelBundle&>(m), [&](const ConstParamBlock& b) { p.insert(p.end(), b.values.begin(), b.values.end()); });
  for_each_block(before, [&](const ConstParamBlock& b) { p0.insert(p0.end(), b.values.begin(), b.values.end()); });
  for_each_block(g, [&](const ConstParamBlock& b) { gv.insert(gv.end(), b.values.begin(), b.values.end()); });
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], p0[i] - gv[i]);
}

TEST(Sgd, MomentumSecondDisplacement) {
  ModelBundle m = test::random_model(small_dims(), 9);
  m.alpha = 0.0;
  Gradients g = m.zeros_like();
  g.alpha = 2.0;
  SgdState st = SgdState::for_model(m);
  const SgdConfig cfg{0.1, 0.9, 0.0};
  sgd_step(m, g, cfg, st);
  const double a1 = m.alpha;
  sgd_step(m, g, cfg, st);
  EXPECT_NEAR(a1, -0.2, 1e-15);
  EXPECT_NEAR(m.alpha - a1, -0.1 * 2.0 * 1.9, 1e-15);
}

TEST(Sgd, TenStepsMatchScalarOracle) {
  ModelBundle m = test::random_model(small_dims(), 10);
  const ModelBundle start = m;
  const SgdConfig cfg{0.05, 0.9, 0.01};
  SgdState st = SgdState::for_model(m);
  Rng rng(11);
  std::vector<Gradients> gs;
  for (int t = 0; t < 10; ++t) {
    Gradients g = m.zeros_like();
    test::randomize(g, rng);
    gs.push_back(g);
    sgd_step(m, g, cfg, st);
  }
  // replay one coordinate of c.weight and alpha by hand
  double p = start.c.weight(1, 2), vel = 0, a = start.alpha, va = 0;
  for (const auto& g : gs) {
    vel = 0.9 * vel + g.c.weight(1, 2) + 0.01 * p;
    p -= 0.05 * vel;
    va = 0.9 * va + g.alpha;  // no decay on alpha
    a -= 0.05 * va;
  }
  EXPECT_NEAR(m.c.weight(1, 2), p, 1e-14);
  EXPECT_NEAR(m.alpha, a, 1e-14);
}

TEST(Sgd, MaskFreezesOtherGroups) {
  ModelBundle m = test::random_model(small_dims(), 12);
  const ModelBundle before = m;
  Gradients g = test::random_model(small_dims(), 13);
  SgdState st = SgdState::for_model(m);
  sgd_step(m, g, SgdConfig{}, st, BlockMask(BlockGroup::classifier));
  EXPECT_EQ(m.g, before.g);
  EXPECT_EQ(m.v, before.v);
  EXPECT_EQ(m.alpha, before.alpha);
  EXPECT_NE(m.c, before.c);
}

TEST(Sgd, NonFiniteGradientNamesBlock) {
  ModelBundle m = test::random_model(small_dims(), 14);
  Gradients g = m.zeros_like();
  g.a_k[1].bias[0] = std::nan("");
  SgdState st = SgdState::for_model(m);
  try {
    sgd_step(m, g, SgdConfig{}, st);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("a_k.1.bias"), std::string::npos) << e.what();
  }
}

TEST(Sgd, ClassifierOnlyLossNonIncreasing) {
  // frozen features: cross-entropy is convex in c, small steps never go up
  const ModelBundle init = test::random_model(small_dims(), 15);
  ModelBundle m = init;
  Rng rng(16);
  const Matrix x = test::random_matrix(20, 3, rng);
  const auto y = test::random_labels(20, 4, rng);
  const Matrix feats = forward_features(m, x);
  SgdState st = SgdState::for_model(m);
  double prev = oracle::cl(m, x, y);
  for (int t = 0; t < 50; ++t) {
    const Matrix lg = dense_forward(m.c, feats);
    Matrix d(20, 4);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto s = oracle::softmax(oracle::row_of(lg, i));
      for (std::size_t r = 0; r < 4; ++r) d(i, r) = (s[r] - (r == y[i] ? 1.0 : 0.0)) / 20.0;
    }
    Gradients g = m.zeros_like();
    DenseCache cache{feats, lg};
    dense_backward(m.c, cache, d, g.c, false);
    sgd_step(m, g, SgdConfig{1e-3, 0.0, 0.0}, st, BlockMask(BlockGroup::classifier));
    const double cur = oracle::cl(m, x, y);
    EXPECT_LE(cur, prev + 1e-15);
    prev = cur;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelBundle m = test::random_model(small_dims(), 17);
  m.alpha = -0.123456789012345678;
  const auto bytes = serialize_model(m);
  EXPECT_EQ(deserialize_model(bytes), m);
  const auto path = std::filesystem::temp_directory_path() / "dsbf_ckpt_roundtrip.ckpt";
  save_checkpoint(path, m);
  EXPECT_EQ(load_checkpoint(path), m);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto bytes = serialize_model(test::random_model(small_dims(), 18));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_model(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_model(bad_magic), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_model(trailing), IoError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.ckpt"), IoError);
}

TEST(GradCheck, QuadraticIsExact) {
  ModelBundle m = test::random_model(small_dims(), 19);
  // L = 0.5 * sum of squares over c and alpha; gradient is the parameters
  const auto loss = [](const ModelBundle& mb) {
    double s = 0.5 * mb.alpha * mb.alpha;
    for (double v : mb.c.weight.values()) s += 0.5 * v * v;
    for (double v : mb.c.bias) s += 0.5 * v * v;
    return s;
  };
  Gradients g = m.zeros_like();
  g.c = m.c;
  g.alpha = m.alpha;
  const auto rep = finite_diff_check(loss, g, BlockMask(BlockGroup::classifier) | BlockGroup::attention, m);
  EXPECT_LE(rep.max_rel_error, 1e-9);
  EXPECT_GT(rep.coords_checked, 0u);
  GradCheckOptions bad;
  bad.h = 1e-2;
  EXPECT_THROW(finite_diff_check(loss, g, BlockMask(BlockGroup::classifier), m, bad), ConfigError);
}

TEST(GradCheck, DetectsWrongGradient) {
  ModelBundle m = test::random_model(small_dims(), 20);
  const auto loss = [](const ModelBundle& mb) {
    double s = 0;
    for (double v : mb.c.weight.values()) s += 0.5 * v * v;
    return s;
  };
  Gradients g = m.zeros_like();
  g.c.weight = m.c.weight;
  g.c.weight(0, 0) += 0.1;
  const auto rep = finite_diff_check(loss, g, BlockMask(BlockGroup::classifier), m);
  EXPECT_GT(rep.max_rel_error, 1e-3);
  EXPECT_EQ(rep.worst_block, "c.weight");
}
