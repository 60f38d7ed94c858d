#include <gtest/gtest.h>

#include <cmath>

#include "dsbf/datagen.hpp"
#include "dsbf/error.hpp"

using namespace dsbf;

namespace {

double mean_of(const Matrix& m, std::size_t col) {
  double s = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, col);
  return s / static_cast<double>(m.rows());
}

double cross_moment(const Matrix& a, std::size_t ca, const Matrix& b, std::size_t cb) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, ca) * b(i, cb);
  return s / static_cast<double>(a.rows());
}

}  // namespace

TEST(Structural, DegenerateWorldHasNoNoise) {
  Rng rng(1);
  const StructuralSpec spec = StructuralSpec::degenerate_spec();
  const auto s = gen_structural(spec, 500, rng);
  for (std::size_t j = 0; j < spec.k; ++j) {
    const auto& d = s.domains[j];
    for (std::size_t i = 0; i < 500; ++i) {
      const double y = spec.beta[0] * d.h(i, 0) + spec.beta[1] * d.h(i, 1);
      EXPECT_NEAR(d.y[i], y, 1e-12);
      // H = U phi exactly, with U shared across domains
      EXPECT_NEAR(d.h(i, 0), s.u(i, 0) * spec.phi[j](0, 0) + s.u(i, 1) * spec.phi[j](1, 0), 1e-12);
    }
  }
}

TEST(Structural, ZeroCoefficientsGiveZeroResponse) {
  Rng rng(2);
  StructuralSpec spec = StructuralSpec::default_spec();
  spec.beta = {0.0, 0.0};
  for (auto& p : spec.psi) p = {0.0, 0.0};
  const auto s = gen_structural(spec, 100, rng);
  for (const auto& d : s.domains)
    for (double y : d.y) EXPECT_EQ(y, 0.0);
}

TEST(Structural, LatentMomentsWithinFourSigma) {
  const std::size_t n = 20000;
  for (LatentDist dist : {LatentDist::normal, LatentDist::uniform, LatentDist::laplace}) {
    StructuralSpec spec = StructuralSpec::default_spec();
    spec.dist_u = dist;
    spec.dist_l = dist;
    Rng rng(3);
    const auto s = gen_structural(spec, n, rng);
    const double se = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_LT(std::abs(mean_of(s.u, c)), 4 * se) << to_string(dist);
      EXPECT_LT(std::abs(cross_moment(s.u, c, s.u, c) - 1.0), 4 * se * 3.0) << to_string(dist);
      for (const auto& d : s.domains) {
        EXPECT_LT(std::abs(mean_of(d.latent, c)), 4 * se);
        // invariant and domain-specific factors uncorrelated
        EXPECT_LT(std::abs(cross_moment(s.u, c, d.latent, 1 - c)), 4 * se);
        EXPECT_LT(std::abs(cross_moment(s.u, c, d.latent, c)), 4 * se);
      }
    }
    // the two domains' specific factors are independent of each other
    EXPECT_LT(std::abs(cross_moment(s.domains[0].latent, 0, s.domains[1].latent, 0)), 4 * se);
  }
}

TEST(Structural, DeterministicPerSeed) {
  Rng a(9), b(9);
  const auto s1 = gen_structural(StructuralSpec::default_spec(), 50, a);
  const auto s2 = gen_structural(StructuralSpec::default_spec(), 50, b);
  EXPECT_EQ(s1.u, s2.u);
  EXPECT_EQ(s1.domains[1].y, s2.domains[1].y);
  const auto s3 = gen_structural(StructuralSpec::default_spec(), 50, a);
  EXPECT_NE(s1.u, s3.u);
}

TEST(Structural, ValidationCatchesBadSpecs) {
  StructuralSpec s = StructuralSpec::default_spec();
  s.phi[1] = Matrix{{1, 2}, {2, 4}};
  EXPECT_THROW(s.validate(), ConfigError);
  s = StructuralSpec::default_spec();
  s.beta = {1.0};
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_latent_dist("cauchy"), ConfigError);
  EXPECT_EQ(parse_latent_dist("laplace"), LatentDist::laplace);
}

TEST(Toy, IdentityTransformClassMeans) {
  ToyDomainSpec spec;
  spec.classes = 4;
  spec.n = 4000;
  spec.domains = {DomainTransform{}};
  Rng rng(4);
  const auto d = gen_toy_domains(spec, rng)[0];
  for (std::size_t r = 0; r < 4; ++r) {
    double mx = 0, my = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.labels()[i] != r) continue;
      mx += d.x()(i, 0);
      my += d.x()(i, 1);
      ++cnt;
    }
    const double ang = 2.0 * M_PI * static_cast<double>(r) / 4.0;
    const double se = 0.6 / std::sqrt(static_cast<double>(cnt));
    EXPECT_EQ(cnt, 1000u);
    EXPECT_NEAR(mx / cnt, 3.0 * std::cos(ang), 4 * se);
    EXPECT_NEAR(my / cnt, 3.0 * std::sin(ang), 4 * se);
  }
}

TEST(Toy, QuarterTurnWithTwoClassesIsChanceForSourceRule) {
  // classes at 0 and 180 degrees; after a 90 degree turn the source rule x > 0 is a coin flip
  ToyDomainSpec spec;
  spec.classes = 2;
  spec.n = 2000;
  spec.domains = {DomainTransform{0.0}, DomainTransform{90.0}};
  Rng rng(5);
  const auto doms = gen_toy_domains(spec, rng);
  const auto acc = [](const DomainDataset& d) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) ok += (d.x()(i, 0) > 0 ? 0u : 1u) == d.labels()[i];
    return static_cast<double>(ok) / static_cast<double>(d.size());
  };
  EXPECT_GT(acc(doms[0]), 0.99);
  EXPECT_NEAR(acc(doms[1]), 0.5, 0.05);
}

TEST(Toy, DeterministicAndNoisyLabels) {
  ToyDomainSpec spec = ToyDomainSpec::rotated_blobs();
  Rng a(6), b(6);
  const auto d1 = gen_toy_domains(spec, a);
  const auto d2 = gen_toy_domains(spec, b);
  ASSERT_EQ(d1.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(d1[j].x(), d2[j].x());
  spec.label_noise = 0.3;
  spec.n = 5000;
  Rng c(7);
  const auto noisy = gen_toy_domains(spec, c)[0];
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) flipped += noisy.labels()[i] != i % 4;
  EXPECT_NEAR(static_cast<double>(flipped) / 5000.0, 0.3, 4 * std::sqrt(0.21 / 5000.0));
}

TEST(Toy, ShiftAndScaleApplied) {
  ToyDomainSpec spec;
  spec.classes = 2;
  spec.n = 2000;
  spec.domains = {DomainTransform{0.0, 2.0, 1.0, 10.0, -4.0}};
  Rng rng(8);
  const auto d = gen_toy_domains(spec, rng)[0];
  EXPECT_NEAR(mean_of(d.x(), 0), 10.0, 0.1);
  EXPECT_NEAR(mean_of(d.x(), 1), -4.0, 0.1);
  spec.domains.clear();
  EXPECT_THROW(spec.validate(), ConfigError);
}
