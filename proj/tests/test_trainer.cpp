#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "dsbf/datagen.hpp"
#include "dsbf/error.hpp"
#include "dsbf/trainer.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace dsbf;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.m_iters = 4;
  cfg.n_iters = 3;
  cfg.dims.hidden_dim = 16;
  cfg.dims.feat_dim = 12;
  cfg.dims.bottleneck_dim = 8;
  cfg.batch_classes = 2;
  cfg.per_class = 8;
  return cfg;
}

ExperimentData toy_data(std::uint64_t seed, std::size_t n = 120) {
  ToyDomainSpec spec = ToyDomainSpec::rotated_blobs();
  spec.n = n;
  Rng rng(seed);
  auto doms = gen_toy_domains(spec, rng);
  ExperimentData d;
  d.labeled = doms[0];
  d.unlabeled = {doms[1]};
  d.target = doms[2];
  return d;
}

}  // namespace

TEST(Trainer, EvaluateMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelBundle m = test::random_model(ModelDims{2, 6, 5, 4, 3, 1}, seed);
    Rng rng(seed);
    const Matrix x = test::random_matrix(25, 2, rng);
    const auto y = test::random_labels(25, 3, rng);
    const Matrix lg = oracle::logits(m, x);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < 25; ++i) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < 3; ++r)
        if (lg(i, r) > lg(i, best)) best = r;
      ok += best == y[i];
    }
    EXPECT_EQ(evaluate(m, DomainDataset(0, x, y, "e")), static_cast<double>(ok) / 25.0);
  }
}

TEST(Sampler, TrivialSingleClass) {
  const std::vector<std::size_t> labels{0, 0, 0};
  ClassConditionalSampler s(labels, {{0, 0}}, 2, 1, 2);
  Rng rng(1);
  const SampledBatch b = s.draw(rng);
  EXPECT_EQ(b.classes, (std::vector<std::size_t>{0}));
  ASSERT_EQ(b.labeled_rows.size(), 2u);
  EXPECT_NE(b.labeled_rows[0], b.labeled_rows[1]);  // enough rows: no repeats
  ASSERT_EQ(b.unlabeled_rows[0].size(), 2u);
}

TEST(Sampler, RowsFollowTheirClass) {
  Rng rng(2);
  const auto labels = test::random_labels(200, 5, rng);
  const auto pseudo_a = test::random_labels(150, 5, rng);
  const auto pseudo_b = test::random_labels(90, 5, rng);
  ClassConditionalSampler s(labels, {pseudo_a, pseudo_b}, 5, 4, 6);
  for (int t = 0; t < 200; ++t) {
    const SampledBatch b = s.draw(rng);
    ASSERT_EQ(b.classes.size(), 4u);
    EXPECT_EQ(std::set<std::size_t>(b.classes.begin(), b.classes.end()).size(), 4u);
    ASSERT_EQ(b.labeled_rows.size(), 24u);
    for (std::size_t i = 0; i < 24; ++i) {
      const std::size_t cls = b.classes[i / 6];
      EXPECT_EQ(labels[b.labeled_rows[i]], cls);
      EXPECT_EQ(pseudo_a[b.unlabeled_rows[0][i]], cls);
      EXPECT_EQ(pseudo_b[b.unlabeled_rows[1][i]], cls);
    }
  }
}

TEST(Sampler, ClassChoiceIsUniform) {
  Rng rng(3);
  const auto labels = test::random_labels(400, 6, rng);
  ClassConditionalSampler s(labels, {labels}, 6, 2, 1);
  std::map<std::size_t, int> hits;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t)
    for (std::size_t c : s.draw(rng).classes) ++hits[c];
  // each class appears in 2/6 of draws
  const double p = 2.0 / 6.0, sd = std::sqrt(draws * p * (1 - p));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(hits[c], draws * p, 3 * sd) << c;
}

TEST(Sampler, MissingPseudoClassDrawsWholeDomain) {
  const std::vector<std::size_t> labels{0, 1, 0, 1};
  ClassConditionalSampler s(labels, {{0, 0, 0}}, 2, 2, 3);
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const SampledBatch b = s.draw(rng);
    for (std::size_t r : b.unlabeled_rows[0]) EXPECT_LT(r, 3u);
  }
  EXPECT_THROW(ClassConditionalSampler(labels, {{}}, 2, 2, 3), ConfigError);
  EXPECT_THROW(ClassConditionalSampler(labels, {{5}}, 2, 2, 3), DimensionError);
}

TEST(Trainer, ZeroEpochsLeaveModelUnchanged) {
  const ExperimentData d = toy_data(5);
  TrainConfig cfg = small_config(5);
  cfg.m_iters = 0;
  Rng init(1);
  TrainingState st{ModelBundle::create(ModelDims{2, 16, 12, 8, 4, 1}, init), {}, 0};
  st.opt = SgdState::for_model(st.model);
  const ModelBundle before = st.model;
  Rng rng(2);
  const RunMetrics m = stage1(st, d.labeled, cfg, rng);
  EXPECT_TRUE(m.records.empty());
  EXPECT_EQ(st.model, before);
}

TEST(Trainer, SeparableBlobsAreLearned) {
  ToyDomainSpec spec;
  spec.classes = 2;
  spec.n = 400;
  spec.radius = 4.0;
  spec.cluster_std = 0.5;
  spec.domains = {DomainTransform{}};
  Rng data_rng(6);
  const DomainDataset d = gen_toy_domains(spec, data_rng)[0];
  TrainConfig cfg = small_config(6);
  cfg.m_iters = 50;
  Rng init(7);
  TrainingState st{ModelBundle::create(ModelDims{2, 16, 12, 8, 2, 1}, init), {}, 0};
  st.opt = SgdState::for_model(st.model);
  Rng rng(8);
  const RunMetrics m = stage1(st, d, cfg, rng);
  EXPECT_EQ(m.records.size(), 50u);
  EXPECT_LT(m.records.back().l_cl, m.records.front().l_cl);
  EXPECT_TRUE(std::isnan(m.records.back().l_bf));
  EXPECT_GE(evaluate(st.model, d), 0.99);
}

TEST(Trainer, RunIsDeterministic) {
  const ExperimentData d = toy_data(9);
  const TrainConfig cfg = small_config(9);
  const ExperimentResult a = run_experiment(d, cfg);
  const ExperimentResult b = run_experiment(d, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(format_metrics_csv(a.metrics), format_metrics_csv(b.metrics));
  TrainConfig other = cfg;
  other.seed = 10;
  EXPECT_NE(run_experiment(d, other).model, a.model);
}

TEST(Trainer, Stage1OnlyEqualsSldgWithoutStage2) {
  const ExperimentData d = toy_data(11);
  TrainConfig cfg = small_config(11);
  cfg.n_iters = 0;
  const ExperimentResult sldg = run_experiment(d, cfg);
  cfg.mode = TrainMode::stage1_only;
  cfg.n_iters = 7;
  const ExperimentResult base = run_experiment(d, cfg);
  EXPECT_EQ(sldg.model, base.model);
  EXPECT_EQ(base.metrics.records.size(), cfg.m_iters);
}

TEST(Trainer, TargetContentNeverReachesTraining) {
  // canary: swapping the target for unrelated data must not change a single weight
  ExperimentData d = toy_data(12);
  const TrainConfig cfg = small_config(12);
  const ExperimentResult a = run_experiment(d, cfg);
  Rng rng(13);
  d.target = DomainDataset(2, test::random_matrix(77, 2, rng, 50.0), test::random_labels(77, 9, rng), "canary");
  const ExperimentResult b = run_experiment(d, cfg);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.metrics.records.size(), b.metrics.records.size());
  const auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  for (std::size_t i = 0; i < a.metrics.records.size(); ++i) {
    const auto &ra = a.metrics.records[i], &rb = b.metrics.records[i];
    for (auto f : {&EpochRecord::l_cl, &EpochRecord::l_im, &EpochRecord::l_cu, &EpochRecord::l_fp, &EpochRecord::l_bf,
                   &EpochRecord::acc_labeled, &EpochRecord::pseudo_acc_mean, &EpochRecord::alpha})
      EXPECT_TRUE(same(ra.*f, rb.*f)) << "epoch " << i;
  }
}

TEST(Trainer, Stage2SeesSealedTargetAsError) {
  const ExperimentData d = toy_data(14);
  TrainConfig cfg = small_config(14);
  Rng init(1);
  TrainingState st{ModelBundle::create(ModelDims{2, 16, 12, 8, 4, 1}, init), {}, 0};
  st.opt = SgdState::for_model(st.model);
  Rng rng(2);
  const std::vector<DomainDataset> leaked{d.target.sealed()};
  EXPECT_THROW(stage2(st, d.labeled, leaked, cfg, rng), SealedDatasetError);
}

TEST(Trainer, NoUnlabeledSourcesIsConfigError) {
  ExperimentData d = toy_data(15);
  d.unlabeled.clear();
  TrainConfig cfg = small_config(15);
  EXPECT_THROW(run_experiment(d, cfg), ConfigError);
  cfg.mode = TrainMode::stage1_only;
  EXPECT_NO_THROW(run_experiment(d, cfg));
}

TEST(Trainer, CdgUsesTrueLabels) {
  const ExperimentData d = toy_data(16);
  TrainConfig cfg = small_config(16);
  cfg.mode = TrainMode::cdg;
  const ExperimentResult r = run_experiment(d, cfg);
  for (const auto& rec : r.metrics.records)
    if (rec.stage == "stage2") EXPECT_EQ(rec.pseudo_acc_mean, 1.0);
  ExperimentData unl = d;
  unl.unlabeled[0] = unl.unlabeled[0].without_labels();
  EXPECT_THROW(run_experiment(unl, cfg), ConfigError);
}

TEST(Trainer, MetricsCsvLayout) {
  const ExperimentData d = toy_data(17);
  const ExperimentResult r = run_experiment(d, small_config(17));
  const std::string csv = format_metrics_csv(r.metrics);
  EXPECT_EQ(csv.rfind("epoch,stage,l_cl,l_im,l_cu,l_fp,l_bf,acc_labeled,acc_unlabeled_mean,acc_target,pseudo_acc_mean,alpha\n", 0),
            0u);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 4u + 3u);
  EXPECT_NE(csv.find(",stage1,"), std::string::npos);
  EXPECT_NE(csv.find(",stage2,"), std::string::npos);
  EXPECT_NE(summary_json(r, small_config(17), "seed = 17\n").find("\"final_accuracies\""), std::string::npos);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig cfg;
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.val_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_train_mode("stage1_only"), TrainMode::stage1_only);
  EXPECT_THROW(parse_train_mode("both"), ConfigError);
}
