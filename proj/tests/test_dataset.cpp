#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dsbf/dataset.hpp"
#include "dsbf/error.hpp"
#include "dsbf/networks.hpp"
#include "test_helpers.hpp"

using namespace dsbf;

namespace {

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Dataset, CsvRoundTripIsExact) {
  Rng rng(1);
  const Matrix x = test::random_matrix(13, 3, rng, 1e3);
  const DomainDataset d(4, x, test::random_labels(13, 5, rng), "d");
  write_domain_csv(tmp("dsbf_rt.csv"), d);
  const DomainDataset back = read_domain_csv(tmp("dsbf_rt.csv"));
  EXPECT_EQ(back.x(), x);
  EXPECT_EQ(back.labels(), d.labels());
  EXPECT_EQ(back.domain_id(), 4u);

  const DomainDataset u = d.without_labels();
  write_domain_csv(tmp("dsbf_rt_u.csv"), u);
  const DomainDataset ub = read_domain_csv(tmp("dsbf_rt_u.csv"));
  EXPECT_FALSE(ub.has_labels());
  EXPECT_EQ(ub.x(), x);
  EXPECT_EQ(ub.label_span(), 0u);
}

TEST(Dataset, MixedLabelFileRejected) {
  write_file(tmp("dsbf_mixed.csv"), "domain_id,label,feature_0\n1,0,0.5\n1,-1,0.25\n");
  EXPECT_THROW(read_domain_csv(tmp("dsbf_mixed.csv")), ConfigError);
  write_file(tmp("dsbf_ragged.csv"), "domain_id,label,feature_0,feature_1\n1,0,0.5\n");
  EXPECT_ANY_THROW(read_domain_csv(tmp("dsbf_ragged.csv")));
  EXPECT_THROW(read_domain_csv(tmp("dsbf_does_not_exist.csv")), IoError);
}

TEST(Dataset, SealedRefusesAccess) {
  Rng rng(2);
  const DomainDataset d(0, test::random_matrix(4, 2, rng), std::vector<std::size_t>{0, 1, 0, 1}, "t");
  const DomainDataset s = d.sealed();
  EXPECT_TRUE(s.is_sealed());
  EXPECT_THROW(s.x(), SealedDatasetError);
  EXPECT_THROW(s.labels(), SealedDatasetError);
  EXPECT_THROW(s.subset(std::vector<std::size_t>{0}), SealedDatasetError);
  EXPECT_EQ(s.size(), 4u);
}

TEST(Dataset, EvaluateReadsSealedData) {
  // a classifier that always says class 0 scores the class-0 fraction
  Rng rng(3);
  ModelBundle m = ModelBundle::create(ModelDims{2, 3, 3, 3, 2, 1}, rng).zeros_like();
  m.c.bias = {1.0, 0.0};
  const DomainDataset d(0, test::random_matrix(4, 2, rng), std::vector<std::size_t>{0, 1, 0, 0}, "t");
  EXPECT_EQ(evaluate(m, d.sealed()), 0.75);
  EXPECT_THROW(evaluate(m, d.without_labels()), ConfigError);
}

TEST(Dataset, SubsetKeepsRowsAndLabels) {
  const DomainDataset d(1, Matrix{{1, 2}, {3, 4}, {5, 6}}, std::vector<std::size_t>{2, 0, 1}, "s");
  const DomainDataset s = d.subset(std::vector<std::size_t>{2, 0});
  EXPECT_EQ(s.x(), (Matrix{{5, 6}, {1, 2}}));
  EXPECT_EQ(s.labels(), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(d.label_span(), 3u);
  EXPECT_THROW(DomainDataset(0, Matrix{{1}}, std::vector<std::size_t>{0, 1}, "bad"), DimensionError);
}
