#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsbf/numerics/matrix.hpp"

namespace dsbf {

struct ModelBundle;
class DomainDataset;

double evaluate(const ModelBundle& model, const DomainDataset& dataset);

// One domain's samples. Labels are either present for every row or absent.
//
// A sealed dataset refuses feature and label access through the public
// accessors; only evaluate() can read it. The held-out target travels
// through the experiment driver sealed, so any training path that touches it
// fails loudly.
class DomainDataset {
 public:
  DomainDataset() = default;
  DomainDataset(std::size_t domain_id, Matrix x, std::optional<std::vector<std::size_t>> labels, std::string name);

  std::size_t domain_id() const noexcept { return domain_id_; }
  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return x_.rows(); }
  std::size_t dim() const noexcept { return x_.cols(); }
  bool has_labels() const noexcept { return labels_.has_value(); }
  bool is_sealed() const noexcept { return sealed_; }

  const Matrix& x() const;
  const std::vector<std::size_t>& labels() const;
  // Largest label + 1, or 0 when unlabeled.
  std::size_t label_span() const;

  DomainDataset without_labels() const;
  DomainDataset sealed() const;
  DomainDataset subset(std::span<const std::size_t> rows) const;

 private:
  friend double evaluate(const ModelBundle& model, const DomainDataset& dataset);

  std::size_t domain_id_ = 0;
  Matrix x_;
  std::optional<std::vector<std::size_t>> labels_;
  std::string name_;
  bool sealed_ = false;
};

// CSV layout: header "domain_id,label,feature_0,...,feature_{d-1}", then one
// row per sample. label is -1 for unlabeled rows; a file is either fully
// labeled or fully unlabeled. Features are written with 17 significant digits
// so values round-trip exactly.
void write_domain_csv(const std::filesystem::path& path, const DomainDataset& dataset);
DomainDataset read_domain_csv(const std::filesystem::path& path);

}  // namespace dsbf
