#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsbf/datagen.hpp"
#include "dsbf/theory.hpp"
#include "dsbf/trainer.hpp"

namespace dsbf {

// Flat "key = value" document. '#' starts a comment, blank lines are
// ignored, keys may appear once. Lists are comma separated; matrices are
// rows separated by ';' ("1, 0.3; 0.2, 1").
class RunSpec {
 public:
  static RunSpec parse(const std::string& text, const std::filesystem::path& base_dir = ".");
  static RunSpec load(const std::filesystem::path& path);

  const std::string& text() const { return text_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
  Matrix get_matrix(const std::string& key, const Matrix& fallback) const;
  // Relative paths resolve against the spec file's directory.
  std::filesystem::path get_path(const std::string& key, const std::filesystem::path& fallback) const;

 private:
  const std::string* find(const std::string& key) const;

  std::string text_;
  std::filesystem::path base_dir_;
  std::map<std::string, std::string> values_;
};

TrainConfig train_config_from(const RunSpec& spec);
ToyDomainSpec toy_spec_from(const RunSpec& spec);
StructuralSpec structural_spec_from(const RunSpec& spec);

struct TheoryPlan {
  StructuralSpec spec;
  std::vector<std::size_t> n_grid{200, 800, 3200, 12800};
  std::size_t reps = 200;
  theory::SweepOptions options;
};
TheoryPlan theory_plan_from(const RunSpec& spec);

// Which generated toy domain plays which role.
struct ToyRoles {
  std::size_t labeled = 0;
  std::vector<std::size_t> unlabeled{1};
  std::size_t target = 2;
};
ToyRoles toy_roles_from(const RunSpec& spec, std::size_t domain_count);

// Training data: CSV files named by data.labeled / data.unlabeled /
// data.target, or a generated toy task when no data.* key is present.
ExperimentData experiment_data_from(const RunSpec& spec, std::uint64_t seed);

std::string toy_spec_json(const ToyDomainSpec& spec, std::uint64_t seed);

}  // namespace dsbf
