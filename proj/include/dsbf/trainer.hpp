#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsbf/dataset.hpp"
#include "dsbf/losses.hpp"
#include "dsbf/networks.hpp"
#include "dsbf/pseudolabel.hpp"

namespace dsbf {

enum class TrainMode { sldg, cdg, stage1_only };

TrainMode parse_train_mode(const std::string& name);
const char* to_string(TrainMode m);

struct TrainConfig {
  std::size_t m_iters = 30;  // stage-1 epochs
  std::size_t n_iters = 20;  // stage-2 epochs
  double lambda = 1.0;
  double gamma = 1.0;
  SgdConfig sgd;
  std::size_t batch_classes = 4;
  std::size_t per_class = 16;
  std::size_t cluster_rounds = 1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::sldg;
  bool add_cl_to_stage2 = false;
  double val_fraction = 0.1;
  // Each stage-2 step evaluates the attention gate at alpha + alpha_jitter * u,
  // u ~ U(0, 1); the update goes to the clean alpha. Never applied at evaluation.
  double alpha_jitter = 1e-3;
  // hidden_dim, feat_dim and bottleneck_dim are used; input_dim, classes and
  // the slot count come from the data.
  ModelDims dims;

  std::size_t batch_size() const { return batch_classes * per_class; }
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string stage;  // "stage1" or "stage2"
  double l_cl = 0.0;
  double l_im = 0.0;
  double l_cu = 0.0;
  double l_fp = 0.0;
  double l_bf = 0.0;
  double acc_labeled = 0.0;
  double acc_unlabeled_mean = 0.0;
  double acc_target = 0.0;
  double pseudo_acc_mean = 0.0;
  double alpha = 0.0;
};

struct RunMetrics {
  std::vector<EpochRecord> records;
};

struct TrainingState {
  ModelBundle model;
  SgdState opt;
  std::size_t epoch = 0;  // epochs completed across both stages
};

// Called once per epoch after the last update. The stage fills the loss
// columns, epoch, stage and alpha; the observer fills the accuracy columns.
// `pseudo` is empty during stage 1.
using EpochObserver =
    std::function<void(EpochRecord& record, const ModelBundle& model, std::span<const PseudoLabels> pseudo)>;

// Mean cross-entropy SGD over the labeled domain. Shuffled minibatches of
// cfg.batch_size() rows, last one short.
RunMetrics stage1(TrainingState& state, const DomainDataset& labeled, const TrainConfig& cfg, Rng& rng,
                  const EpochObserver& observer = {});

// One step's indices: rows of the labeled domain, and rows of each unlabeled
// domain positionally paired with them.
struct SampledBatch {
  std::vector<std::size_t> classes;
  std::vector<std::size_t> labeled_rows;
  std::vector<std::vector<std::size_t>> unlabeled_rows;
};

// Picks batch_classes classes among those present in the labeled domain
// (without replacement when enough are present, else with replacement), then
// per_class rows per class from the labeled domain by true label and from
// each unlabeled domain by pseudo label. A pool smaller than per_class is
// sampled with replacement. A class missing from an unlabeled domain's pseudo
// labels draws from the whole domain, which yields only mismatched pairs.
class ClassConditionalSampler {
 public:
  ClassConditionalSampler(std::span<const std::size_t> labeled_labels,
                          std::vector<std::vector<std::size_t>> unlabeled_pseudo, std::size_t classes,
                          std::size_t batch_classes, std::size_t per_class);

  SampledBatch draw(Rng& rng) const;
  const std::vector<std::size_t>& present_classes() const { return present_; }

 private:
  void take(const std::vector<std::size_t>& pool, std::size_t count, std::size_t domain_size, Rng& rng,
            std::vector<std::size_t>& out) const;

  std::vector<std::vector<std::size_t>> labeled_by_class_;
  std::vector<std::vector<std::vector<std::size_t>>> unlabeled_by_class_;
  std::vector<std::size_t> unlabeled_sizes_;
  std::vector<std::size_t> present_;
  std::size_t batch_classes_;
  std::size_t per_class_;
};

// Per epoch: pseudo labels from the frozen model (ground truth in cdg mode),
// then class-conditional steps on the weighted stage-2 objective. The
// number of steps per epoch matches stage 1.
RunMetrics stage2(TrainingState& state, const DomainDataset& labeled, std::span<const DomainDataset> unlabeled,
                  const TrainConfig& cfg, Rng& rng, const EpochObserver& observer = {});

struct ExperimentData {
  DomainDataset labeled;
  // Unlabeled sources. Labels, when present, are hidden from training in
  // sldg mode and only used for metrics; cdg mode trains on them.
  std::vector<DomainDataset> unlabeled;
  DomainDataset target;
};

struct FinalAccuracies {
  double labeled_val = 0.0;
  std::vector<double> unlabeled_val;
  double target = 0.0;
};

struct ExperimentResult {
  RunMetrics metrics;
  ModelBundle model;
  FinalAccuracies accuracies;
  double wall_time_s = 0.0;
};

// Splits every source 0.9/0.1, seals the target, and runs stage 1 then
// stage 2 (skipped in stage1_only mode). The target is sealed before any
// training code sees it.
ExperimentResult run_experiment(const ExperimentData& data, const TrainConfig& cfg);

// metrics.csv, summary.json and model.ckpt in `dir`.
void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentResult& result,
                              const TrainConfig& cfg, const std::string& config_echo);

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics);
std::string format_metrics_csv(const RunMetrics& metrics);
std::string summary_json(const ExperimentResult& result, const TrainConfig& cfg, const std::string& config_echo);

// Fixed-format table of final accuracies.
std::string format_accuracy_table(const ExperimentResult& result);

}  // namespace dsbf
