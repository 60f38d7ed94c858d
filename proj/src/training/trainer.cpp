#include "dsbf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dsbf/checkpoint.hpp"
#include "dsbf/error.hpp"

namespace dsbf {
namespace {

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<std::size_t> gather_labels(std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Split split_rows(std::size_t n, double val_fraction, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n - 1;
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  // keep row order stable inside each split
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace

TrainMode parse_train_mode(const std::string& name) {
  if (name == "sldg") return TrainMode::sldg;
  if (name == "cdg") return TrainMode::cdg;
  if (name == "stage1_only") return TrainMode::stage1_only;
  throw ConfigError("unknown mode '" + name + "' (sldg|cdg|stage1_only)");
}

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::sldg:
      return "sldg";
    case TrainMode::cdg:
      return "cdg";
    case TrainMode::stage1_only:
      return "stage1_only";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch_classes == 0 || per_class == 0) throw ConfigError("batch_classes and per_class must be positive");
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and non-negative");
  if (!std::isfinite(gamma) || gamma < 0.0) throw ConfigError("gamma must be finite and non-negative");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!std::isfinite(alpha_jitter) || alpha_jitter < 0.0) throw ConfigError("alpha_jitter must be non-negative");
  sgd.validate();
}

double evaluate(const ModelBundle& model, const DomainDataset& dataset) {
  if (!dataset.labels_) throw ConfigError("evaluate: dataset '" + dataset.name_ + "' has no labels");
  const Matrix logits = forward_logits(model, dataset.x_);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) correct += argmax(logits.row(i)) == (*dataset.labels_)[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

RunMetrics stage1(TrainingState& state, const DomainDataset& labeled, const TrainConfig& cfg, Rng& rng,
                  const EpochObserver& observer) {
  cfg.validate();
  if (!labeled.has_labels()) throw ConfigError("stage1: labeled domain '" + labeled.name() + "' has no labels");
  const Matrix& x = labeled.x();
  const auto& labels = labeled.labels();
  const std::size_t n = labeled.size();
  const std::size_t batch = cfg.batch_size();
  const std::size_t classes = state.model.dims.classes;
  RunMetrics metrics;
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < cfg.m_iters; ++e) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      const Matrix xb = gather_rows(x, rows);
      const std::vector<std::size_t> yb = gather_labels(labels, rows);
      const LossValue lv = loss_cl(state.model, xb, one_hot(yb, classes));
      sgd_step(state.model, lv.grads, cfg.sgd, state.opt, kRouteCl);
      loss_sum += lv.value;
      ++steps;
    }
    ++state.epoch;
    EpochRecord rec;
    rec.epoch = state.epoch;
    rec.stage = "stage1";
    rec.l_cl = loss_sum / static_cast<double>(steps);
    rec.l_im = rec.l_cu = rec.l_fp = rec.l_bf = std::nan("");
    rec.alpha = state.model.alpha;
    if (observer) observer(rec, state.model, {});
    metrics.records.push_back(rec);
  }
  return metrics;
}

ClassConditionalSampler::ClassConditionalSampler(std::span<const std::size_t> labeled_labels,
                                                 std::vector<std::vector<std::size_t>> unlabeled_pseudo,
                                                 std::size_t classes, std::size_t batch_classes,
                                                 std::size_t per_class)
    : batch_classes_(batch_classes), per_class_(per_class) {
  if (classes == 0 || batch_classes == 0 || per_class == 0) throw ConfigError("sampler: sizes must be positive");
  labeled_by_class_.resize(classes);
  for (std::size_t i = 0; i < labeled_labels.size(); ++i) {
    if (labeled_labels[i] >= classes) throw DimensionError("sampler: label out of range");
    labeled_by_class_[labeled_labels[i]].push_back(i);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (!labeled_by_class_[c].empty()) present_.push_back(c);
  }
  if (present_.empty()) throw ConfigError("sampler: labeled domain is empty");
  for (const auto& pseudo : unlabeled_pseudo) {
    if (pseudo.empty()) throw ConfigError("sampler: unlabeled domain is empty");
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      if (pseudo[i] >= classes) throw DimensionError("sampler: pseudo label out of range");
      by_class[pseudo[i]].push_back(i);
    }
    unlabeled_by_class_.push_back(std::move(by_class));
    unlabeled_sizes_.push_back(pseudo.size());
  }
}

void ClassConditionalSampler::take(const std::vector<std::size_t>& pool, std::size_t count, std::size_t domain_size,
                                   Rng& rng, std::vector<std::size_t>& out) const {
  if (pool.empty()) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<std::size_t>(rng.below(domain_size)));
  } else if (pool.size() < count) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(pool[rng.below(pool.size())]);
  } else {
    // partial Fisher-Yates on a copy
    std::vector<std::size_t> tmp = pool;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(tmp.size() - i));
      std::swap(tmp[i], tmp[j]);
      out.push_back(tmp[i]);
    }
  }
}

SampledBatch ClassConditionalSampler::draw(Rng& rng) const {
  SampledBatch b;
  if (batch_classes_ <= present_.size()) {
    std::vector<std::size_t> tmp = present_;
    for (std::size_t i = 0; i < batch_classes_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(tmp.size() - i));
      std::swap(tmp[i], tmp[j]);
      b.classes.push_back(tmp[i]);
    }
  } else {
    for (std::size_t i = 0; i < batch_classes_; ++i) b.classes.push_back(present_[rng.below(present_.size())]);
  }
  b.unlabeled_rows.resize(unlabeled_by_class_.size());
  for (std::size_t c : b.classes) {
    take(labeled_by_class_[c], per_class_, 0, rng, b.labeled_rows);
    for (std::size_t s = 0; s < unlabeled_by_class_.size(); ++s) {
      take(unlabeled_by_class_[s][c], per_class_, unlabeled_sizes_[s], rng, b.unlabeled_rows[s]);
    }
  }
  return b;
}

RunMetrics stage2(TrainingState& state, const DomainDataset& labeled, std::span<const DomainDataset> unlabeled,
                  const TrainConfig& cfg, Rng& rng, const EpochObserver& observer) {
  cfg.validate();
  if (cfg.mode == TrainMode::stage1_only) return {};
  if (unlabeled.empty()) throw ConfigError("stage2: no unlabeled source domains (K - 1 = 0)");
  if (!labeled.has_labels()) throw ConfigError("stage2: labeled domain '" + labeled.name() + "' has no labels");
  if (unlabeled.size() != state.model.v.size()) {
    throw ConfigError("stage2: model has " + std::to_string(state.model.v.size()) + " projection slots but " +
                      std::to_string(unlabeled.size()) + " unlabeled domains were given");
  }
  if (cfg.mode == TrainMode::cdg) {
    for (const auto& d : unlabeled) {
      if (!d.has_labels()) throw ConfigError("stage2: cdg mode needs labels on source '" + d.name() + "'");
    }
  }
  const Matrix& x1 = labeled.x();
  const auto& y1 = labeled.labels();
  const std::size_t classes = state.model.dims.classes;
  const std::size_t steps = steps_per_epoch(labeled.size(), cfg.batch_size());
  const Stage2Weights weights{cfg.lambda, cfg.gamma, cfg.add_cl_to_stage2};
  RunMetrics metrics;
  for (std::size_t e = 0; e < cfg.n_iters; ++e) {
    // pseudo labels from the model as it stands at the start of the epoch
    std::vector<PseudoLabels> pseudo;
    std::vector<std::vector<std::size_t>> assigned;
    for (std::size_t s = 0; s < unlabeled.size(); ++s) {
      if (cfg.mode == TrainMode::cdg) {
        PseudoLabels p;
        p.domain = s;
        p.final = unlabeled[s].labels();
        p.one_hot = one_hot(p.final, classes);
        p.min_distance.assign(p.final.size(), 0.0);
        pseudo.push_back(std::move(p));
      } else {
        pseudo.push_back(assign_pseudo_labels(state.model, unlabeled[s].x(), cfg.cluster_rounds, s));
      }
      assigned.push_back(pseudo.back().final);
    }
    const ClassConditionalSampler sampler(y1, assigned, classes, cfg.batch_classes, cfg.per_class);
    StageLossParts sums;
    for (std::size_t step = 0; step < steps; ++step) {
      const SampledBatch sb = sampler.draw(rng);
      Stage2Batch batch;
      batch.labeled.x = gather_rows(x1, sb.labeled_rows);
      batch.labeled.labels = gather_labels(y1, sb.labeled_rows);
      for (std::size_t s = 0; s < unlabeled.size(); ++s) {
        UnlabeledBatch ub;
        ub.x = gather_rows(unlabeled[s].x(), sb.unlabeled_rows[s]);
        ub.pseudo = gather_labels(assigned[s], sb.unlabeled_rows[s]);
        batch.unlabeled.push_back(std::move(ub));
      }
      const double offset = cfg.alpha_jitter * rng.uniform();
      const Stage2Result r = stage2_objective(state.model, batch, weights, offset);
      sgd_step(state.model, r.grads, cfg.sgd, state.opt);
      sums.cl += r.parts.cl;
      sums.im += r.parts.im;
      sums.cu += r.parts.cu;
      sums.fp += r.parts.fp;
      sums.bf += r.parts.bf;
    }
    ++state.epoch;
    const double inv = 1.0 / static_cast<double>(steps);
    EpochRecord rec;
    rec.epoch = state.epoch;
    rec.stage = "stage2";
    rec.l_cl = cfg.add_cl_to_stage2 ? sums.cl * inv : std::nan("");
    rec.l_im = sums.im * inv;
    rec.l_cu = sums.cu * inv;
    rec.l_fp = sums.fp * inv;
    rec.l_bf = sums.bf * inv;
    rec.alpha = state.model.alpha;
    if (observer) observer(rec, state.model, pseudo);
    metrics.records.push_back(rec);
  }
  return metrics;
}

ExperimentResult run_experiment(const ExperimentData& data, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (!data.labeled.has_labels()) throw ConfigError("labeled source '" + data.labeled.name() + "' has no labels");
  if (!data.target.has_labels()) throw ConfigError("target '" + data.target.name() + "' needs labels for evaluation");
  if (cfg.mode != TrainMode::stage1_only && data.unlabeled.empty()) {
    throw ConfigError(std::string("mode ") + to_string(cfg.mode) + " needs at least one unlabeled source (K - 1 = 0)");
  }
  // Seal the target first; from here on only evaluate() can read it.
  const DomainDataset target = data.target.sealed();
  const std::size_t input_dim = data.labeled.dim();
  for (const auto& d : data.unlabeled) {
    if (d.dim() != input_dim) throw DimensionError("source '" + d.name() + "' has a different feature count");
  }
  if (target.dim() != input_dim) throw DimensionError("target has a different feature count");

  std::size_t classes = data.labeled.label_span();
  for (const auto& d : data.unlabeled) classes = std::max(classes, d.label_span());
  // the target does not get a say; a target label outside this range just scores as wrong
  classes = std::max<std::size_t>(classes, 2);

  ModelDims dims = cfg.dims;
  dims.input_dim = input_dim;
  dims.classes = classes;
  dims.unlabeled_domains = data.unlabeled.size();
  // stage1_only with no unlabeled sources still needs a valid bundle
  if (dims.unlabeled_domains == 0) dims.unlabeled_domains = 1;

  const Rng root(cfg.seed);
  Rng init_rng = root.derive(1);
  Rng split_rng = root.derive(2);
  Rng stage1_rng = root.derive(3);
  Rng stage2_rng = root.derive(4);

  const Split lsplit = split_rows(data.labeled.size(), cfg.val_fraction, split_rng);
  const DomainDataset labeled_train = data.labeled.subset(lsplit.train);
  const DomainDataset labeled_val = data.labeled.subset(lsplit.val.empty() ? lsplit.train : lsplit.val).sealed();

  std::vector<DomainDataset> unlabeled_train;
  std::vector<DomainDataset> unlabeled_val;  // sealed, labels only reach evaluate()
  std::vector<std::optional<std::vector<std::size_t>>> hidden_truth;
  for (const auto& d : data.unlabeled) {
    const Split s = split_rows(d.size(), cfg.val_fraction, split_rng);
    DomainDataset tr = d.subset(s.train);
    if (d.has_labels()) {
      hidden_truth.emplace_back(tr.labels());
      unlabeled_val.push_back(d.subset(s.val.empty() ? s.train : s.val).sealed());
    } else {
      hidden_truth.emplace_back(std::nullopt);
    }
    unlabeled_train.push_back(cfg.mode == TrainMode::cdg ? std::move(tr) : tr.without_labels());
  }

  TrainingState state;
  state.model = ModelBundle::create(dims, init_rng);
  state.opt = SgdState::for_model(state.model);

  const EpochObserver observer = [&](EpochRecord& rec, const ModelBundle& model, std::span<const PseudoLabels> pl) {
    rec.acc_labeled = evaluate(model, labeled_val);
    if (unlabeled_val.empty()) {
      rec.acc_unlabeled_mean = std::nan("");
    } else {
      double s = 0.0;
      for (const auto& d : unlabeled_val) s += evaluate(model, d);
      rec.acc_unlabeled_mean = s / static_cast<double>(unlabeled_val.size());
    }
    rec.acc_target = evaluate(model, target);
    double ps = 0.0;
    std::size_t pn = 0;
    for (const auto& p : pl) {
      if (p.domain < hidden_truth.size() && hidden_truth[p.domain]) {
        ps += label_agreement(p.final, *hidden_truth[p.domain]);
        ++pn;
      }
    }
    rec.pseudo_acc_mean = pn == 0 ? std::nan("") : ps / static_cast<double>(pn);
  };

  ExperimentResult result;
  result.metrics = stage1(state, labeled_train, cfg, stage1_rng, observer);
  if (cfg.mode != TrainMode::stage1_only) {
    RunMetrics m2 = stage2(state, labeled_train, unlabeled_train, cfg, stage2_rng, observer);
    result.metrics.records.insert(result.metrics.records.end(), m2.records.begin(), m2.records.end());
  }
  result.model = std::move(state.model);
  result.accuracies.labeled_val = evaluate(result.model, labeled_val);
  for (const auto& d : unlabeled_val) result.accuracies.unlabeled_val.push_back(evaluate(result.model, d));
  result.accuracies.target = evaluate(result.model, target);
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::string format_metrics_csv(const RunMetrics& metrics) {
  std::ostringstream out;
  out << "epoch,stage,l_cl,l_im,l_cu,l_fp,l_bf,acc_labeled,acc_unlabeled_mean,acc_target,pseudo_acc_mean,alpha\n";
  for (const auto& r : metrics.records) {
    out << r.epoch << ',' << r.stage << ',' << fmt6(r.l_cl) << ',' << fmt6(r.l_im) << ',' << fmt6(r.l_cu) << ','
        << fmt6(r.l_fp) << ',' << fmt6(r.l_bf) << ',' << fmt6(r.acc_labeled) << ',' << fmt6(r.acc_unlabeled_mean)
        << ',' << fmt6(r.acc_target) << ',' << fmt6(r.pseudo_acc_mean) << ',' << fmt6(r.alpha) << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write metrics: " + path.string());
  out << format_metrics_csv(metrics);
  if (!out) throw IoError("failed writing " + path.string());
}

std::string summary_json(const ExperimentResult& result, const TrainConfig& cfg, const std::string& config_echo) {
  nlohmann::ordered_json j;
  j["config_echo"] = config_echo;
  nlohmann::ordered_json acc;
  acc["labeled_val"] = result.accuracies.labeled_val;
  acc["unlabeled_val"] = result.accuracies.unlabeled_val;
  acc["target"] = result.accuracies.target;
  j["final_accuracies"] = acc;
  j["seed"] = cfg.seed;
  j["wall_time_s"] = result.wall_time_s;
  return j.dump(2) + "\n";
}

void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentResult& result,
                              const TrainConfig& cfg, const std::string& config_echo) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_metrics_csv(dir / "metrics.csv", result.metrics);
  std::ofstream js(dir / "summary.json", std::ios::trunc | std::ios::binary);
  if (!js) throw IoError("cannot write " + (dir / "summary.json").string());
  js << summary_json(result, cfg, config_echo);
  if (!js) throw IoError("failed writing summary.json");
  save_checkpoint(dir / "model.ckpt", result.model);
}

std::string format_accuracy_table(const ExperimentResult& result) {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-20s %10s\n", "domain", "accuracy");
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-20s %10.6g\n", "labeled_val", result.accuracies.labeled_val);
  out << buf;
  for (std::size_t s = 0; s < result.accuracies.unlabeled_val.size(); ++s) {
    const std::string name = "unlabeled_" + std::to_string(s) + "_val";
    std::snprintf(buf, sizeof(buf), "%-20s %10.6g\n", name.c_str(), result.accuracies.unlabeled_val[s]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-20s %10.6g\n", "target", result.accuracies.target);
  out << buf;
  return out.str();
}

}  // namespace dsbf
