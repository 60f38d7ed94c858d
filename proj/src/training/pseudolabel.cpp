#include "dsbf/pseudolabel.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include "dsbf/error.hpp"
#include "dsbf/numerics/kernels.hpp"

namespace dsbf {
namespace {

constexpr double kEmptyMass = 1e-12;

}  // namespace

CentroidSet soft_centroids(const Matrix& features, const Matrix& probs) {
  if (features.rows() != probs.rows() || features.empty()) {
    throw DimensionError("soft_centroids: features and probabilities must share a non-zero row count");
  }
  const std::size_t classes = probs.cols();
  const std::size_t dim = features.cols();
  CentroidSet out;
  out.stage = CentroidStage::soft;
  out.centroids = Matrix(classes, dim);
  out.empty.assign(classes, false);
  Vector mass(classes, 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t r = 0; r < classes; ++r) {
      const double w = probs(i, r);
      mass[r] += w;
      kernels::axpy(w, features.row(i).data(), out.centroids.row(r).data(), dim);
    }
  }
  const Vector global = column_means(features);
  for (std::size_t r = 0; r < classes; ++r) {
    auto row = out.centroids.row(r);
    if (mass[r] < kEmptyMass) {
      std::copy(global.begin(), global.end(), row.begin());
      out.empty[r] = true;
    } else {
      kernels::scale(1.0 / mass[r], row.data(), dim);
    }
  }
  return out;
}

std::vector<std::size_t> assign_nearest(const Matrix& features, const CentroidSet& cents,
                                        std::vector<double>* min_distance) {
  if (features.cols() != cents.centroids.cols()) throw DimensionError("assign_nearest: feature dimension mismatch");
  std::vector<std::size_t> labels(features.rows(), 0);
  if (min_distance != nullptr) min_distance->assign(features.rows(), 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::size_t best = 0;
    double best_d = cosine_distance(features.row(i), cents.centroids.row(0));
    for (std::size_t r = 1; r < cents.centroids.rows(); ++r) {
      const double d = cosine_distance(features.row(i), cents.centroids.row(r));
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    labels[i] = best;
    if (min_distance != nullptr) (*min_distance)[i] = best_d;
  }
  return labels;
}

Refinement refine(const Matrix& features, std::span<const std::size_t> labels, const CentroidSet& previous) {
  if (labels.size() != features.rows()) throw DimensionError("refine: label count mismatch");
  const std::size_t classes = previous.centroids.rows();
  const std::size_t dim = features.cols();
  Refinement out;
  out.centroids.domain = previous.domain;
  out.centroids.stage = CentroidStage::hard;
  out.centroids.centroids = Matrix(classes, dim);
  out.centroids.empty.assign(classes, false);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] >= classes) throw DimensionError("refine: label out of range");
    ++count[labels[i]];
    kernels::axpy(1.0, features.row(i).data(), out.centroids.centroids.row(labels[i]).data(), dim);
  }
  for (std::size_t r = 0; r < classes; ++r) {
    auto row = out.centroids.centroids.row(r);
    if (count[r] == 0) {
      const auto prev = previous.centroids.row(r);
      std::copy(prev.begin(), prev.end(), row.begin());
      out.centroids.empty[r] = true;
    } else {
      kernels::scale(1.0 / static_cast<double>(count[r]), row.data(), dim);
    }
  }
  out.labels = assign_nearest(features, out.centroids);
  return out;
}

PseudoLabels assign_pseudo_labels(const ModelBundle& model, const Matrix& x, std::size_t rounds, std::size_t domain) {
  ForwardCache cache;
  const Matrix logits = forward_logits(model, x, &cache);
  PseudoLabels out;
  out.domain = domain;
  if (rounds == 0) {
    out.final.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out.final[i] = argmax(logits.row(i));
    out.min_distance.assign(x.rows(), 0.0);
  } else {
    const Matrix& features = cache.c.input;
    CentroidSet cents = soft_centroids(features, softmax_rows(logits));
    cents.domain = domain;
    out.initial = assign_nearest(features, cents);
    std::vector<std::size_t> labels = out.initial;
    for (std::size_t round = 0; round < rounds; ++round) {
      Refinement step = refine(features, labels, cents);
      cents = std::move(step.centroids);
      labels = std::move(step.labels);
    }
    out.final = std::move(labels);
    assign_nearest(features, cents, &out.min_distance);
  }
  out.one_hot = Matrix(out.final.size(), out.final.empty() ? 0 : model.dims.classes);
  for (std::size_t i = 0; i < out.final.size(); ++i) out.one_hot(i, out.final[i]) = 1.0;
  return out;
}

double label_agreement(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw DimensionError("label_agreement: length mismatch");
  if (a.empty()) return 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

void write_pseudo_label_csv(const std::filesystem::path& path, const PseudoLabels& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pseudo-label dump: " + path.string());
  out << "sample_id,d,y_hat,min_distance\n";
  char buf[64];
  for (std::size_t i = 0; i < labels.final.size(); ++i) {
    const long d = labels.initial.empty() ? -1 : static_cast<long>(labels.initial[i]);
    std::snprintf(buf, sizeof(buf), "%.6g", labels.min_distance[i]);
    out << i << ',' << d << ',' << labels.final[i] << ',' << buf << '\n';
  }
}

}  // namespace dsbf
