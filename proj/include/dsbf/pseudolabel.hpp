#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dsbf/networks.hpp"

namespace dsbf {

enum class CentroidStage { soft = 0, hard = 1 };

struct CentroidSet {
  std::size_t domain = 0;
  CentroidStage stage = CentroidStage::soft;
  Matrix centroids;          // C x D
  std::vector<bool> empty;   // class had no supporting mass; centroid was carried over
};

struct PseudoLabels {
  std::size_t domain = 0;
  std::vector<std::size_t> initial;  // first cosine assignment (empty when rounds = 0)
  std::vector<std::size_t> final;
  Matrix one_hot;                    // n x C indicator rows of `final`
  std::vector<double> min_distance;  // cosine distance to the chosen centroid (0 when rounds = 0)
};

// Prediction-weighted class centroids. A class whose total weight is below
// 1e-12 gets the global feature mean and is flagged empty.
CentroidSet soft_centroids(const Matrix& features, const Matrix& probs);

// Cosine-nearest centroid per row; ties go to the lowest class index.
std::vector<std::size_t> assign_nearest(const Matrix& features, const CentroidSet& cents,
                                        std::vector<double>* min_distance = nullptr);

struct Refinement {
  CentroidSet centroids;
  std::vector<std::size_t> labels;
};

// Hard per-class means of the current labels followed by re-assignment.
// A class with no members keeps its centroid from `previous`.
Refinement refine(const Matrix& features, std::span<const std::size_t> labels, const CentroidSet& previous);

// rounds = 0: argmax of the model prediction. rounds >= 1: soft centroids,
// cosine assignment, then `rounds` refinements. Features are b(g(x)).
PseudoLabels assign_pseudo_labels(const ModelBundle& model, const Matrix& x, std::size_t rounds,
                                  std::size_t domain = 0);

// Fraction of positions where the two label vectors agree.
double label_agreement(std::span<const std::size_t> a, std::span<const std::size_t> b);

// Debug dump: sample_id,d,y_hat,min_distance
void write_pseudo_label_csv(const std::filesystem::path& path, const PseudoLabels& labels);

}  // namespace dsbf
