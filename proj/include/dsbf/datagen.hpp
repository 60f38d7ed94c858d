#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsbf/dataset.hpp"
#include "dsbf/numerics/matrix.hpp"
#include "dsbf/numerics/rng.hpp"

namespace dsbf {

// Zero-mean, unit-variance sampling laws for the latent factors.
enum class LatentDist { normal, uniform, laplace };

LatentDist parse_latent_dist(const std::string& name);
const char* to_string(LatentDist d);

// Linear structural world: per domain j and sample i,
//   H_i^j = phi_j^T U_i + eta_j^T L_i^j,   Y_i^j = beta^T H_i^j + psi_j^T L_i^j.
// U_i is shared by all domains at sample index i (it is the domain-invariant
// factor); each L^j is drawn independently per domain.
struct StructuralSpec {
  std::size_t d_h = 2;
  std::size_t k = 2;
  std::vector<Matrix> phi;  // k matrices, d_h x d_h
  std::vector<Matrix> eta;  // k matrices, d_h x d_h
  Vector beta;              // d_h
  std::vector<Vector> psi;  // k vectors, d_h
  LatentDist dist_u = LatentDist::normal;
  LatentDist dist_l = LatentDist::normal;
  std::size_t n = 1000;

  // Shape checks plus: min eigenvalue of phi_j^T E[U U^T] phi_j > 0 for each j.
  void validate() const;

  // d_h = 2, K = 2, nonzero domain-specific parts. Domain 0 is the labeled one.
  static StructuralSpec default_spec();
  // Same as default_spec() with eta = psi = 0.
  static StructuralSpec degenerate_spec();
};

struct StructuralDomain {
  Matrix h;  // n x d_h
  Vector y;  // n
  Matrix latent;  // n x d_h, the domain-specific factor L^j (kept for diagnostics)
};

struct StructuralSample {
  Matrix u;  // n x d_h, shared invariant factor
  std::vector<StructuralDomain> domains;
};

StructuralSample gen_structural(const StructuralSpec& spec, Rng& rng);
// Same, with an explicit sample count.
StructuralSample gen_structural(const StructuralSpec& spec, std::size_t n, Rng& rng);

struct DomainTransform {
  double rotation_deg = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

// Gaussian class clusters in the plane, transformed per domain. Class r has
// its mean at radius `radius`, angle 360 * r / classes degrees (so class 0
// sits on the +x axis). Extra input dimensions beyond two carry pure noise.
struct ToyDomainSpec {
  std::size_t classes = 4;
  std::size_t input_dim = 2;
  std::size_t n = 400;  // samples per domain
  double radius = 3.0;
  double cluster_std = 0.6;
  double label_noise = 0.0;
  std::vector<DomainTransform> domains;

  void validate() const;
  static ToyDomainSpec rotated_blobs();
};

// Every returned domain is fully labeled; callers hide labels by role.
std::vector<DomainDataset> gen_toy_domains(const ToyDomainSpec& spec, Rng& rng);

}  // namespace dsbf
