#include "dsbf/datagen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dsbf/error.hpp"
#include "dsbf/numerics/linalg.hpp"

namespace dsbf {
namespace {

double draw(LatentDist d, Rng& rng) {
  switch (d) {
    case LatentDist::normal:
      return rng.normal();
    case LatentDist::uniform:
      return std::sqrt(3.0) * rng.uniform(-1.0, 1.0);
    case LatentDist::laplace:
      return rng.laplace();
  }
  return 0.0;
}

Matrix draw_matrix(std::size_t n, std::size_t d, LatentDist dist, Rng& rng) {
  Matrix m(n, d);
  for (double& v : m.values()) v = draw(dist, rng);
  return m;
}

}  // namespace

LatentDist parse_latent_dist(const std::string& name) {
  if (name == "normal") return LatentDist::normal;
  if (name == "uniform") return LatentDist::uniform;
  if (name == "laplace") return LatentDist::laplace;
  throw ConfigError("unknown latent distribution '" + name + "' (normal|uniform|laplace)");
}

const char* to_string(LatentDist d) {
  switch (d) {
    case LatentDist::normal:
      return "normal";
    case LatentDist::uniform:
      return "uniform";
    case LatentDist::laplace:
      return "laplace";
  }
  return "?";
}

void StructuralSpec::validate() const {
  if (d_h == 0) throw ConfigError("structural spec: d_h must be positive");
  if (k < 2) throw ConfigError("structural spec: need at least two domains");
  if (phi.size() != k || eta.size() != k || psi.size() != k) {
    throw ConfigError("structural spec: phi, eta and psi need one entry per domain");
  }
  if (beta.size() != d_h) throw ConfigError("structural spec: beta must have d_h entries");
  for (std::size_t j = 0; j < k; ++j) {
    if (phi[j].rows() != d_h || phi[j].cols() != d_h) throw ConfigError("structural spec: phi shape");
    if (eta[j].rows() != d_h || eta[j].cols() != d_h) throw ConfigError("structural spec: eta shape");
    if (psi[j].size() != d_h) throw ConfigError("structural spec: psi shape");
    // latent laws have identity covariance, so phi^T E[UU^T] phi = phi^T phi
    const double lo = min_eigenvalue_symmetric(matmul_tn(phi[j], phi[j]));
    if (!(lo > 1e-12)) {
      throw ConfigError("structural spec: phi^T E[UU^T] phi is singular for domain " + std::to_string(j) +
                        " (min eigenvalue " + std::to_string(lo) + ")");
    }
  }
  if (n == 0) throw ConfigError("structural spec: n must be positive");
}

StructuralSpec StructuralSpec::default_spec() {
  StructuralSpec s;
  s.d_h = 2;
  s.k = 2;
  s.phi = {Matrix{{1.0, 0.3}, {0.2, 1.0}}, Matrix{{0.8, -0.3}, {0.4, 1.1}}};
  s.eta = {Matrix{{1.0, 0.5}, {0.0, 0.8}}, Matrix{{0.7, 0.0}, {0.3, 0.9}}};
  s.beta = {1.0, -0.5};
  s.psi = {{0.8, 0.6}, {-0.4, 0.5}};
  return s;
}

StructuralSpec StructuralSpec::degenerate_spec() {
  StructuralSpec s = default_spec();
  for (auto& e : s.eta) e = Matrix(s.d_h, s.d_h);
  for (auto& p : s.psi) p.assign(s.d_h, 0.0);
  return s;
}

StructuralSample gen_structural(const StructuralSpec& spec, Rng& rng) { return gen_structural(spec, spec.n, rng); }

StructuralSample gen_structural(const StructuralSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n == 0) throw ConfigError("gen_structural: n must be positive");
  // stream 0 draws U; stream j + 1 draws L^j, so domains are independent of
  // each other and of the order they are generated in.
  StructuralSample out;
  Rng u_rng = rng.derive(0);
  out.u = draw_matrix(n, spec.d_h, spec.dist_u, u_rng);
  for (std::size_t j = 0; j < spec.k; ++j) {
    Rng l_rng = rng.derive(j + 1);
    StructuralDomain dom;
    dom.latent = draw_matrix(n, spec.d_h, spec.dist_l, l_rng);
    // row form: h_i = U_i phi + L_i eta  ==  (phi^T u_i + eta^T l_i)^T
    dom.h = add(matmul(out.u, spec.phi[j]), matmul(dom.latent, spec.eta[j]));
    dom.y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      dom.y[i] = dot(spec.beta, dom.h.row(i)) + dot(spec.psi[j], dom.latent.row(i));
    }
    out.domains.push_back(std::move(dom));
  }
  // advance the parent so consecutive calls give fresh data
  rng.next_u64();
  return out;
}

void ToyDomainSpec::validate() const {
  if (classes < 2) throw ConfigError("toy spec: need at least two classes");
  if (input_dim < 2) throw ConfigError("toy spec: input_dim must be at least 2");
  if (n < 1) throw ConfigError("toy spec: n must be positive");
  if (domains.empty()) throw ConfigError("toy spec: no domains configured");
  if (!(cluster_std > 0.0)) throw ConfigError("toy spec: cluster_std must be positive");
  if (!(label_noise >= 0.0 && label_noise < 1.0)) throw ConfigError("toy spec: label_noise must lie in [0, 1)");
}

ToyDomainSpec ToyDomainSpec::rotated_blobs() {
  ToyDomainSpec s;
  s.classes = 4;
  s.input_dim = 2;
  s.n = 400;
  s.radius = 3.0;
  s.cluster_std = 0.6;
  s.domains = {DomainTransform{0.0}, DomainTransform{30.0}, DomainTransform{50.0}};
  return s;
}

std::vector<DomainDataset> gen_toy_domains(const ToyDomainSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<DomainDataset> out;
  for (std::size_t j = 0; j < spec.domains.size(); ++j) {
    Rng dr = rng.derive(j);
    const DomainTransform& t = spec.domains[j];
    const double theta = t.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    Matrix x(spec.n, spec.input_dim);
    std::vector<std::size_t> labels(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const std::size_t cls = i % spec.classes;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(spec.classes);
      const double px = (spec.radius * std::cos(angle) + spec.cluster_std * dr.normal()) * t.scale_x;
      const double py = (spec.radius * std::sin(angle) + spec.cluster_std * dr.normal()) * t.scale_y;
      x(i, 0) = cs * px - sn * py + t.shift_x;
      x(i, 1) = sn * px + cs * py + t.shift_y;
      for (std::size_t d = 2; d < spec.input_dim; ++d) x(i, d) = spec.cluster_std * dr.normal();
      std::size_t label = cls;
      if (spec.label_noise > 0.0 && dr.uniform() < spec.label_noise) {
        label = (cls + 1 + dr.below(spec.classes - 1)) % spec.classes;
      }
      labels[i] = label;
    }
    out.emplace_back(j, std::move(x), std::move(labels), "domain_" + std::to_string(j));
  }
  rng.next_u64();
  return out;
}

}  // namespace dsbf
