#include "dsbf/runspec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dsbf/error.hpp"

namespace dsbf {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "out",
      // training
      "mode", "m_iters", "n_iters", "lambda", "gamma", "lr", "momentum", "weight_decay", "batch_classes",
      "per_class", "cluster_rounds", "add_cl_to_stage2", "val_fraction", "hidden_dim", "feat_dim",
      "bottleneck_dim", "alpha_jitter",
      // data files
      "data.labeled", "data.unlabeled", "data.target",
      // toy task
      "toy.classes", "toy.input_dim", "toy.n", "toy.radius", "toy.cluster_std", "toy.label_noise", "toy.rotations",
      "toy.scale_x", "toy.scale_y", "toy.shift_x", "toy.shift_y", "toy.labeled", "toy.unlabeled", "toy.target",
      // structural world
      "theory.preset", "theory.d_h", "theory.k", "theory.beta", "theory.dist_u", "theory.dist_l", "theory.n",
      "theory.n_grid", "theory.reps", "theory.labeled", "theory.unlabeled", "theory.pool",
      // lambda / gamma grid
      "sweep.lambdas", "sweep.gammas",
      "gradcheck.seeds"};
  return keys;
}

bool is_known(const std::string& key) {
  if (known_keys().count(key)) return true;
  static const std::regex per_domain(R"(theory\.(phi|eta|psi)\.[0-9]+)");
  return std::regex_match(key, per_domain);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

RunSpec RunSpec::parse(const std::string& text, const std::filesystem::path& base_dir) {
  RunSpec spec;
  spec.text_ = text;
  spec.base_dir_ = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!is_known(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (spec.values_.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    spec.values_[key] = value;
  }
  return spec;
}

RunSpec RunSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read spec file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::filesystem::path base = path.parent_path();
  if (base.empty()) base = ".";
  return parse(ss.str(), base);
}

const std::string* RunSpec::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string RunSpec::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double RunSpec::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  return v ? parse_double(key, *v) : fallback;
}

std::size_t RunSpec::get_size(const std::string& key, std::size_t fallback) const {
  const auto* v = find(key);
  return v ? static_cast<std::size_t>(parse_u64(key, *v)) : fallback;
}

std::uint64_t RunSpec::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_u64(key, *v) : fallback;
}

bool RunSpec::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + *v + "'");
}

std::vector<double> RunSpec::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split(*v, ',')) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::size_t> RunSpec::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  if (v->empty()) return out;
  for (const auto& item : split(*v, ',')) out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  return out;
}

Matrix RunSpec::get_matrix(const std::string& key, const Matrix& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(*v, ';')) {
    std::vector<double> row;
    for (const auto& item : split(r, ',')) row.push_back(parse_double(key, item));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("key '" + key + "': matrix rows have different lengths");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw ConfigError("key '" + key + "': empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::filesystem::path RunSpec::get_path(const std::string& key, const std::filesystem::path& fallback) const {
  const auto* v = find(key);
  const std::filesystem::path p = v ? std::filesystem::path(*v) : fallback;
  if (p.is_absolute()) return p;
  return base_dir_ / p;
}

TrainConfig train_config_from(const RunSpec& spec) {
  TrainConfig cfg;
  cfg.seed = spec.get_u64("seed", cfg.seed);
  cfg.mode = parse_train_mode(spec.get_string("mode", to_string(cfg.mode)));
  cfg.m_iters = spec.get_size("m_iters", cfg.m_iters);
  cfg.n_iters = spec.get_size("n_iters", cfg.n_iters);
  cfg.lambda = spec.get_double("lambda", cfg.lambda);
  cfg.gamma = spec.get_double("gamma", cfg.gamma);
  cfg.sgd.learning_rate = spec.get_double("lr", cfg.sgd.learning_rate);
  cfg.sgd.momentum = spec.get_double("momentum", cfg.sgd.momentum);
  cfg.sgd.weight_decay = spec.get_double("weight_decay", cfg.sgd.weight_decay);
  cfg.batch_classes = spec.get_size("batch_classes", cfg.batch_classes);
  cfg.per_class = spec.get_size("per_class", cfg.per_class);
  cfg.cluster_rounds = spec.get_size("cluster_rounds", cfg.cluster_rounds);
  cfg.add_cl_to_stage2 = spec.get_bool("add_cl_to_stage2", cfg.add_cl_to_stage2);
  cfg.val_fraction = spec.get_double("val_fraction", cfg.val_fraction);
  cfg.alpha_jitter = spec.get_double("alpha_jitter", cfg.alpha_jitter);
  cfg.dims.hidden_dim = spec.get_size("hidden_dim", cfg.dims.hidden_dim);
  cfg.dims.feat_dim = spec.get_size("feat_dim", cfg.dims.feat_dim);
  cfg.dims.bottleneck_dim = spec.get_size("bottleneck_dim", cfg.dims.bottleneck_dim);
  cfg.validate();
  return cfg;
}

ToyDomainSpec toy_spec_from(const RunSpec& spec) {
  ToyDomainSpec t = ToyDomainSpec::rotated_blobs();
  t.classes = spec.get_size("toy.classes", t.classes);
  t.input_dim = spec.get_size("toy.input_dim", t.input_dim);
  t.n = spec.get_size("toy.n", t.n);
  t.radius = spec.get_double("toy.radius", t.radius);
  t.cluster_std = spec.get_double("toy.cluster_std", t.cluster_std);
  t.label_noise = spec.get_double("toy.label_noise", t.label_noise);
  std::vector<double> rot;
  for (const auto& d : t.domains) rot.push_back(d.rotation_deg);
  rot = spec.get_doubles("toy.rotations", rot);
  const auto per_domain = [&](const std::string& key, double fallback) {
    std::vector<double> v = spec.get_doubles(key, std::vector<double>(rot.size(), fallback));
    if (v.size() != rot.size()) throw ConfigError("key '" + key + "' needs one entry per domain (see toy.rotations)");
    return v;
  };
  const auto sx = per_domain("toy.scale_x", 1.0);
  const auto sy = per_domain("toy.scale_y", 1.0);
  const auto tx = per_domain("toy.shift_x", 0.0);
  const auto ty = per_domain("toy.shift_y", 0.0);
  t.domains.clear();
  for (std::size_t j = 0; j < rot.size(); ++j) t.domains.push_back({rot[j], sx[j], sy[j], tx[j], ty[j]});
  t.validate();
  return t;
}

StructuralSpec structural_spec_from(const RunSpec& spec) {
  const std::string preset = spec.get_string("theory.preset", "default");
  StructuralSpec s;
  if (preset == "default") {
    s = StructuralSpec::default_spec();
  } else if (preset == "degenerate") {
    s = StructuralSpec::degenerate_spec();
  } else {
    throw ConfigError("key 'theory.preset': unknown preset '" + preset + "' (default|degenerate)");
  }
  const std::size_t d = spec.get_size("theory.d_h", s.d_h);
  const std::size_t k = spec.get_size("theory.k", s.k);
  if (d != s.d_h || k != s.k) {
    // a different shape starts from nothing; every block must be given
    s.d_h = d;
    s.k = k;
    s.phi.assign(k, Matrix());
    s.eta.assign(k, Matrix());
    s.psi.assign(k, Vector());
    s.beta.clear();
  }
  s.beta = spec.get_doubles("theory.beta", s.beta);
  for (std::size_t j = 0; j < k; ++j) {
    const std::string suffix = "." + std::to_string(j);
    s.phi[j] = spec.get_matrix("theory.phi" + suffix, s.phi[j]);
    s.eta[j] = spec.get_matrix("theory.eta" + suffix, s.eta[j]);
    s.psi[j] = spec.get_doubles("theory.psi" + suffix, s.psi[j]);
  }
  s.dist_u = parse_latent_dist(spec.get_string("theory.dist_u", to_string(s.dist_u)));
  s.dist_l = parse_latent_dist(spec.get_string("theory.dist_l", to_string(s.dist_l)));
  s.n = spec.get_size("theory.n", s.n);
  s.validate();
  return s;
}

TheoryPlan theory_plan_from(const RunSpec& spec) {
  TheoryPlan plan;
  plan.spec = structural_spec_from(spec);
  plan.n_grid = spec.get_sizes("theory.n_grid", plan.n_grid);
  plan.reps = spec.get_size("theory.reps", plan.reps);
  plan.options.labeled_domain = spec.get_size("theory.labeled", plan.options.labeled_domain);
  plan.options.unlabeled_domains = spec.get_sizes("theory.unlabeled", plan.options.unlabeled_domains);
  plan.options.pool_unlabeled = spec.get_bool("theory.pool", plan.options.pool_unlabeled);
  return plan;
}

ToyRoles toy_roles_from(const RunSpec& spec, std::size_t domain_count) {
  ToyRoles r;
  r.labeled = spec.get_size("toy.labeled", 0);
  r.target = spec.get_size("toy.target", domain_count - 1);
  std::vector<std::size_t> fallback;
  for (std::size_t j = 0; j < domain_count; ++j) {
    if (j != r.labeled && j != r.target) fallback.push_back(j);
  }
  r.unlabeled = spec.get_sizes("toy.unlabeled", fallback);
  std::set<std::size_t> seen{r.labeled};
  if (r.labeled >= domain_count || r.target >= domain_count) throw ConfigError("toy roles: domain index out of range");
  for (std::size_t u : r.unlabeled) {
    if (u >= domain_count) throw ConfigError("toy roles: domain index out of range");
    if (!seen.insert(u).second) throw ConfigError("toy roles: domain " + std::to_string(u) + " used twice");
  }
  if (seen.count(r.target)) throw ConfigError("toy roles: the target must not also be a source");
  return r;
}

ExperimentData experiment_data_from(const RunSpec& spec, std::uint64_t seed) {
  const bool from_files = spec.has("data.labeled") || spec.has("data.unlabeled") || spec.has("data.target");
  ExperimentData data;
  if (from_files) {
    if (!spec.has("data.labeled") || !spec.has("data.target")) {
      throw ConfigError("data.labeled and data.target are both required when reading datasets from files");
    }
    data.labeled = read_domain_csv(spec.get_path("data.labeled", ""));
    data.target = read_domain_csv(spec.get_path("data.target", ""));
    const std::string list = spec.get_string("data.unlabeled", "");
    if (!list.empty()) {
      for (const auto& item : split(list, ',')) {
        const std::filesystem::path p(item);
        data.unlabeled.push_back(read_domain_csv(p.is_absolute() ? p : spec.base_dir() / p));
      }
    }
    return data;
  }
  const ToyDomainSpec toy = toy_spec_from(spec);
  Rng rng = Rng(seed).derive(7);
  std::vector<DomainDataset> domains = gen_toy_domains(toy, rng);
  const ToyRoles roles = toy_roles_from(spec, domains.size());
  data.labeled = domains[roles.labeled];
  for (std::size_t u : roles.unlabeled) data.unlabeled.push_back(domains[u]);
  data.target = domains[roles.target];
  return data;
}

std::string toy_spec_json(const ToyDomainSpec& spec, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["classes"] = spec.classes;
  j["input_dim"] = spec.input_dim;
  j["n"] = spec.n;
  j["radius"] = spec.radius;
  j["cluster_std"] = spec.cluster_std;
  j["label_noise"] = spec.label_noise;
  nlohmann::ordered_json doms = nlohmann::ordered_json::array();
  for (const auto& d : spec.domains) {
    doms.push_back({{"rotation_deg", d.rotation_deg},
                    {"scale_x", d.scale_x},
                    {"scale_y", d.scale_y},
                    {"shift_x", d.shift_x},
                    {"shift_y", d.shift_y}});
  }
  j["domains"] = doms;
  return j.dump(2) + "\n";
}

}  // namespace dsbf
