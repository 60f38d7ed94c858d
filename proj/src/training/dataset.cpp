#include "dsbf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dsbf/error.hpp"

namespace dsbf {

DomainDataset::DomainDataset(std::size_t domain_id, Matrix x, std::optional<std::vector<std::size_t>> labels,
                             std::string name)
    : domain_id_(domain_id), x_(std::move(x)), labels_(std::move(labels)), name_(std::move(name)) {
  if (x_.rows() == 0) throw ConfigError("dataset '" + name_ + "' has no samples");
  if (labels_ && labels_->size() != x_.rows()) {
    throw DimensionError("dataset '" + name_ + "': label count differs from sample count");
  }
}

const Matrix& DomainDataset::x() const {
  if (sealed_) throw SealedDatasetError("dataset '" + name_ + "' is sealed for evaluation only");
  return x_;
}

const std::vector<std::size_t>& DomainDataset::labels() const {
  if (sealed_) throw SealedDatasetError("dataset '" + name_ + "' is sealed for evaluation only");
  if (!labels_) throw ConfigError("dataset '" + name_ + "' has no labels");
  return *labels_;
}

std::size_t DomainDataset::label_span() const {
  if (!labels_ || labels_->empty()) return 0;
  return *std::max_element(labels_->begin(), labels_->end()) + 1;
}

DomainDataset DomainDataset::without_labels() const {
  DomainDataset d = *this;
  d.labels_.reset();
  return d;
}

DomainDataset DomainDataset::sealed() const {
  DomainDataset d = *this;
  d.sealed_ = true;
  return d;
}

DomainDataset DomainDataset::subset(std::span<const std::size_t> rows) const {
  if (sealed_) throw SealedDatasetError("dataset '" + name_ + "' is sealed for evaluation only");
  std::optional<std::vector<std::size_t>> labels;
  if (labels_) {
    labels.emplace();
    for (std::size_t r : rows) labels->push_back(labels_->at(r));
  }
  return DomainDataset(domain_id_, gather_rows(x_, rows), std::move(labels), name_);
}

void write_domain_csv(const std::filesystem::path& path, const DomainDataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const Matrix& x = dataset.x();
  out << "domain_id,label";
  for (std::size_t d = 0; d < x.cols(); ++d) out << ",feature_" << d;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out << dataset.domain_id() << ',';
    if (dataset.has_labels()) {
      out << dataset.labels()[i];
    } else {
      out << "-1";
    }
    for (std::size_t d = 0; d < x.cols(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", x(i, d));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": not a number: '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& where) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(where + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace

DomainDataset read_domain_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "domain_id" || header[1] != "label") {
    throw ConfigError(path.string() + ": header must start with domain_id,label,feature_0");
  }
  for (std::size_t d = 2; d < header.size(); ++d) {
    if (header[d] != "feature_" + std::to_string(d - 2)) {
      throw ConfigError(path.string() + ": unexpected header column '" + header[d] + "'");
    }
  }
  const std::size_t dim = header.size() - 2;
  std::vector<double> values;
  std::vector<long> labels;
  long domain = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != dim + 2) throw ConfigError(where + ": expected " + std::to_string(dim + 2) + " fields");
    const long id = parse_long(fields[0], where);
    if (id < 0) throw ConfigError(where + ": negative domain_id");
    if (domain < 0) domain = id;
    if (id != domain) throw ConfigError(where + ": file mixes domain ids");
    const long label = parse_long(fields[1], where);
    if (label < -1) throw ConfigError(where + ": label must be -1 or a class index");
    labels.push_back(label);
    for (std::size_t d = 0; d < dim; ++d) values.push_back(parse_double(fields[d + 2], where));
  }
  if (labels.empty()) throw ConfigError(path.string() + ": no samples");
  const bool any_unlabeled = std::any_of(labels.begin(), labels.end(), [](long l) { return l < 0; });
  const bool all_unlabeled = std::all_of(labels.begin(), labels.end(), [](long l) { return l < 0; });
  if (any_unlabeled && !all_unlabeled) throw ConfigError(path.string() + ": mixes labeled and unlabeled rows");
  std::optional<std::vector<std::size_t>> y;
  if (!all_unlabeled) y = std::vector<std::size_t>(labels.begin(), labels.end());
  const std::size_t n = labels.size();
  return DomainDataset(static_cast<std::size_t>(domain), Matrix(n, dim, std::move(values)), std::move(y),
                       path.stem().string());
}

}  // namespace dsbf
