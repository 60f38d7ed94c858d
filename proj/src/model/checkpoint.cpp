#include "dsbf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dsbf/error.hpp"

namespace dsbf {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'B', 'F', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool matches(const char* p, std::size_t n) {
    need(n);
    const bool ok = std::memcmp(in_.data() + pos_, p, n) == 0;
    pos_ += n;
    return ok;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IoError("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::vector<const DenseLayer*> ordered_layers(const ModelBundle& m) {
  std::vector<const DenseLayer*> out;
  for (const auto& l : m.g) out.push_back(&l);
  for (const auto& l : m.b) out.push_back(&l);
  out.push_back(&m.c);
  for (const auto* group : {&m.v, &m.a_q, &m.a_k, &m.a_v})
    for (const auto& l : *group) out.push_back(&l);
  return out;
}

DenseLayer read_layer(Reader& r) {
  const auto act = r.u8();
  if (act > 1) throw IoError("checkpoint: unknown activation code");
  const auto in = r.u64();
  const auto out = r.u64();
  if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20)) throw IoError("checkpoint: implausible layer shape");
  DenseLayer layer = DenseLayer::zeros(in, out, static_cast<Activation>(act));
  for (double& w : layer.weight.values()) w = r.f64();
  for (double& b : layer.bias) b = r.f64();
  return layer;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelBundle& model) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  const auto& d = model.dims;
  for (std::size_t v : {d.input_dim, d.hidden_dim, d.feat_dim, d.bottleneck_dim, d.classes, d.unlabeled_domains}) {
    w.u64(v);
  }
  w.u64(model.g.size());
  w.u64(model.b.size());
  const auto layers = ordered_layers(model);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const DenseLayer* l : layers) {
    w.u8(static_cast<std::uint8_t>(l->activation));
    w.u64(l->in_dim());
    w.u64(l->out_dim());
    for (double v : l->weight.values()) w.f64(v);
    for (double v : l->bias) w.f64(v);
  }
  w.f64(model.alpha);
  return w.take();
}

ModelBundle deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.matches(kMagic, sizeof(kMagic))) throw IoError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  ModelBundle m;
  m.dims.input_dim = r.u64();
  m.dims.hidden_dim = r.u64();
  m.dims.feat_dim = r.u64();
  m.dims.bottleneck_dim = r.u64();
  m.dims.classes = r.u64();
  m.dims.unlabeled_domains = r.u64();
  const auto g_count = r.u64();
  const auto b_count = r.u64();
  const auto total = r.u32();
  const auto k1 = m.dims.unlabeled_domains;
  if (total != g_count + b_count + 1 + 4 * k1) throw IoError("checkpoint: layer count mismatch");
  for (std::uint64_t i = 0; i < g_count; ++i) m.g.push_back(read_layer(r));
  for (std::uint64_t i = 0; i < b_count; ++i) m.b.push_back(read_layer(r));
  m.c = read_layer(r);
  for (auto* group : {&m.v, &m.a_q, &m.a_k, &m.a_v})
    for (std::uint64_t i = 0; i < k1; ++i) group->push_back(read_layer(r));
  m.alpha = r.f64();
  if (!r.at_end()) throw IoError("checkpoint: trailing bytes");
  try {
    m.validate();
  } catch (const Error& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace dsbf
