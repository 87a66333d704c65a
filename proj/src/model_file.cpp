#include "asd/model_file.hpp"

#include <cstring>

#include "asd/detail/bytes.hpp"
#include "asd/error.hpp"
#include "asd/io.hpp"

namespace asd::model {

namespace {

constexpr std::string_view kMagic = "ASDMODEL";

void put_string(detail::ByteWriter& w, const std::string& s) {
  w.put_u32(static_cast<std::uint32_t>(s.size()));
  w.put_bytes(s);
}

template <typename M>
void put_values(detail::ByteWriter& w, const M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) w.put_f64(m.data()[i]);
}

void put_grads(detail::ByteWriter& w, const Gradients& g) {
  for (const auto& l : g) {
    put_values(w, l.weight);
    put_values(w, l.bias);
    put_values(w, l.gamma);
    put_values(w, l.beta);
  }
}

class Parser {
 public:
  explicit Parser(detail::ByteReader r) : r_(r) {}

  void need(std::size_t n) {
    if (!r_.has(n)) throw Error(ErrorCode::CorruptFile, "model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(r_.bytes(1)[0]);
  }
  std::uint32_t u32() {
    need(4);
    return r_.u32();
  }
  std::uint64_t u64() {
    need(8);
    return r_.u64();
  }
  double f64() {
    need(8);
    return r_.f64();
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    return std::string(r_.bytes(n));
  }
  template <typename M>
  void values(M& m, Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * 8);
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r_.f64();
  }
  template <typename V>
  void vec(V& v, Eigen::Index n) {
    need(static_cast<std::size_t>(n) * 8);
    v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = r_.f64();
  }
  std::size_t remaining() const { return r_.remaining(); }

 private:
  detail::ByteReader r_;
};

void read_grads(Parser& p, Gradients& g, const std::vector<Layer>& layers) {
  g.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i].spec;
    p.values(g[i].weight, spec.in_dim, spec.out_dim);
    p.vec(g[i].bias, spec.out_dim);
    p.vec(g[i].gamma, spec.has_bn ? spec.out_dim : 0);
    p.vec(g[i].beta, spec.has_bn ? spec.out_dim : 0);
  }
}

}  // namespace

const scoring::Threshold* ModelFile::threshold_for(scoring::Backend backend) const {
  for (const auto& t : thresholds)
    if (t.backend == backend) return &t.threshold;
  return nullptr;
}

bool ModelFile::operator==(const ModelFile& o) const {
  if (machine_type != o.machine_type || section != o.section || config_digest != o.config_digest ||
      !(state == o.state) || covariances.has_value() != o.covariances.has_value() ||
      thresholds.size() != o.thresholds.size())
    return false;
  if (covariances && !(*covariances == *o.covariances)) return false;
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (thresholds[i].backend != o.thresholds[i].backend ||
        thresholds[i].threshold.value != o.thresholds[i].threshold.value ||
        thresholds[i].threshold.rule != o.thresholds[i].threshold.rule)
      return false;
  return true;
}

std::vector<char> serialize(const ModelFile& file) {
  const AutoencoderState& s = file.state;
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kModelFormatVersion);
  w.put_u32(static_cast<std::uint32_t>(s.layers.size()));
  for (const auto& l : s.layers) {
    w.put_u32(static_cast<std::uint32_t>(l.spec.in_dim));
    w.put_u32(static_cast<std::uint32_t>(l.spec.out_dim));
    w.put_bytes(std::string(1, static_cast<char>(l.spec.has_bn ? 1 : 0)));
    w.put_bytes(std::string(1, static_cast<char>(l.spec.activation == Activation::Relu ? 1 : 0)));
  }
  put_string(w, file.machine_type);
  w.put_u32(static_cast<std::uint32_t>(file.section));
  put_string(w, file.config_digest);
  w.put_u64(s.seed);
  w.put_u64(s.step);

  w.put_u32(static_cast<std::uint32_t>(s.normalizer.mean.size()));
  put_values(w, s.normalizer.mean);
  put_values(w, s.normalizer.stddev);

  for (const auto& l : s.layers) {
    put_values(w, l.weight);
    put_values(w, l.bias);
    if (l.spec.has_bn) {
      put_values(w, l.gamma);
      put_values(w, l.beta);
      put_values(w, l.running_mean);
      put_values(w, l.running_var);
    }
  }
  put_grads(w, s.adam_m);
  put_grads(w, s.adam_v);

  if (file.covariances) {
    const auto& c = *file.covariances;
    w.put_bytes(std::string(1, '\1'));
    w.put_u32(static_cast<std::uint32_t>(c.sigma_s_inv.rows()));
    w.put_f64(c.shrinkage_s);
    w.put_f64(c.shrinkage_t);
    w.put_u64(static_cast<std::uint64_t>(c.frames_s));
    w.put_u64(static_cast<std::uint64_t>(c.frames_t));
    put_values(w, c.sigma_s_inv);
    put_values(w, c.sigma_t_inv);
  } else {
    w.put_bytes(std::string(1, '\0'));
  }

  w.put_u32(static_cast<std::uint32_t>(file.thresholds.size()));
  for (const auto& t : file.thresholds) {
    w.put_bytes(std::string(1, static_cast<char>(t.backend == scoring::Backend::Mse ? 0 : 1)));
    w.put_f64(t.threshold.value);
    put_string(w, t.threshold.rule);
  }

  w.put_u32(io::crc32(w.bytes()));
  return w.bytes();
}

ModelFile deserialize(const std::vector<char>& bytes) {
  if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes.data(), kMagic.size()) != kMagic)
    throw Error(ErrorCode::CorruptFile, "not a model file (bad magic)");
  {
    detail::ByteReader head(bytes.data() + kMagic.size(), 4);
    const std::uint32_t version = head.u32();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::VersionMismatch, "model file version " + std::to_string(version) + ", expected " +
                                                  std::to_string(kModelFormatVersion));
  }
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + body, 4);
  if (tail.u32() != io::crc32(std::span<const char>(bytes.data(), body)))
    throw Error(ErrorCode::CorruptFile, "model file checksum mismatch");

  Parser p(detail::ByteReader(bytes.data(), body));
  for (std::size_t i = 0; i < kMagic.size(); ++i) p.u8();
  p.u32();

  ModelFile file;
  AutoencoderState& s = file.state;
  const std::uint32_t n_layers = p.u32();
  if (n_layers == 0 || n_layers > 1024) throw Error(ErrorCode::CorruptFile, "implausible layer count");
  std::vector<LayerSpec> specs(n_layers);
  for (auto& spec : specs) {
    spec.in_dim = static_cast<int>(p.u32());
    spec.out_dim = static_cast<int>(p.u32());
    spec.has_bn = p.u8() != 0;
    spec.activation = p.u8() != 0 ? Activation::Relu : Activation::None;
    if (spec.in_dim <= 0 || spec.out_dim <= 0) throw Error(ErrorCode::CorruptFile, "non-positive layer width");
  }
  for (std::size_t i = 1; i < specs.size(); ++i)
    if (specs[i].in_dim != specs[i - 1].out_dim) throw Error(ErrorCode::CorruptFile, "inconsistent layer chain");

  file.machine_type = p.str();
  file.section = static_cast<int>(p.u32());
  file.config_digest = p.str();
  s.seed = p.u64();
  s.step = p.u64();

  const std::uint32_t norm_dim = p.u32();
  p.vec(s.normalizer.mean, norm_dim);
  p.vec(s.normalizer.stddev, norm_dim);

  s.layers.resize(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    Layer& l = s.layers[i];
    l.spec = specs[i];
    p.values(l.weight, l.spec.in_dim, l.spec.out_dim);
    p.vec(l.bias, l.spec.out_dim);
    if (l.spec.has_bn) {
      p.vec(l.gamma, l.spec.out_dim);
      p.vec(l.beta, l.spec.out_dim);
      p.vec(l.running_mean, l.spec.out_dim);
      p.vec(l.running_var, l.spec.out_dim);
    }
  }
  read_grads(p, s.adam_m, s.layers);
  read_grads(p, s.adam_v, s.layers);

  if (p.u8() != 0) {
    scoring::DomainCovariances c;
    const std::uint32_t dim = p.u32();
    c.shrinkage_s = p.f64();
    c.shrinkage_t = p.f64();
    c.frames_s = static_cast<Eigen::Index>(p.u64());
    c.frames_t = static_cast<Eigen::Index>(p.u64());
    p.values(c.sigma_s_inv, dim, dim);
    p.values(c.sigma_t_inv, dim, dim);
    file.covariances = std::move(c);
  }

  const std::uint32_t n_thresholds = p.u32();
  for (std::uint32_t i = 0; i < n_thresholds; ++i) {
    BackendThreshold t;
    t.backend = p.u8() == 0 ? scoring::Backend::Mse : scoring::Backend::SelectiveMahalanobis;
    t.threshold.value = p.f64();
    t.threshold.rule = p.str();
    file.thresholds.push_back(std::move(t));
  }
  if (p.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes in model file");
  return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize(file));
}

ModelFile load_model(const std::filesystem::path& path) {
  try {
    return deserialize(io::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace asd::model
