#include "swisenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace swisenet {

namespace {

constexpr char kMagic[4] = {'S', 'W', 'S', 'E'};
constexpr char kCacheMagic[4] = {'S', 'W', 'S', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void table(const std::vector<NamedArray>& arrays) {
    u32(static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
      str(a.name);
      u32(static_cast<std::uint32_t>(a.shape.rank()));
      for (auto d : a.shape.dims()) u32(static_cast<std::uint32_t>(d));
      for (float v : a.values) u32(std::bit_cast<std::uint32_t>(v));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::Truncated, "truncated payload at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<NamedArray> table() {
    const std::uint32_t count = u32();
    std::vector<NamedArray> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedArray a;
      a.name = str();
      const std::uint32_t rank = u32();
      if (rank < 1 || rank > 4) {
        throw CheckpointError(CheckpointErrorKind::Malformed, "array '" + a.name + "' has rank " + std::to_string(rank));
      }
      std::vector<std::int64_t> dims;
      for (std::uint32_t r = 0; r < rank; ++r) {
        const std::uint32_t d = u32();
        if (d == 0) throw CheckpointError(CheckpointErrorKind::Malformed, "array '" + a.name + "' has a zero dim");
        dims.push_back(d);
      }
      a.shape = Shape(std::move(dims));
      const auto n = static_cast<std::size_t>(a.shape.numel());
      need(n * 4);
      a.values.resize(n);
      for (auto& v : a.values) v = std::bit_cast<float>(u32());
      out.push_back(std::move(a));
    }
    return out;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so a crash never leaves a half-written file in place.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(ckpt.format_version);
  w.u64(ckpt.config_digest);
  w.str(ckpt.config_text);
  w.u32(ckpt.epoch);
  w.u64(ckpt.seed);
  w.table(ckpt.arrays);
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    w.str(ckpt.optimizer->kind);
    w.u64(ckpt.optimizer->step);
    w.table(ckpt.optimizer->slots);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::NotACheckpoint, "not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.need(4);
  for (int i = 0; i < 4; ++i) r.u8();
  Checkpoint c;
  c.format_version = r.u32();
  if (c.format_version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                          "checkpoint format version " + std::to_string(c.format_version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  c.config_digest = r.u64();
  c.config_text = r.str();
  c.epoch = r.u32();
  c.seed = r.u64();
  c.arrays = r.table();
  if (r.u8()) {
    OptimizerState s;
    s.kind = r.str();
    s.step = r.u64();
    s.slots = r.table();
    c.optimizer = std::move(s);
  }
  if (!r.done()) {
    throw CheckpointError(CheckpointErrorKind::Malformed,
                          "trailing bytes after checkpoint payload at byte " + std::to_string(r.pos()));
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  spill(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(slurp(path)); }

std::vector<NamedArray> export_parameters(const ParameterStore<float>& store) {
  std::vector<NamedArray> out;
  for (const auto* p : store.all()) out.push_back({p->name, p->value.shape(), p->value.vec()});
  return out;
}

void import_parameters(ParameterStore<float>& store, const std::vector<NamedArray>& arrays) {
  if (arrays.size() != store.size()) {
    throw CheckpointError(CheckpointErrorKind::Malformed, "checkpoint holds " + std::to_string(arrays.size()) +
                                                              " arrays, model has " + std::to_string(store.size()));
  }
  for (const auto& a : arrays) {
    auto* p = store.find(a.name);
    if (!p) throw CheckpointError(CheckpointErrorKind::Malformed, "unexpected array '" + a.name + "'");
    if (p->value.shape() != a.shape) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "array '" + a.name + "' has shape " + a.shape.str() +
                                                                ", model expects " + p->value.shape().str());
    }
    p->value = Tensor<float>(a.shape, a.values);
  }
}

void save_checkpoint(const SwiSENet<float>& model, const std::filesystem::path& path, std::uint32_t epoch,
                     const OptimizerState* optimizer) {
  Checkpoint c;
  c.config_text = model.config().canonical();
  c.config_digest = model.config().digest();
  c.epoch = epoch;
  c.seed = model.config().seed;
  c.arrays = export_parameters(model.params());
  if (optimizer) c.optimizer = *optimizer;
  write_checkpoint(path, c);
}

SwiSENet<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected, Checkpoint* meta) {
  Checkpoint c = read_checkpoint(path);
  ModelConfig cfg;
  try {
    cfg = ModelConfig::parse(c.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::Malformed, std::string("stored model config: ") + e.what());
  }
  cfg.seed = c.seed;
  if (cfg.digest() != c.config_digest) {
    throw CheckpointError(CheckpointErrorKind::DigestMismatch, "stored config does not match its digest");
  }
  if (expected && expected->digest() != c.config_digest) {
    throw CheckpointError(CheckpointErrorKind::DigestMismatch,
                          "config digest mismatch: checkpoint was built for a different architecture");
  }
  SwiSENet<float> model(cfg);
  import_parameters(model.params(), c.arrays);
  if (meta) *meta = std::move(c);
  return model;
}

void write_tensor_cache(const std::filesystem::path& path, std::uint64_t key, const NamedArray& array) {
  Writer w;
  w.bytes(kCacheMagic, 4);
  w.u32(kCacheVersion);
  w.u64(key);
  w.table({array});
  spill(path, w.take());
}

std::optional<NamedArray> read_tensor_cache(const std::filesystem::path& path, std::uint64_t key) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto bytes = slurp(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0) return std::nullopt;
    Reader r(bytes);
    for (int i = 0; i < 4; ++i) r.u8();
    if (r.u32() != kCacheVersion || r.u64() != key) return std::nullopt;
    auto arrays = r.table();
    if (arrays.size() != 1 || !r.done()) return std::nullopt;
    return std::move(arrays.front());
  } catch (const DataError&) {
    return std::nullopt;
  }
}

}  // namespace swisenet
