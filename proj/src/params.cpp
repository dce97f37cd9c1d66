#include "eventformer/params.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace evf {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'F', 'C'};
constexpr uint32_t kVersion = 1;

// Checkpoints are little-endian on disk; this code assumes a little-endian
// host (checked once at save/load).
void require_little_endian() {
  const uint16_t probe = 1;
  if (*reinterpret_cast<const uint8_t*>(&probe) != 1)
    throw std::runtime_error("checkpoint io requires a little-endian host");
}

struct Fnv1a {
  uint64_t h = 1469598103934665603ULL;
  void feed(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  }
  void raw(const void* data, size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash_.feed(data, n);
  }
  template <typename T>
  void scalar(T v) {
    raw(&v, sizeof(T));
  }
  void str(const std::string& s) {
    scalar<uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void finish() {
    const uint64_t digest = hash_.h;
    out_.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
  Fnv1a hash_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path);
  }
  void raw(void* data, size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error(path_ + ": truncated checkpoint");
    hash_.feed(data, n);
  }
  template <typename T>
  T scalar() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  std::string str(uint64_t cap = 1ULL << 32) {
    const uint64_t n = scalar<uint64_t>();
    if (n > cap) throw std::runtime_error(path_ + ": implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void verify_checksum() {
    const uint64_t expect = hash_.h;
    uint64_t stored;
    in_.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (static_cast<size_t>(in_.gcount()) != sizeof(stored) || stored != expect)
      throw std::runtime_error(path_ + ": checksum mismatch (corrupt checkpoint)");
  }

 private:
  std::string path_;
  std::ifstream in_;
  Fnv1a hash_;
};

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return items_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  require_little_endian();
  Writer w(path);
  w.raw(kMagic, sizeof(kMagic));
  w.scalar<uint32_t>(kVersion);
  w.str(ck.config_json);
  w.scalar<uint64_t>(ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.scalar<uint32_t>(static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape) w.scalar<int64_t>(d);
    for (real_t x : t.v) w.scalar<double>(static_cast<double>(x));
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
  require_little_endian();
  Reader r(path);
  char magic[4];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  const uint32_t version = r.scalar<uint32_t>();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_json = r.str();
  const uint64_t count = r.scalar<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str(4096);
    const uint32_t ndim = r.scalar<uint32_t>();
    if (ndim > 8) throw std::runtime_error(path + ": implausible tensor rank");
    std::vector<int64_t> shape(ndim);
    int64_t numel = 1;
    for (auto& d : shape) {
      d = r.scalar<int64_t>();
      if (d < 0 || d > (1 << 28)) throw std::runtime_error(path + ": implausible dimension");
      numel *= d;
    }
    Tensor t = Tensor::zeros(shape);
    for (int64_t j = 0; j < numel; ++j) t.v[j] = static_cast<real_t>(r.scalar<double>());
    ck.tensors.emplace_back(name, std::move(t));
  }
  r.verify_checksum();
  return ck;
}

}  // namespace evf
