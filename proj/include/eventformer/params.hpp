#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eventformer/tensor.hpp"

namespace evf {

// Named parameter tensors in a stable registration order. Order is part of
// the contract: initialization streams and checkpoint layout both key off it.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  size_t index_of(const std::string& name) const;
  size_t size() const { return items_.size(); }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// Versioned binary container: config echo + named 64-bit tensors + checksum.
// Byte layout is documented in docs/checkpoint_format.md.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace evf
