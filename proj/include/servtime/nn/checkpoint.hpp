#pragma once

#include <map>
#include <string>
#include <vector>

#include "servtime/nn/tape.hpp"

namespace servtime::nn {

// Portable binary container of named tensors plus a string metadata block.
// Save -> load round-trips values bit-exactly.
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<ParamTensor> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const ParamTensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  // Copies values into an existing tensor set by name; throws when a name
  // or shape does not match.
  void restore_into(std::vector<ParamTensor*> params) const;

  std::string meta(const std::string& key) const;
  double meta_num(const std::string& key) const;
};

}  // namespace servtime::nn
