#include "servtime/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace servtime::nn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    write_str(os, k);
    write_str(os, v);
  }
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const ParamTensor& t : tensors) {
    write_str(os, t.name);
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(Scalar)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic or version: " + path);
  Checkpoint ck;
  const std::uint32_t n_meta = read_u32(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_str(is);
    ck.metadata[k] = read_str(is);
  }
  const std::uint32_t n_tensors = read_u32(is);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    ParamTensor t;
    t.name = read_str(is);
    const std::uint32_t rank = read_u32(is);
    int total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<int>(read_u32(is)));
      total *= t.shape.back();
    }
    t.values.resize(total);
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(total * sizeof(Scalar)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    t.grad = Vec::Zero(total);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

const ParamTensor& Checkpoint::get(const std::string& name) const {
  for (const ParamTensor& t : tensors)
    if (t.name == name) return t;
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const ParamTensor& t : tensors)
    if (t.name == name) return true;
  return false;
}

void Checkpoint::restore_into(std::vector<ParamTensor*> params) const {
  for (ParamTensor* p : params) {
    const ParamTensor& src = get(p->name);
    if (src.shape != p->shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "'");
    p->values = src.values;
    p->grad.setZero();
  }
}

std::string Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end())
    throw std::runtime_error("checkpoint: missing metadata key '" + key + "'");
  return it->second;
}

double Checkpoint::meta_num(const std::string& key) const {
  return std::stod(meta(key));
}

}  // namespace servtime::nn
