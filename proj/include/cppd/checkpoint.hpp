#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "cppd/nn.hpp"
#include "cppd/tensor.hpp"

namespace cppd {

/// Checkpoint container format: magic "CPPD", u32 LE version, u32 LE tensor
/// count, then per tensor: u16 LE name length, UTF-8 name, u8 dtype
/// (0 = f32, 1 = f64), u8 rank, u32 LE dims, raw little-endian row-major
/// data. Files are written atomically (temp + rename).
constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  int dtype = 0;  // 0=f32, 1=f64
  std::vector<int> dims;
  std::vector<char> raw;
};

void save_checkpoint_entries(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint_entries(const std::string& path);

template <class T>
constexpr int dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;
}

template <class T>
CheckpointEntry to_entry(const std::string& name, const Tensor<T>& t) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = dtype_tag<T>();
  e.dims = t.shape();
  e.raw.resize(static_cast<size_t>(t.numel()) * sizeof(T));
  std::memcpy(e.raw.data(), t.data(), e.raw.size());
  return e;
}

template <class T>
Tensor<T> from_entry(const CheckpointEntry& e) {
  if (e.dtype != dtype_tag<T>())
    throw std::runtime_error("checkpoint: dtype mismatch for tensor '" + e.name + "'");
  Tensor<T> t(e.dims);
  if (e.raw.size() != static_cast<size_t>(t.numel()) * sizeof(T))
    throw std::runtime_error("checkpoint: size mismatch for tensor '" + e.name + "'");
  std::memcpy(t.data(), e.raw.data(), e.raw.size());
  return t;
}

template <class T>
void save_params(const std::string& path, const nn::ParamStore<T>& store) {
  std::vector<CheckpointEntry> entries;
  entries.reserve(store.items.size());
  for (const auto& [name, var] : store.items) entries.push_back(to_entry<T>(name, var->val));
  save_checkpoint_entries(path, entries);
}

/// Loads values into an existing store by name; every parameter must be
/// present with a matching shape.
template <class T>
void load_params(const std::string& path, nn::ParamStore<T>& store) {
  auto entries = load_checkpoint_entries(path);
  for (auto& [name, var] : store.items) {
    bool found = false;
    for (const auto& e : entries)
      if (e.name == name) {
        Tensor<T> t = from_entry<T>(e);
        if (!t.same_shape(var->val))
          throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file has " +
                                   t.shape_str() + ", model wants " + var->val.shape_str());
        var->val = std::move(t);
        found = true;
        break;
      }
    if (!found) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
  }
}

}  // namespace cppd
