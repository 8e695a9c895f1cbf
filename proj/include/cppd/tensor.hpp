#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cppd {

/// 64-byte-aligned allocator. Keeping every tensor buffer on the same
/// alignment makes the vectorized kernels take identical code paths for
/// identical shapes, so repeated evaluations are bitwise equal no matter
/// what the allocator did in between.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr size_t kAlign = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(size_t n) {
    void* p = std::aligned_alloc(kAlign, ((n * sizeof(T) + kAlign - 1) / kAlign) * kAlign);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, size_t) { std::free(p); }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

/// Dense row-major tensor. The element type is f32 for training and f64 for
/// verification runs (gradient checks, oracles); everything downstream is
/// templated on it.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), T(0));
  }

  Tensor(std::vector<int> shape, const std::vector<T>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (static_cast<int64_t>(data_.size()) != numel_of(shape_))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  /// Rank-0 tensor holding one value.
  static Tensor scalar(T v) {
    Tensor t{std::vector<int>{}};
    t[0] = v;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  AlignedVec<T>& vec() { return data_; }
  const AlignedVec<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(std::initializer_list<int> idx) { return data_[static_cast<size_t>(offset(idx))]; }
  const T& at(std::initializer_list<int> idx) const {
    return data_[static_cast<size_t>(offset(idx))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// In-place reshape; element count must be preserved.
  void reshape(std::vector<int> shape) {
    if (numel_of(shape) != numel()) throw std::invalid_argument("tensor: reshape changes numel");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  int64_t offset(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw std::invalid_argument("tensor: index rank mismatch");
    int64_t off = 0;
    int i = 0;
    for (int v : idx) {
      off = off * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return off;
  }

  std::vector<int> shape_;
  AlignedVec<T> data_;
};

}  // namespace cppd
