// fedlab/tensor.hpp - flat named tensors and hashing.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab {

// Dense row-major float tensor. Images use {C,H,W}, batches {N,C,H,W},
// matrices {rows,cols}.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.0f) {}

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dim");
      n *= std::size_t(d);
    }
    return n;
  }

  std::size_t numel() const { return v.size(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// One entry of a model's parameter list or of a ClientUpdate. Order matters:
// flattening walks entries in definition order.
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> v;
  std::size_t numel() const { return v.size(); }
};

using TensorMap = std::vector<NamedTensor>;

inline const NamedTensor* find_tensor(const TensorMap& m, const std::string& name) {
  for (const auto& t : m)
    if (t.name == name) return &t;
  return nullptr;
}

inline std::size_t total_numel(const TensorMap& m) {
  std::size_t n = 0;
  for (const auto& t : m) n += t.numel();
  return n;
}

inline double l2_norm(const TensorMap& m) {
  double s = 0.0;
  for (const auto& t : m)
    for (float x : t.v) s += double(x) * double(x);
  return std::sqrt(s);
}

// ===== FNV-1a 64 ==============================================================
// Stable content hashing for determinism audits (not cryptographic).

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Hash of names, shapes and raw float bytes, in order.
inline std::uint64_t hash_tensors(const TensorMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : m) {
    h = fnv1a64(t.name, h);
    for (int d : t.shape) h = fnv1a64(&d, sizeof d, h);
    h = fnv1a64(t.v.data(), t.v.size() * sizeof(float), h);
  }
  return h;
}

// Hash of the layout only (names, shapes, element counts). Two updates with
// identical architecture hash are indistinguishable structurally.
inline std::uint64_t hash_architecture(const TensorMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : m) {
    h = fnv1a64(t.name, h);
    for (int d : t.shape) h = fnv1a64(&d, sizeof d, h);
    std::size_t n = t.numel();
    h = fnv1a64(&n, sizeof n, h);
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace fedlab
