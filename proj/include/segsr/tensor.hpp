#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "segsr/errors.hpp"

namespace segsr {

// Dense row-major tensor, value semantics. Feature maps are [C,H,W],
// conv weights [Co,Ci,Kh,Kw], vectors [N]. No batch dimension: batching
// happens by running independent samples (possibly in parallel).
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(size_t(numel_of(shape)), T(0)) {}
  Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    require(int64_t(v.size()) == numel_of(shape), "tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      require(d >= 0, "negative tensor dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  int64_t numel() const { return int64_t(v.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T& operator[](int64_t i) { return v[size_t(i)]; }
  const T& operator[](int64_t i) const { return v[size_t(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
    return out;
  }
};

template <class T>
inline std::string shape_str(const Tensor<T>& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Integer field for masks / labels, [H,W].
struct IntField {
  int h = 0, w = 0;
  std::vector<int32_t> v;

  IntField() = default;
  IntField(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * size_t(w_), 0) {}

  int32_t& at(int y, int x) { return v[size_t(y) * w + x]; }
  int32_t at(int y, int x) const { return v[size_t(y) * w + x]; }
  int64_t numel() const { return int64_t(v.size()); }
  bool operator==(const IntField& o) const { return h == o.h && w == o.w && v == o.v; }
};

}  // namespace segsr
