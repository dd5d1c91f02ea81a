#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "magdiff/tensor.hpp"

namespace magdiff {

/// Named parameters in insertion order, each with a trainable flag. The
/// flag drives requires_grad, so frozen parameters never accumulate grads.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T> add(const std::string& name, Tensor<T> value, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool on);
  void set_all_trainable(bool on);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  std::size_t trainable_elements() const;

  void zero_grad();

  /// Copies values by name from another store; shapes must match and every
  /// name in this store must be present in `other`.
  template <typename U>
  void load_from(const ParameterStore<U>& other);

  /// FNV-1a over the float32 bytes of every parameter selected by `pick`.
  std::uint64_t checksum(const std::function<bool(const Entry&)>& pick = {}) const;

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
template <typename U>
void ParameterStore<T>::load_from(const ParameterStore<U>& other) {
  for (auto& e : entries_) {
    if (!other.contains(e.name)) throw ValueError("parameter '" + e.name + "' missing from source");
    const auto& src = other.at(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw ShapeError("parameter '" + e.name + "' has shape " + shape_str(e.tensor.shape()) +
                       ", source has " + shape_str(src.shape()));
    }
    auto dst = e.tensor.mutable_data();
    auto s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s[i]);
  }
}

/// Adam with bias correction. Frozen parameters are skipped entirely.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip over trainable parameters; 0 disables.
    double clip_norm = 0.0;
  };

  Adam(ParameterStore<T>& store, Options opts) : store_(store), opts_(opts) {}

  /// Applies one update from accumulated grads, then clears them. Returns
  /// the pre-clip global gradient norm.
  double step();
  std::size_t steps_taken() const { return t_; }
  void set_lr(double lr) { opts_.lr = lr; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  ParameterStore<T>& store_;
  Options opts_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace magdiff
