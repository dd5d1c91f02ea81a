#include "magdiff/parameters.hpp"

#include <cmath>
#include <cstring>

namespace magdiff {

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  if (contains(name)) throw ValueError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(trainable);
  index_[name] = entries_.size();
  entries_.push_back({name, value, trainable});
  return value;
}

template <typename T>
typename ParameterStore<T>::Entry& ParameterStore<T>::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
const typename ParameterStore<T>::Entry& ParameterStore<T>::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const {
  return entry(name).tensor;
}

template <typename T>
bool ParameterStore<T>::trainable(const std::string& name) const {
  return entry(name).trainable;
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::string& name, bool on) {
  auto& e = entry(name);
  e.trainable = on;
  e.tensor.set_requires_grad(on);
  if (!on) e.tensor.zero_grad();
}

template <typename T>
void ParameterStore<T>::set_all_trainable(bool on) {
  for (auto& e : entries_) set_trainable(e.name, on);
}

template <typename T>
std::size_t ParameterStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
std::size_t ParameterStore<T>::trainable_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trainable ? e.tensor.numel() : 0;
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::uint64_t ParameterStore<T>::checksum(const std::function<bool(const Entry&)>& pick) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : entries_) {
    if (pick && !pick(e)) continue;
    mix(e.name.data(), e.name.size());
    for (auto v : e.tensor.data()) {
      const float f = static_cast<float>(v);
      mix(&f, sizeof f);
    }
  }
  return h;
}

template <typename T>
double Adam<T>::step() {
  ++t_;
  double sq = 0.0;
  for (const auto& e : store_.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (auto g : e.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  const double clip = (opts_.clip_norm > 0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (const auto& e : store_.entries()) {
    if (!e.trainable) continue;
    auto& mom = moments_[e.name];
    const std::size_t n = e.tensor.numel();
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    const auto g = e.tensor.grad();
    auto p = Tensor<T>(e.tensor).mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      mom.m[i] = opts_.beta1 * mom.m[i] + (1.0 - opts_.beta1) * gi;
      mom.v[i] = opts_.beta2 * mom.v[i] + (1.0 - opts_.beta2) * gi * gi;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
    }
  }
  store_.zero_grad();
  return norm;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace magdiff
