#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "magdiff/ops.hpp"
#include "magdiff/parameters.hpp"
#include "magdiff/rng.hpp"

namespace magdiff {

enum class Init { kHe, kFanIn, kZero };

template <typename T>
Tensor<T> init_tensor(const Shape& shape, std::size_t fan_in, Init init, Rng& rng) {
  if (init == Init::kZero) return Tensor<T>::zeros(shape);
  const double std = init == Init::kHe ? std::sqrt(2.0 / static_cast<double>(fan_in))
                                       : 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor<T>(shape, rng.normal_vector<T>(shape_numel(shape), std));
}

template <typename T>
struct Conv {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  ConvOptions opts;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv(x, weight, bias, opts); }
};

/// Registers `<name>.weight` [cout, cin, *kernel] and `<name>.bias` [cout].
template <typename T>
Conv<T> make_conv(ParameterStore<T>& store, const std::string& name, std::size_t cout, std::size_t cin,
                  const std::vector<std::size_t>& kernel, Rng& rng, std::vector<std::size_t> stride = {},
                  std::vector<std::size_t> padding = {}, Init init = Init::kHe, bool with_bias = true) {
  Shape wshape{cout, cin};
  std::size_t fan_in = cin;
  for (auto k : kernel) {
    wshape.push_back(k);
    fan_in *= k;
  }
  Conv<T> c;
  c.weight = store.add(name + ".weight", init_tensor<T>(wshape, fan_in, init, rng));
  if (with_bias) c.bias = store.add(name + ".bias", Tensor<T>::zeros({cout}));
  c.opts.stride = std::move(stride);
  c.opts.padding = std::move(padding);
  return c;
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  std::optional<Tensor<T>> bias;

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x, weight);
    return bias ? add_bias(y, *bias) : y;
  }
};

template <typename T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, bool with_bias = true, Init init = Init::kFanIn) {
  Linear<T> l;
  l.weight = store.add(name + ".weight", init_tensor<T>({in, out}, in, init, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor<T>::zeros({out}));
  return l;
}

template <typename T>
struct GroupNorm {
  Tensor<T> gamma, beta;
  std::size_t groups = 1;

  Tensor<T> operator()(const Tensor<T>& x) const { return group_norm(x, groups, gamma, beta); }
};

template <typename T>
GroupNorm<T> make_group_norm(ParameterStore<T>& store, const std::string& name, std::size_t channels,
                             std::size_t groups) {
  GroupNorm<T> g;
  g.gamma = store.add(name + ".gamma", Tensor<T>::full({channels}, T(1)));
  g.beta = store.add(name + ".beta", Tensor<T>::zeros({channels}));
  g.groups = groups;
  return g;
}

}  // namespace magdiff
