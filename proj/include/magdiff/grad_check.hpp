#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "magdiff/rng.hpp"
#include "magdiff/tensor.hpp"

namespace magdiff {

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-3;
  /// Differences below this are accepted regardless of relative error;
  /// covers elements whose true gradient is numerically zero.
  double abs_tol = 1e-8;
  /// Maximum elements sampled per tensor (0 = all).
  std::size_t max_elements = 64;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
  std::string summary() const;
};

/// Relative error as |a - n| / max(|a|, |n|); 0 when both are 0.
double relative_error(double analytic, double numeric);

/// Compares autodiff gradients of the scalar `loss()` with central
/// differences for each named input. `loss` must rebuild the graph from the
/// current contents of `inputs` on every call.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<std::pair<std::string, Tensor<double>>> inputs,
                           const GradCheckOptions& opts = {});

/// Single-input form: checks d sum(f(x)) / dx.
GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& opts = {});

}  // namespace magdiff
