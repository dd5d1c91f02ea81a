#include "magdiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "magdiff/ops.hpp"

namespace magdiff {

double relative_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << entries.size() << " elements checked, " << failures << " failures, max rel error "
     << max_rel_error;
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<std::pair<std::string, Tensor<double>>> inputs,
                           const GradCheckOptions& opts) {
  for (auto& [name, t] : inputs) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  loss().backward();

  GradCheckReport report;
  Rng rng(opts.seed);
  NoGradGuard no_grad;
  for (auto& [name, t] : inputs) {
    const auto analytic = t.grad();
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_elements != 0 && idx.size() > opts.max_elements) {
      rng.shuffle(idx);
      idx.resize(opts.max_elements);
      std::sort(idx.begin(), idx.end());
    }
    auto data = t.mutable_data();
    for (auto i : idx) {
      const double orig = data[i];
      data[i] = orig + opts.step;
      const double plus = loss().item();
      data[i] = orig - opts.step;
      const double minus = loss().item();
      data[i] = orig;
      GradCheckEntry e;
      e.tensor = name;
      e.index = i;
      e.analytic = analytic[i];
      e.numeric = (plus - minus) / (2.0 * opts.step);
      e.rel_error = relative_error(e.analytic, e.numeric);
      e.pass = e.rel_error <= opts.rel_tol || std::abs(e.analytic - e.numeric) <= opts.abs_tol;
      if (std::abs(e.analytic - e.numeric) > opts.abs_tol) {
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      }
      if (!e.pass) ++report.failures;
      report.entries.push_back(std::move(e));
    }
    t.zero_grad();
  }
  return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& opts) {
  return grad_check([&] { return sum(f(x)); }, {{"x", x}}, opts);
}

}  // namespace magdiff
