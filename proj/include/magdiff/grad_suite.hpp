#pragma once

#include <functional>
#include <string>
#include <vector>

#include "magdiff/grad_check.hpp"

namespace magdiff {

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
};

/// Central-difference checks over every differentiable op, the VAE
/// reconstruction loss, and the full denoiser forward + loss on a toy
/// configuration (every parameter tensor, up to opts.max_elements each).
/// `on_case` is called as each case finishes.
std::vector<GradSuiteCase> grad_check_suite(const GradCheckOptions& opts,
                                            const std::function<void(const GradSuiteCase&)>& on_case = {});

}  // namespace magdiff
