#pragma once

#include <filesystem>
#include <vector>

#include "magdiff/tensor.hpp"

namespace magdiff {

/// Binary PPM (P6, maxval 255) ↔ [3,H,W] in [0,1]. Writing rounds to k/255.
Tensor<float> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

/// Binary PGM (P5, maxval 255) → [1,H,W] binary mask (values > 127 are 1).
Tensor<float> read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const Tensor<float>& mask);

/// Frames side by side → [3, H, W·T].
Tensor<float> contact_sheet(const std::vector<Tensor<float>>& frames);

}  // namespace magdiff
