#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "magdiff/diffusion.hpp"

namespace magdiff {

using FeatureFn = std::function<std::vector<double>(const Tensor<float>&)>;

/// Default frame feature: Rec. 601 luma, area-averaged to 8×8, flattened.
std::vector<double> grayscale_features(const Tensor<float>& frame);

/// Cosine similarity; two zero vectors count as identical, one zero vector
/// as orthogonal.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Mean cosine similarity of features over all unordered frame pairs.
/// Throws ValueError for fewer than two frames.
double frame_consistency(const VideoClip& clip, const FeatureFn& features = grayscale_features);
double frame_consistency(const std::vector<std::vector<double>>& features);

struct SubjectFidelity {
  double mse = 0;  // over reference-mask pixels and all channels
  double iou = 0;  // reference mask vs generated-subject mask
};

/// Pixels whose color differs from `background` by more than `threshold`
/// in any channel → [1,H,W] binary mask.
Tensor<float> foreground_mask(const Tensor<float>& frame, const std::array<float, 3>& background,
                              float threshold = 0.1f);

/// Compares a generated frame with the reference subject inside the
/// reference mask. Throws ValueError on an empty mask.
SubjectFidelity subject_fidelity(const Tensor<float>& generated, const SubjectPrompt& reference,
                                 const std::array<float, 3>& background, float threshold = 0.1f);

/// Mean over frames of the squared error inside each frame's mask.
double masked_clip_mse(const VideoClip& generated, const VideoClip& reference);

struct EvalThresholds {
  std::optional<double> min_frame_consistency;
  std::optional<double> max_subject_mse;
  std::optional<double> max_edit_mse;
};

struct ClipEval {
  std::string clip;
  double frame_consistency = 0;
  double subject_mse = 0;
  double subject_iou = 0;
  double edit_mse = 0;
};

struct EvalReport {
  std::vector<ClipEval> clips;
  ClipEval aggregate;  // arithmetic means, clip = "mean"
  nlohmann::json config;
  std::vector<std::string> violations;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

struct EvalClip {
  std::string name;
  VideoClip clip;
};

/// Generates from each clip's frame-0 subject with its caption, edits each
/// clip with its own caption, and scores both. Throws ValueError on an
/// empty set.
EvalReport eval_report(const std::vector<EvalClip>& clips, const InferenceContext& ctx, const SamplerConfig& sampler,
                       const EvalThresholds& thresholds, const nlohmann::json& config = nlohmann::json::object());

/// Fills `violations` from the aggregate; returns true when none.
bool check_thresholds(EvalReport& report, const EvalThresholds& thresholds);

}  // namespace magdiff
