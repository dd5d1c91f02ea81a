#include "magdiff/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "magdiff/curation.hpp"

namespace magdiff {

std::vector<double> grayscale_features(const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("frame must be [3,H,W], got " + shape_str(frame.shape()));
  const std::size_t h = frame.dim(1), w = frame.dim(2), hw = h * w;
  std::vector<double> gray(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    gray[i] = 0.299 * frame.at(i) + 0.587 * frame.at(hw + i) + 0.114 * frame.at(2 * hw + i);
  }
  const auto wy = resample_weights(h, 8, ResampleMode::kArea);
  const auto wx = resample_weights(w, 8, ResampleMode::kArea);
  std::vector<double> out(64, 0.0);
  for (std::size_t oy = 0; oy < 8; ++oy)
    for (std::size_t y = 0; y < h; ++y) {
      const double a = wy[oy * h + y];
      if (a == 0) continue;
      for (std::size_t ox = 0; ox < 8; ++ox)
        for (std::size_t x = 0; x < w; ++x) out[oy * 8 + ox] += a * wx[ox * w + x] * gray[y * w + x];
    }
  return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("feature vectors differ in length");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 && bb == 0) return 1.0;
  if (aa == 0 || bb == 0) return 0.0;
  // sqrt(aa * aa) == aa in IEEE arithmetic, so identical vectors give exactly 1
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double frame_consistency(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw ValueError("frame consistency needs at least 2 frames");
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      total += cosine_similarity(features[i], features[j]);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

double frame_consistency(const VideoClip& clip, const FeatureFn& features) {
  std::vector<std::vector<double>> f;
  for (const auto& frame : clip.frames) f.push_back(features(frame));
  return frame_consistency(f);
}

Tensor<float> foreground_mask(const Tensor<float>& frame, const std::array<float, 3>& background, float threshold) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("frame must be [3,H,W], got " + shape_str(frame.shape()));
  const std::size_t hw = frame.dim(1) * frame.dim(2);
  std::vector<float> m(hw, 0.0f);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      if (std::abs(frame.at(c * hw + i) - background[c]) > threshold) m[i] = 1.0f;
  return Tensor<float>({1, frame.dim(1), frame.dim(2)}, std::move(m));
}

SubjectFidelity subject_fidelity(const Tensor<float>& generated, const SubjectPrompt& reference,
                                 const std::array<float, 3>& background, float threshold) {
  if (generated.shape() != reference.subject_image.shape()) {
    throw ShapeError("generated frame " + shape_str(generated.shape()) + " vs reference " +
                     shape_str(reference.subject_image.shape()));
  }
  if (reference.empty()) throw ValueError("subject fidelity needs a nonempty reference mask");
  const std::size_t hw = generated.dim(1) * generated.dim(2);
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    if (reference.mask.at(i) != 1.0f) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = static_cast<double>(generated.at(c * hw + i)) - reference.subject_image.at(c * hw + i);
      se += d * d;
      ++n;
    }
  }
  auto fg = foreground_mask(generated, background, threshold);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    const bool a = reference.mask.at(i) == 1.0f, b = fg.at(i) == 1.0f;
    inter += a && b;
    uni += a || b;
  }
  return {se / static_cast<double>(n), uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0};
}

double masked_clip_mse(const VideoClip& generated, const VideoClip& reference) {
  if (generated.frame_count() != reference.frame_count() || reference.masks.size() != reference.frame_count()) {
    throw ShapeError("clips differ in frame count or lack masks");
  }
  double total = 0;
  std::size_t frames = 0;
  for (std::size_t t = 0; t < reference.frame_count(); ++t) {
    auto ref = extract_subject(reference.frames[t], reference.masks[t]);
    if (ref.empty()) continue;
    total += subject_fidelity(generated.frames[t], ref, {0, 0, 0}).mse;
    ++frames;
  }
  if (frames == 0) throw ValueError("reference clip has no subject pixels");
  return total / static_cast<double>(frames);
}

namespace {

nlohmann::json clip_json(const ClipEval& c) {
  return {{"clip", c.clip},
          {"frame_consistency", c.frame_consistency},
          {"subject_fidelity_mse", c.subject_mse},
          {"subject_iou", c.subject_iou},
          {"edit_mse", c.edit_mse}};
}

ClipEval clip_from_json(const nlohmann::json& j) {
  ClipEval c;
  c.clip = j.at("clip").get<std::string>();
  c.frame_consistency = j.at("frame_consistency").get<double>();
  c.subject_mse = j.at("subject_fidelity_mse").get<double>();
  c.subject_iou = j.at("subject_iou").get<double>();
  c.edit_mse = j.at("edit_mse").get<double>();
  return c;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& c : clips) per.push_back(clip_json(c));
  return {{"clips", per}, {"aggregate", clip_json(aggregate)}, {"config", config}, {"violations", violations}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    for (const auto& c : j.at("clips")) r.clips.push_back(clip_from_json(c));
    r.aggregate = clip_from_json(j.at("aggregate"));
    r.config = j.at("config");
    r.violations = j.at("violations").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("malformed evaluation report: ") + e.what());
  }
}

bool check_thresholds(EvalReport& report, const EvalThresholds& th) {
  report.violations.clear();
  const auto& a = report.aggregate;
  auto fmt = [](const char* name, double v, const char* op, double lim) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s %.6g %s %.6g", name, v, op, lim);
    return std::string(buf);
  };
  if (th.min_frame_consistency && !(a.frame_consistency >= *th.min_frame_consistency)) {
    report.violations.push_back(fmt("frame_consistency", a.frame_consistency, "<", *th.min_frame_consistency));
  }
  if (th.max_subject_mse && !(a.subject_mse <= *th.max_subject_mse)) {
    report.violations.push_back(fmt("subject_fidelity_mse", a.subject_mse, ">", *th.max_subject_mse));
  }
  if (th.max_edit_mse && !(a.edit_mse <= *th.max_edit_mse)) {
    report.violations.push_back(fmt("edit_mse", a.edit_mse, ">", *th.max_edit_mse));
  }
  return report.violations.empty();
}

EvalReport eval_report(const std::vector<EvalClip>& clips, const InferenceContext& ctx, const SamplerConfig& sampler,
                       const EvalThresholds& thresholds, const nlohmann::json& config) {
  if (clips.empty()) throw ValueError("evaluation set is empty");
  EvalReport report;
  report.config = config;
  for (const auto& item : clips) {
    const auto& src = item.clip;
    if (src.masks.size() != src.frame_count() || src.frames.empty()) {
      throw ValueError("evaluation clip '" + item.name + "' needs one mask per frame");
    }
    const auto& caption = src.augmented_caption.empty() ? src.caption : src.augmented_caption;
    auto subject = extract_subject(src.frames[0], src.masks[0]);
    auto gen = sample_video(ctx, subject, caption, src.frame_count(), sampler);
    auto edit = edit_video(ctx, src, caption, sampler);
    const auto fid = subject_fidelity(gen.frames[0], subject, background_color(src.frames[0], src.masks[0]));
    ClipEval c;
    c.clip = item.name;
    c.frame_consistency = frame_consistency(gen);
    c.subject_mse = fid.mse;
    c.subject_iou = fid.iou;
    c.edit_mse = masked_clip_mse(edit, src);
    report.clips.push_back(c);
  }
  auto& agg = report.aggregate;
  agg.clip = "mean";
  const double n = static_cast<double>(report.clips.size());
  for (const auto& c : report.clips) {
    agg.frame_consistency += c.frame_consistency / n;
    agg.subject_mse += c.subject_mse / n;
    agg.subject_iou += c.subject_iou / n;
    agg.edit_mse += c.edit_mse / n;
  }
  if (report.clips.size() == 1) {
    const auto name = agg.clip;
    agg = report.clips[0];
    agg.clip = name;
  }
  check_thresholds(report, thresholds);
  return report;
}

}  // namespace magdiff
