#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "magdiff/rng.hpp"
#include "magdiff/tensor.hpp"

namespace magdiff {

/// One training/evaluation record: frames [3,H,W] in [0,1] and binary
/// subject masks [1,H,W], one per frame.
struct VideoClip {
  std::vector<Tensor<float>> frames;
  std::vector<Tensor<float>> masks;
  std::string caption;
  std::string subject_label;
  std::string augmented_caption;
  double fps = 8.0;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].dim(1); }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].dim(2); }
  double duration_seconds() const { return static_cast<double>(frame_count()) / fps; }

  /// Throws ShapeError unless frames/masks are paired and uniformly shaped.
  void validate() const;
};

enum class SpriteShape { kSquare, kCircle, kTriangle };
enum class Motion { kLeft, kRight, kUp, kDown, kStatic };

struct PaletteColor {
  const char* name;
  std::array<float, 3> rgb;
};

/// The six sprite colors.
const std::array<PaletteColor, 6>& sprite_palette();
/// Background base colors; each differs from every sprite color by more
/// than 0.1 in at least one channel.
const std::array<std::array<float, 3>, 4>& background_palette();

const char* shape_name(SpriteShape s);
const char* motion_name(Motion m);
SpriteShape parse_shape(const std::string& s);
Motion parse_motion(const std::string& s);

struct SpriteSpec {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t frames = 8;
  double fps = 8.0;
  SpriteShape shape = SpriteShape::kSquare;
  std::size_t color = 0;  // index into sprite_palette()
  Motion motion = Motion::kRight;
  std::size_t sprite_size = 10;
  std::size_t step = 2;  // pixels per frame
  std::size_t background = 0;
  /// Background texture amplitude; kept below the 0.1 background threshold.
  float texture_amplitude = 0.03f;
};

/// Picks shape, color, motion, sprite size and background from `rng`,
/// keeping the geometry fields of `base`.
SpriteSpec random_sprite_spec(Rng& rng, const SpriteSpec& base);

/// Renders a sprite over a textured background. Masks are the exact sprite
/// footprint; pixel values are quantized to k/255 so the on-disk form is
/// lossless. Caption: "a <color> <shape> moves <direction>" ("... stays
/// still" for static motion); subject_label "<color> <shape>".
VideoClip gen_synthetic_clip(Rng& rng, const SpriteSpec& spec);

/// Binary pixel footprint of the sprite at frame t, row-major [H*W].
std::vector<std::uint8_t> sprite_footprint(const SpriteSpec& spec, std::size_t x0, std::size_t y0);

/// Mean color of non-subject pixels of a frame (the background estimate used
/// by evaluation).
std::array<float, 3> background_color(const Tensor<float>& frame, const Tensor<float>& mask);

// ---- on-disk layout -----------------------------------------------------------
//
// <clip_dir>/meta.json   {width, height, frames, fps, caption, subject_label,
//                         augmented_caption}
// <clip_dir>/frames.bin  frame-major, row-major, interleaved RGB, uint8
// <clip_dir>/masks.bin   frame-major, row-major, one byte per pixel, 0 or 255

void write_clip(const std::filesystem::path& dir, const VideoClip& clip);
VideoClip read_clip(const std::filesystem::path& dir);

/// Reads every clip listed in `<corpus>/manifest.json`.
std::vector<VideoClip> read_corpus(const std::filesystem::path& corpus_dir);
std::vector<std::string> read_manifest_clips(const std::filesystem::path& corpus_dir);

/// Center crop of every frame and mask to size × size (no-op at native size).
VideoClip center_crop(const VideoClip& clip, std::size_t size);

}  // namespace magdiff
