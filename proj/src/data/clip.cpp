#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "magdiff/data.hpp"

namespace magdiff {

using json = nlohmann::json;
namespace fs = std::filesystem;

void VideoClip::validate() const {
  if (frames.empty()) throw ShapeError("clip has no frames");
  if (frames.size() != masks.size()) {
    throw ShapeError("clip has " + std::to_string(frames.size()) + " frames but " + std::to_string(masks.size()) +
                     " masks");
  }
  const Shape fs0 = frames[0].shape();
  if (fs0.size() != 3 || fs0[0] != 3) throw ShapeError("frames must be [3,H,W], got " + shape_str(fs0));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].shape() != fs0) throw ShapeError("frame " + std::to_string(t) + " shape differs from frame 0");
    if (masks[t].shape() != Shape{1, fs0[1], fs0[2]}) {
      throw ShapeError("mask " + std::to_string(t) + " must be [1," + std::to_string(fs0[1]) + "," +
                       std::to_string(fs0[2]) + "], got " + shape_str(masks[t].shape()));
    }
  }
}

const std::array<PaletteColor, 6>& sprite_palette() {
  static const std::array<PaletteColor, 6> palette{{
      {"red", {0.90f, 0.10f, 0.10f}},
      {"green", {0.10f, 0.80f, 0.20f}},
      {"blue", {0.15f, 0.25f, 0.95f}},
      {"yellow", {0.95f, 0.90f, 0.10f}},
      {"magenta", {0.90f, 0.15f, 0.85f}},
      {"cyan", {0.10f, 0.85f, 0.90f}},
  }};
  return palette;
}

const std::array<std::array<float, 3>, 4>& background_palette() {
  static const std::array<std::array<float, 3>, 4> palette{{
      {0.25f, 0.25f, 0.30f},
      {0.45f, 0.40f, 0.35f},
      {0.20f, 0.35f, 0.30f},
      {0.55f, 0.55f, 0.60f},
  }};
  return palette;
}

const char* shape_name(SpriteShape s) {
  switch (s) {
    case SpriteShape::kSquare: return "square";
    case SpriteShape::kCircle: return "circle";
    case SpriteShape::kTriangle: return "triangle";
  }
  return "square";
}

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::kLeft: return "left";
    case Motion::kRight: return "right";
    case Motion::kUp: return "up";
    case Motion::kDown: return "down";
    case Motion::kStatic: return "static";
  }
  return "static";
}

SpriteShape parse_shape(const std::string& s) {
  for (auto v : {SpriteShape::kSquare, SpriteShape::kCircle, SpriteShape::kTriangle}) {
    if (s == shape_name(v)) return v;
  }
  throw ValueError("unknown sprite shape '" + s + "'");
}

Motion parse_motion(const std::string& s) {
  for (auto v : {Motion::kLeft, Motion::kRight, Motion::kUp, Motion::kDown, Motion::kStatic}) {
    if (s == motion_name(v)) return v;
  }
  throw ValueError("unknown motion '" + s + "'");
}

SpriteSpec random_sprite_spec(Rng& rng, const SpriteSpec& base) {
  SpriteSpec s = base;
  s.shape = static_cast<SpriteShape>(rng.below(3));
  s.color = static_cast<std::size_t>(rng.below(sprite_palette().size()));
  s.motion = static_cast<Motion>(rng.below(5));
  s.sprite_size = 10 + static_cast<std::size_t>(rng.below(4));
  s.background = static_cast<std::size_t>(rng.below(background_palette().size()));
  return s;
}

std::vector<std::uint8_t> sprite_footprint(const SpriteSpec& spec, std::size_t x0, std::size_t y0) {
  const std::size_t w = spec.width, h = spec.height, s = spec.sprite_size;
  std::vector<std::uint8_t> fp(w * h, 0);
  const double cx = static_cast<double>(x0) + static_cast<double>(s) / 2.0;
  const double cy = static_cast<double>(y0) + static_cast<double>(s) / 2.0;
  const double r = static_cast<double>(s) / 2.0;
  for (std::size_t y = y0; y < y0 + s && y < h; ++y) {
    for (std::size_t x = x0; x < x0 + s && x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      bool in = false;
      switch (spec.shape) {
        case SpriteShape::kSquare:
          in = true;
          break;
        case SpriteShape::kCircle:
          in = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
          break;
        case SpriteShape::kTriangle: {
          const double row = static_cast<double>(y - y0);
          in = std::abs(px - cx) <= (row + 1.0) / 2.0;
          break;
        }
      }
      fp[y * w + x] = in ? 1 : 0;
    }
  }
  return fp;
}

namespace {

float quantize(float v) {
  const float c = std::min(1.0f, std::max(0.0f, v));
  return std::round(c * 255.0f) / 255.0f;
}

}  // namespace

VideoClip gen_synthetic_clip(Rng& rng, const SpriteSpec& spec) {
  const std::size_t w = spec.width, h = spec.height, s = spec.sprite_size, T = spec.frames;
  if (w == 0 || h == 0 || T == 0) throw ValueError("clip geometry must be positive");
  if (s == 0 || s > w || s > h) {
    throw ValueError("sprite of size " + std::to_string(s) + " does not fit a " + std::to_string(w) + "x" +
                     std::to_string(h) + " frame");
  }
  if (spec.color >= sprite_palette().size() || spec.background >= background_palette().size()) {
    throw ValueError("palette index out of range");
  }
  const bool horizontal = spec.motion == Motion::kLeft || spec.motion == Motion::kRight;
  const bool moving = spec.motion != Motion::kStatic;
  const std::size_t travel = moving ? spec.step * (T - 1) : 0;
  const std::size_t span_x = w - s;
  const std::size_t span_y = h - s;
  if ((horizontal ? span_x : span_y) < travel) {
    throw ValueError("sprite path of " + std::to_string(travel) + " pixels does not fit the frame");
  }
  // Start so the whole path stays inside the frame.
  std::size_t x0 = static_cast<std::size_t>(rng.below((horizontal ? span_x - travel : span_x) + 1));
  std::size_t y0 = static_cast<std::size_t>(rng.below((moving && !horizontal ? span_y - travel : span_y) + 1));
  if (spec.motion == Motion::kLeft) x0 += travel;
  if (spec.motion == Motion::kUp) y0 += travel;

  // Low-amplitude diagonal stripes with a random phase and frequency.
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const double freq = rng.uniform(0.3, 0.9);
  const auto& bg = background_palette()[spec.background];
  const auto& fg = sprite_palette()[spec.color].rgb;

  VideoClip clip;
  clip.fps = spec.fps;
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t xt = x0, yt = y0;
    const std::size_t d = spec.step * t;
    switch (spec.motion) {
      case Motion::kRight: xt = x0 + d; break;
      case Motion::kLeft: xt = x0 - d; break;
      case Motion::kDown: yt = y0 + d; break;
      case Motion::kUp: yt = y0 - d; break;
      case Motion::kStatic: break;
    }
    const auto fp = sprite_footprint(spec, xt, yt);
    std::vector<float> frame(3 * h * w), mask(h * w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const float tex = spec.texture_amplitude *
                          static_cast<float>(std::sin(freq * static_cast<double>(x + y) + phase));
        for (std::size_t c = 0; c < 3; ++c) {
          frame[c * h * w + i] = quantize(fp[i] ? fg[c] : bg[c] + tex);
        }
        mask[i] = fp[i] ? 1.0f : 0.0f;
      }
    }
    clip.frames.emplace_back(Shape{3, h, w}, std::move(frame));
    clip.masks.emplace_back(Shape{1, h, w}, std::move(mask));
  }
  const std::string color = sprite_palette()[spec.color].name;
  const std::string shape = shape_name(spec.shape);
  clip.subject_label = color + " " + shape;
  clip.caption = spec.motion == Motion::kStatic ? "a " + clip.subject_label + " stays still"
                                                : "a " + clip.subject_label + " moves " + motion_name(spec.motion);
  clip.augmented_caption = clip.caption;
  return clip;
}

std::array<float, 3> background_color(const Tensor<float>& frame, const Tensor<float>& mask) {
  const std::size_t hw = frame.dim(1) * frame.dim(2);
  std::array<double, 3> acc{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    if (mask.at(i) > 0.5f) continue;
    for (std::size_t c = 0; c < 3; ++c) acc[c] += frame.at(c * hw + i);
    ++n;
  }
  std::array<float, 3> out{0, 0, 0};
  if (n == 0) return out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(n));
  return out;
}

namespace {

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f));
}

}  // namespace

void write_clip(const fs::path& dir, const VideoClip& clip) {
  clip.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const std::size_t h = clip.height(), w = clip.width(), hw = h * w;
  std::vector<std::uint8_t> frames, masks;
  frames.reserve(clip.frame_count() * hw * 3);
  masks.reserve(clip.frame_count() * hw);
  for (std::size_t t = 0; t < clip.frame_count(); ++t) {
    for (std::size_t i = 0; i < hw; ++i) {
      for (std::size_t c = 0; c < 3; ++c) frames.push_back(to_byte(clip.frames[t].at(c * hw + i)));
      masks.push_back(clip.masks[t].at(i) > 0.5f ? 255 : 0);
    }
  }
  json meta;
  meta["width"] = w;
  meta["height"] = h;
  meta["frames"] = clip.frame_count();
  meta["fps"] = clip.fps;
  meta["caption"] = clip.caption;
  meta["subject_label"] = clip.subject_label;
  meta["augmented_caption"] = clip.augmented_caption;
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw IoError("cannot write '" + (dir / "meta.json").string() + "'");
  out << meta.dump(2) << '\n';
  write_bytes(dir / "frames.bin", frames);
  write_bytes(dir / "masks.bin", masks);
}

VideoClip read_clip(const fs::path& dir) {
  for (const char* name : {"meta.json", "frames.bin", "masks.bin"}) {
    if (!fs::exists(dir / name)) throw IoError("clip '" + dir.string() + "' is missing " + name);
  }
  const json meta = read_json(dir / "meta.json");
  VideoClip clip;
  std::size_t w = 0, h = 0, T = 0;
  try {
    w = meta.at("width").get<std::size_t>();
    h = meta.at("height").get<std::size_t>();
    T = meta.at("frames").get<std::size_t>();
    clip.fps = meta.at("fps").get<double>();
    clip.caption = meta.at("caption").get<std::string>();
    clip.subject_label = meta.at("subject_label").get<std::string>();
    clip.augmented_caption = meta.at("augmented_caption").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("bad meta.json in '" + dir.string() + "': " + e.what());
  }
  const std::size_t hw = h * w;
  const auto frames = read_bytes(dir / "frames.bin");
  const auto masks = read_bytes(dir / "masks.bin");
  if (frames.size() != T * hw * 3) throw IoError("frames.bin in '" + dir.string() + "' has the wrong size");
  if (masks.size() != T * hw) throw IoError("masks.bin in '" + dir.string() + "' has the wrong size");
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<float> f(3 * hw), m(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      for (std::size_t c = 0; c < 3; ++c) f[c * hw + i] = static_cast<float>(frames[(t * hw + i) * 3 + c]) / 255.0f;
      const auto b = masks[t * hw + i];
      if (b != 0 && b != 255) throw IoError("masks.bin in '" + dir.string() + "' holds a value other than 0/255");
      m[i] = b ? 1.0f : 0.0f;
    }
    clip.frames.emplace_back(Shape{3, h, w}, std::move(f));
    clip.masks.emplace_back(Shape{1, h, w}, std::move(m));
  }
  return clip;
}

std::vector<std::string> read_manifest_clips(const fs::path& corpus_dir) {
  const json manifest = read_json(corpus_dir / "manifest.json");
  try {
    return manifest.at("clips").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError("bad manifest in '" + corpus_dir.string() + "': " + e.what());
  }
}

std::vector<VideoClip> read_corpus(const fs::path& corpus_dir) {
  std::vector<VideoClip> clips;
  for (const auto& name : read_manifest_clips(corpus_dir)) clips.push_back(read_clip(corpus_dir / name));
  return clips;
}

VideoClip center_crop(const VideoClip& clip, std::size_t size) {
  clip.validate();
  const std::size_t h = clip.height(), w = clip.width();
  if (size > h || size > w) throw ShapeError("center crop of " + std::to_string(size) + " exceeds the frame");
  if (size == h && size == w) return clip;
  const std::size_t top = (h - size) / 2, left = (w - size) / 2;
  VideoClip out = clip;
  out.frames.clear();
  out.masks.clear();
  auto crop = [&](const Tensor<float>& x) {
    const std::size_t c = x.dim(0);
    std::vector<float> d(c * size * size);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t xx = 0; xx < size; ++xx)
          d[(ch * size + y) * size + xx] = x.at((ch * h + top + y) * w + left + xx);
    return Tensor<float>({c, size, size}, std::move(d));
  };
  for (std::size_t t = 0; t < clip.frame_count(); ++t) {
    out.frames.push_back(crop(clip.frames[t]));
    out.masks.push_back(crop(clip.masks[t]));
  }
  return out;
}

}  // namespace magdiff
