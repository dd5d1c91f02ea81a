#include "magdiff/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "magdiff/error.hpp"

namespace magdiff {

namespace {

struct Netpbm {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
};

Netpbm read_netpbm(const std::filesystem::path& path, const std::string& magic, std::size_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const auto bad = [&](const std::string& why) { return IoError("image '" + path.string() + "': " + why); };
  if (token() != magic) throw bad("expected a binary " + magic + " file");
  Netpbm img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw bad("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw bad("malformed header");
  }
  if (img.width == 0 || img.height == 0) throw bad("empty image");
  img.bytes.resize(img.width * img.height * channels);
  in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.bytes.size())) throw bad("truncated pixel data");
  return img;
}

void write_netpbm(const std::filesystem::path& path, const std::string& magic, std::size_t w, std::size_t h,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image '" + path.string() + "'");
}

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  const auto img = read_netpbm(path, "P6", 3);
  const std::size_t hw = img.width * img.height;
  std::vector<float> v(3 * hw);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * hw + i] = static_cast<float>(img.bytes[i * 3 + c]) / 255.0f;
  return Tensor<float>({3, img.height, img.width}, std::move(v));
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm expects [3,H,W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  std::vector<std::uint8_t> bytes(3 * hw);
  const auto d = image.data();
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) bytes[i * 3 + c] = to_byte(d[c * hw + i]);
  write_netpbm(path, "P6", w, h, bytes);
}

Tensor<float> read_pgm_mask(const std::filesystem::path& path) {
  const auto img = read_netpbm(path, "P5", 1);
  std::vector<float> v(img.bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.bytes[i] > 127 ? 1.0f : 0.0f;
  return Tensor<float>({1, img.height, img.width}, std::move(v));
}

void write_pgm_mask(const std::filesystem::path& path, const Tensor<float>& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw ShapeError("write_pgm_mask expects [1,H,W], got " + shape_str(mask.shape()));
  std::vector<std::uint8_t> bytes(mask.numel());
  const auto d = mask.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = d[i] > 0.5f ? 255 : 0;
  write_netpbm(path, "P5", mask.dim(2), mask.dim(1), bytes);
}

Tensor<float> contact_sheet(const std::vector<Tensor<float>>& frames) {
  if (frames.empty()) throw ValueError("contact sheet needs at least one frame");
  const std::size_t h = frames[0].dim(1), w = frames[0].dim(2), n = frames.size();
  std::vector<float> v(3 * h * w * n);
  for (std::size_t t = 0; t < n; ++t) {
    if (frames[t].shape() != frames[0].shape()) throw ShapeError("contact sheet frames differ in shape");
    const auto d = frames[t].data();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) v[(c * h + y) * w * n + t * w + x] = d[(c * h + y) * w + x];
  }
  return Tensor<float>({3, h, w * n}, std::move(v));
}

}  // namespace magdiff
