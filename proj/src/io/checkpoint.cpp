#include "magdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace magdiff {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'G', 'D', 'I', 'F', 'F', '\0'};
constexpr const char* kFormat = "magdiff-checkpoint";

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

template <typename T>
void Checkpoint::add_store(const ParameterStore<T>& store) {
  for (const auto& e : store.entries()) {
    if (contains(e.name)) throw ValueError("duplicate checkpoint tensor '" + e.name + "'");
    Record r{e.name, e.tensor.shape(), e.trainable, {}};
    r.data.reserve(e.tensor.numel());
    for (auto v : e.tensor.data()) r.data.push_back(static_cast<float>(v));
    tensors.push_back(std::move(r));
  }
}

template <typename T>
void Checkpoint::load_into(ParameterStore<T>& store, bool flags) const {
  std::unordered_map<std::string, const Record*> index;
  for (const auto& r : tensors) index[r.name] = &r;
  for (const auto& e : store.entries()) {
    auto it = index.find(e.name);
    if (it == index.end()) throw ValueError("checkpoint lacks parameter '" + e.name + "'");
    const auto& r = *it->second;
    if (r.shape != e.tensor.shape()) {
      throw ShapeError("checkpoint parameter '" + e.name + "' has shape " + shape_str(r.shape) + ", model expects " +
                       shape_str(e.tensor.shape()));
    }
    auto dst = Tensor<T>(e.tensor).mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r.data[i]);
    if (flags) store.set_trainable(e.name, r.trainable);
  }
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : tensors)
    if (r.name == name) return true;
  return false;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& r : tensors) {
    if (shape_numel(r.shape) != r.data.size()) throw ShapeError("checkpoint tensor '" + r.name + "' size mismatch");
    manifest.push_back({{"name", r.name}, {"shape", r.shape}, {"offset", offset}, {"trainable", r.trainable}});
    offset += 4 * r.data.size();
  }
  const nlohmann::json header = {{"format", kFormat},
                                 {"version", kVersion},
                                 {"config", config},
                                 {"payload_bytes", offset},
                                 {"tensors", manifest}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& r : tensors)
    for (float v : r.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) { return IoError("checkpoint '" + origin + "': " + why); };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw fail("bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kVersion) throw fail("unsupported version " + std::to_string(version));
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - 20) throw fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("unreadable header: ") + e.what());
  }
  const std::size_t base = 20 + hlen;
  Checkpoint ck;
  try {
    if (header.at("format") != kFormat || header.at("version") != kVersion) throw fail("header format mismatch");
    const auto payload = header.at("payload_bytes").get<std::uint64_t>();
    if (payload != bytes.size() - base) throw fail("payload size does not match header");
    ck.config = header.at("config");
    std::uint64_t expect = 0;
    for (const auto& m : header.at("tensors")) {
      Record r;
      r.name = m.at("name").get<std::string>();
      r.shape = m.at("shape").get<Shape>();
      r.trainable = m.at("trainable").get<bool>();
      const auto off = m.at("offset").get<std::uint64_t>();
      if (off != expect) throw fail("tensor '" + r.name + "' offset is not contiguous");
      const std::size_t n = shape_numel(r.shape);
      if (off + 4 * n > payload) throw fail("tensor '" + r.name + "' runs past the payload");
      r.data.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        r.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + off + 4 * i));
      }
      expect = off + 4 * n;
      ck.tensors.push_back(std::move(r));
    }
    if (expect != payload) throw fail("manifest does not cover the payload");
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

nlohmann::json denoiser_config_json(const DenoiserConfig& c) {
  return {{"latent_channels", c.latent_channels}, {"base_channels", c.base_channels},
          {"mid_channels", c.mid_channels},       {"groups", c.groups},
          {"time_dim", c.time_dim},               {"text_width", c.text_width},
          {"max_tokens", c.max_tokens},           {"image_tokens", c.image_tokens},
          {"heads", c.heads},                     {"max_frames", c.max_frames},
          {"vocab_size", c.vocab_size},           {"hfa_channels", c.hfa_channels},
          {"apa_mode", c.apa.str()}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.latent_channels = j.at("latent_channels");
    c.base_channels = j.at("base_channels");
    c.mid_channels = j.at("mid_channels");
    c.groups = j.at("groups");
    c.time_dim = j.at("time_dim");
    c.text_width = j.at("text_width");
    c.max_tokens = j.at("max_tokens");
    c.image_tokens = j.at("image_tokens");
    c.heads = j.at("heads");
    c.max_frames = j.at("max_frames");
    c.vocab_size = j.at("vocab_size");
    c.hfa_channels = j.at("hfa_channels");
    c.apa = ApaSetting::parse(j.at("apa_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("malformed denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

Checkpoint ModelBundle::to_checkpoint(const nlohmann::json& run_config) const {
  Checkpoint ck;
  ck.config = {{"run", run_config},
               {"model",
                {{"denoiser", denoiser_config_json(net->config())},
                 {"hfa_scales", hfa.scales},
                 {"latent_size", hfa.latent_size},
                 {"train_timesteps", schedule.size()},
                 {"vocab", vocab.tokens()}}}};
  ck.add_store(vae->params());
  ck.add_store(net->params());
  return ck;
}

ModelBundle ModelBundle::from_checkpoint(const Checkpoint& ck) {
  if (!ck.config.contains("model")) throw ValueError("checkpoint holds no denoiser (VAE-only checkpoint?)");
  const auto& m = ck.config.at("model");
  ModelBundle b;
  b.vae = vae_from_checkpoint(ck);
  b.net = std::make_unique<Denoiser<float>>(denoiser_config_from_json(m.at("denoiser")), 0);
  ck.load_into(b.net->params());
  for (const auto& tok : m.at("vocab").get<std::vector<std::string>>()) b.vocab.add(tok);
  if (b.vocab.tokens() != m.at("vocab").get<std::vector<std::string>>()) {
    throw ValueError("checkpoint vocabulary is malformed");
  }
  b.hfa.scales = m.at("hfa_scales").get<std::vector<std::size_t>>();
  b.hfa.latent_size = m.at("latent_size").get<std::size_t>();
  b.schedule = NoiseSchedule::linear(m.at("train_timesteps").get<std::size_t>());
  return b;
}

Checkpoint vae_checkpoint(const Vae<float>& vae, const nlohmann::json& run_config) {
  Checkpoint ck;
  ck.config = {{"run", run_config}};
  ck.add_store(vae.params());
  return ck;
}

std::unique_ptr<Vae<float>> vae_from_checkpoint(const Checkpoint& ck) {
  auto vae = std::make_unique<Vae<float>>(0);
  ck.load_into(vae->params());
  vae->freeze();
  return vae;
}

template void Checkpoint::add_store(const ParameterStore<float>&);
template void Checkpoint::add_store(const ParameterStore<double>&);
template void Checkpoint::load_into(ParameterStore<float>&, bool) const;
template void Checkpoint::load_into(ParameterStore<double>&, bool) const;

}  // namespace magdiff
