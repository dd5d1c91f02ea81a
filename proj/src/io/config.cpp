#include "magdiff/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "magdiff/error.hpp"

namespace magdiff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ValueError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ValueError("config key '" + key + "' value '" + v + "' is out of range");
  }
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t n = 0;
  double d = 0;
  try {
    d = std::stod(v, &n);
  } catch (const std::exception&) {
    n = 0;
  }
  if (n == 0 || n != v.size() || !std::isfinite(d)) {
    throw ValueError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return d;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> text;
  std::function<nlohmann::json(const RunConfig&)> json;
};

template <typename M>
Field size_field(M RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = static_cast<M>(to_u64(k, v)); },
          [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m](const RunConfig& c) { return nlohmann::json(c.*m); }};
}

Field double_field(double RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); },
          [m](const RunConfig& c) { return fmt_double(c.*m); },
          [m](const RunConfig& c) { return nlohmann::json(c.*m); }};
}

Field string_field(std::string RunConfig::*m) {
  return {[m](RunConfig& c, const std::string&, const std::string& v) { c.*m = v; },
          [m](const RunConfig& c) { return c.*m; }, [m](const RunConfig& c) { return nlohmann::json(c.*m); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"seed", size_field(&RunConfig::seed)},
      {"resolution", size_field(&RunConfig::resolution)},
      {"frames", size_field(&RunConfig::frames)},
      {"clips", size_field(&RunConfig::clips)},
      {"lr", double_field(&RunConfig::lr)},
      {"batch_size", size_field(&RunConfig::batch_size)},
      {"steps", size_field(&RunConfig::steps)},
      {"prompt_drop_p", double_field(&RunConfig::prompt_drop_p)},
      {"edit_mode_p", double_field(&RunConfig::edit_mode_p)},
      {"cfg_scale", double_field(&RunConfig::cfg_scale)},
      {"ddim_steps", size_field(&RunConfig::ddim_steps)},
      {"eta", double_field(&RunConfig::eta)},
      {"apa_mode", string_field(&RunConfig::apa_mode)},
      {"freeze_policy", string_field(&RunConfig::freeze_policy)},
      {"train_timesteps", size_field(&RunConfig::train_timesteps)},
      {"vae_steps", size_field(&RunConfig::vae_steps)},
      {"vae_lr", double_field(&RunConfig::vae_lr)},
      {"vae_batch_size", size_field(&RunConfig::vae_batch_size)},
      {"log_every", size_field(&RunConfig::log_every)},
      {"checkpoint_every", size_field(&RunConfig::checkpoint_every)},
      {"theta", double_field(&RunConfig::theta)},
      {"min_short_side", size_field(&RunConfig::min_short_side)},
      {"hfa_scales",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<std::size_t> out;
          std::stringstream ss(v);
          std::string part;
          while (std::getline(ss, part, ',')) out.push_back(to_u64(k, trim(part)));
          if (out.empty()) throw ValueError("config key 'hfa_scales' needs at least one scale");
          c.hfa_scales = out;
        },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.hfa_scales.size(); ++i) s += (i ? "," : "") + std::to_string(c.hfa_scales[i]);
          return s;
        },
        [](const RunConfig& c) { return nlohmann::json(c.hfa_scales); }}},
      {"max_tokens", size_field(&RunConfig::max_tokens)},
      {"image_tokens", size_field(&RunConfig::image_tokens)},
      {"base_channels", size_field(&RunConfig::base_channels)},
      {"mid_channels", size_field(&RunConfig::mid_channels)},
      {"heads", size_field(&RunConfig::heads)},
  };
  return f;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValueError("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

void RunConfig::validate() const {
  auto prob = [](double p) { return p >= 0 && p <= 1; };
  if (resolution == 0 || resolution % 4) throw ValueError("resolution must be a positive multiple of 4");
  if (frames == 0) throw ValueError("frames must be positive");
  if (!(lr > 0) || !(vae_lr > 0)) throw ValueError("learning rates must be positive");
  if (batch_size == 0 || vae_batch_size == 0) throw ValueError("batch sizes must be positive");
  if (!prob(prompt_drop_p) || !prob(edit_mode_p)) throw ValueError("probabilities must lie in [0, 1]");
  if (cfg_scale < 0) throw ValueError("cfg_scale must be >= 0");
  if (eta < 0) throw ValueError("eta must be >= 0");
  if (train_timesteps < 2) throw ValueError("train_timesteps must be at least 2");
  if (ddim_steps == 0 || ddim_steps > train_timesteps) throw ValueError("ddim_steps must lie in [1, train_timesteps]");
  if (theta < 0 || theta > 1) throw ValueError("theta must lie in [0, 1]");
  if (freeze_policy != "default" && freeze_policy != "desk" && freeze_policy != "train-all") {
    throw ValueError("freeze_policy must be default, desk or train-all");
  }
  for (auto s : hfa_scales)
    if (s == 0 || s % 4) throw ValueError("HFA scales must be positive multiples of 4");
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("MAGDIFF_SEED")) set("seed", s);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, f] : fields()) j[k] = f.json(*this);
  return j;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.text(*this) + "\n";
  return out;
}

void RunConfig::update(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::update_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    update(ss.str());
  } catch (const ValueError& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  c.update(text);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  c.update_from_file(path);
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) {
      c.set(k, v.get<std::string>());
    } else if (v.is_array()) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i].dump();
      c.set(k, s);
    } else if (v.is_number_float()) {
      c.set(k, fmt_double(v.get<double>()));
    } else {
      c.set(k, v.dump());
    }
  }
  return c;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

}  // namespace magdiff
