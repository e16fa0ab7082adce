#include "roicodec/train/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "roicodec/util/bytes.hpp"

namespace roicodec::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") + 1 - b);
}

double parse_real(const std::string& text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw std::invalid_argument("expects a number, got '" + text + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw std::invalid_argument("expects a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("expects true or false, got '" + text + "'");
}

// Per-key range rule; returns an error message or nothing.
using RangeCheck = std::function<std::optional<std::string>(const TrainConfig&)>;

const std::vector<std::pair<std::string, RangeCheck>>& range_checks() {
  static const std::vector<std::pair<std::string, RangeCheck>> checks = {
      {"alpha", [](const TrainConfig& c) -> std::optional<std::string> {
         if (!(c.alpha > 0)) return "must be > 0";
         return std::nullopt;
       }},
      {"omega", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.omega < 0 || c.omega > 20) return "must lie in [0, 20]";
         return std::nullopt;
       }},
      {"lr", [](const TrainConfig& c) -> std::optional<std::string> {
         if (!(c.lr > 0)) return "must be > 0";
         return std::nullopt;
       }},
      {"batch_size", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.batch_size == 0) return "must be >= 1";
         return std::nullopt;
       }},
      {"crop", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.crop == 0 || c.crop % 64 != 0) return "must be a positive multiple of 64";
         return std::nullopt;
       }},
      {"steps", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.steps == 0 && c.epochs == 0) return "steps and epochs cannot both be 0";
         return std::nullopt;
       }},
      {"precision", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.precision != "f32" && c.precision != "f64") return "must be f32 or f64";
         return std::nullopt;
       }},
      {"clip_norm", [](const TrainConfig& c) -> std::optional<std::string> {
         if (c.clip_norm < 0) return "must be >= 0 (0 disables clipping)";
         return std::nullopt;
       }},
      {"model", [](const TrainConfig& c) -> std::optional<std::string> {
         try {
           model::ModelConfig::preset(c.model);
         } catch (const ValidationError& e) {
           return std::string(e.what());
         }
         return std::nullopt;
       }},
  };
  return checks;
}

}  // namespace

void TrainConfig::validate() const {
  for (const auto& [key, check] : range_checks())
    if (auto err = check(*this)) throw ValidationError("'" + key + "' " + *err);
}

model::ModelConfig TrainConfig::model_config() const {
  auto c = model::ModelConfig::preset(model);
  c.context_mode = context;
  c.seed = seed;
  return c;
}

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  TrainConfig c;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"alpha", [&](const std::string& v) { c.alpha = parse_real(v); }},
      {"omega", [&](const std::string& v) { c.omega = parse_real(v); }},
      {"lr", [&](const std::string& v) { c.lr = parse_real(v); }},
      {"batch_size", [&](const std::string& v) { c.batch_size = parse_uint(v); }},
      {"steps", [&](const std::string& v) { c.steps = parse_uint(v); }},
      {"epochs", [&](const std::string& v) { c.epochs = parse_uint(v); }},
      {"crop", [&](const std::string& v) { c.crop = parse_uint(v); }},
      {"seed", [&](const std::string& v) { c.seed = parse_uint(v); }},
      {"precision", [&](const std::string& v) { c.precision = v; }},
      {"model", [&](const std::string& v) { c.model = v; }},
      {"context",
       [&](const std::string& v) {
         try {
           c.context = model::context_mode_from_string(v);
         } catch (const ValidationError& e) {
           throw std::invalid_argument(e.what());
         }
       }},
      {"clip_norm", [&](const std::string& v) { c.clip_norm = parse_real(v); }},
      {"uniform_lambda", [&](const std::string& v) { c.uniform_lambda = parse_bool(v); }},
      {"image_dir", [&](const std::string& v) { c.image_dir = v; }},
      {"mask_dir", [&](const std::string& v) { c.mask_dir = v; }},
      {"out", [&](const std::string& v) { c.out = v; }},
      {"metrics", [&](const std::string& v) { c.metrics = v; }},
      {"init", [&](const std::string& v) { c.init = v; }},
      {"log_every", [&](const std::string& v) { c.log_every = parse_uint(v); }},
  };

  std::map<std::string, std::size_t> line_of;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  auto fail = [&](std::size_t line, const std::string& what) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected 'key = value', got '" + line + "'");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) fail(lineno, "unknown key '" + key + "'");
    if (line_of.count(key)) fail(lineno, "duplicate key '" + key + "' (first set on line " +
                                             std::to_string(line_of[key]) + ")");
    line_of[key] = lineno;
    try {
      it->second(value);
    } catch (const std::invalid_argument& e) {
      fail(lineno, "key '" + key + "' " + e.what());
    }
  }
  for (const auto& [key, check] : range_checks()) {
    if (auto err = check(c)) {
      auto where = line_of.find(key);
      // `steps` may be violated through `epochs`
      if (where == line_of.end() && key == "steps") where = line_of.find("epochs");
      fail(where == line_of.end() ? 0 : where->second, "key '" + key + "' " + *err);
    }
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  const auto bytes = util::read_file(path.string());
  auto c = parse_train_config(std::string(bytes.begin(), bytes.end()), path.string());
  const auto base = path.parent_path();
  for (std::string* p : {&c.image_dir, &c.mask_dir, &c.out, &c.metrics, &c.init})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

}  // namespace roicodec::train
