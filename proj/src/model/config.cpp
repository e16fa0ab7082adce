#include "roicodec/model/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "roicodec/errors.hpp"

namespace roicodec::model {

std::string to_string(ContextMode mode) {
  return mode == ContextMode::Checkerboard ? "checkerboard" : "none";
}

ContextMode context_mode_from_string(const std::string& text) {
  if (text == "none") return ContextMode::None;
  if (text == "checkerboard") return ContextMode::Checkerboard;
  throw ValidationError("unknown context_mode '" + text + "' (expected none or checkerboard)");
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("model config: '" + key + "' expects a non-negative integer, got '" + text + "'");
  return v;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("model config: " + what); };
  if (stem_kernel == 0 || stem_kernel % 2 == 0) fail("stem_kernel must be odd");
  if (stem_stride != 2) fail("stem_stride must be 2 (the main path downsamples by 16)");
  if (channels.size() != 3 || blocks.size() != 3 || heads.size() != 3)
    fail("channels, blocks and heads need exactly three entries");
  for (std::size_t i = 0; i < 3; ++i) {
    if (channels[i] == 0) fail("stage widths must be positive");
    if (heads[i] == 0 || channels[i] % heads[i]) fail("stage " + std::to_string(i) + ": heads must divide channels");
  }
  if (latent_channels == 0 || hyper_channels == 0 || hyper_hidden == 0 || condition_channels == 0)
    fail("all widths must be positive");
  if (main_window == 0 || hyper_window == 0) fail("window sizes must be positive");
  if (hyper_heads == 0 || latent_channels % hyper_heads || hyper_hidden % hyper_heads)
    fail("hyper_heads must divide latent_channels and hyper_hidden");
  if (!(ffn_ratio > 0.0)) fail("ffn_ratio must be positive");
  if (fusion_depth == 0) fail("fusion_depth must be at least 1");
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream os;
  os << "stem_kernel = " << stem_kernel << "\n"
     << "stem_stride = " << stem_stride << "\n"
     << "channels = " << join(channels) << "\n"
     << "blocks = " << join(blocks) << "\n"
     << "heads = " << join(heads) << "\n"
     << "main_window = " << main_window << "\n"
     << "hyper_window = " << hyper_window << "\n"
     << "latent_channels = " << latent_channels << "\n"
     << "hyper_channels = " << hyper_channels << "\n"
     << "hyper_hidden = " << hyper_hidden << "\n"
     << "hyper_blocks = " << hyper_blocks << "\n"
     << "hyper_heads = " << hyper_heads << "\n";
  os.precision(17);
  os << "ffn_ratio = " << ffn_ratio << "\n"
     << "condition_channels = " << condition_channels << "\n"
     << "fusion_depth = " << fusion_depth << "\n"
     << "context_mode = " << to_string(context_mode) << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig c;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("model config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "stem_kernel") c.stem_kernel = parse_u64(key, value);
    else if (key == "stem_stride") c.stem_stride = parse_u64(key, value);
    else if (key == "channels") c.channels = parse_list(key, value);
    else if (key == "blocks") c.blocks = parse_list(key, value);
    else if (key == "heads") c.heads = parse_list(key, value);
    else if (key == "main_window") c.main_window = parse_u64(key, value);
    else if (key == "hyper_window") c.hyper_window = parse_u64(key, value);
    else if (key == "latent_channels") c.latent_channels = parse_u64(key, value);
    else if (key == "hyper_channels") c.hyper_channels = parse_u64(key, value);
    else if (key == "hyper_hidden") c.hyper_hidden = parse_u64(key, value);
    else if (key == "hyper_blocks") c.hyper_blocks = parse_u64(key, value);
    else if (key == "hyper_heads") c.hyper_heads = parse_u64(key, value);
    else if (key == "ffn_ratio") {
      try {
        std::size_t used = 0;
        c.ffn_ratio = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ValidationError("model config: 'ffn_ratio' expects a number, got '" + value + "'");
      }
    } else if (key == "condition_channels") c.condition_channels = parse_u64(key, value);
    else if (key == "fusion_depth") c.fusion_depth = parse_u64(key, value);
    else if (key == "context_mode") c.context_mode = context_mode_from_string(value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else throw ValidationError("model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "default") return c;
  if (name == "full") {
    c.channels = {128, 192, 256};
    c.blocks = {2, 2, 2};
    c.heads = {4, 6, 8};
    c.latent_channels = 288;
    c.hyper_channels = 192;
    c.hyper_hidden = 288;
    c.hyper_blocks = 1;
    c.hyper_heads = 8;
    c.condition_channels = 64;
    return c;
  }
  if (name == "toy") {
    c.channels = {24, 32, 48};
    c.blocks = {1, 1, 1};
    c.heads = {2, 2, 3};
    c.latent_channels = 64;
    c.hyper_channels = 32;
    c.hyper_hidden = 64;
    c.hyper_blocks = 1;
    c.hyper_heads = 2;
    c.condition_channels = 8;
    return c;
  }
  if (name == "micro") {
    c.channels = {4, 6, 8};
    c.blocks = {1, 1, 1};
    c.heads = {1, 2, 2};
    c.latent_channels = 8;
    c.hyper_channels = 4;
    c.hyper_hidden = 8;
    c.hyper_blocks = 1;
    c.hyper_heads = 2;
    c.condition_channels = 2;
    return c;
  }
  throw ValidationError("unknown model preset '" + name + "' (expected default, full, toy or micro)");
}

}  // namespace roicodec::model
