#include "roicodec/model/checkpoint.hpp"

#include <cstring>
#include <sstream>

namespace roicodec::model {

namespace {
constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};
}

template <typename T>
util::Bytes serialize_checkpoint(const CodecModel<T>& model, const std::string& metadata) {
  util::ByteWriter w;
  w.text(std::string_view(kMagic, 4));
  w.u8(kCheckpointVersion);
  const auto text = model.config().canonical_text();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.text(text);
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.text(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p.tensor.data()) w.f32(static_cast<float>(v));
  }
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  w.text(metadata);
  const auto crc = util::crc32(w.bytes());
  w.u32(crc);
  return w.take();
}

template <typename T>
CodecModel<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::string* metadata) {
  if (bytes.size() < 4 + 1 + 4) throw FormatError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 4);
  util::ByteReader trailer(bytes.last(4), "checkpoint");
  if (trailer.u32() != util::crc32(body)) throw FormatError("checkpoint: checksum mismatch (corrupt file)");

  util::ByteReader r(body, "checkpoint");
  if (std::memcmp(r.raw(4).data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = r.u8();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto config = ModelConfig::parse(r.text(r.u32()));
  CodecModel<T> model(config);
  auto& params = model.parameters();
  const auto count = r.u32();
  if (count != params.size())
    throw FormatError("checkpoint: " + std::to_string(count) + " parameters stored, config defines " +
                      std::to_string(params.size()));
  for (auto& p : params) {
    const auto name = r.text(r.u32());
    if (name != p.name) throw FormatError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'");
    const auto rank = r.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
    if (shape != p.tensor.shape())
      throw FormatError("checkpoint: '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(p.tensor.shape()));
    for (auto& v : p.tensor.mutable_data()) v = static_cast<T>(r.f32());
  }
  auto meta = r.text(r.u32());
  if (metadata) *metadata = std::move(meta);
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after metadata");
  return model;
}

template <typename T>
void save_checkpoint(const CodecModel<T>& model, const std::string& path, const std::string& metadata) {
  util::write_file(path, serialize_checkpoint(model, metadata));
}

template <typename T>
CodecModel<T> load_checkpoint(const std::string& path, std::string* metadata) {
  return deserialize_checkpoint<T>(util::read_file(path), metadata);
}

std::string metadata_value(const std::string& metadata, const std::string& key) {
  std::istringstream in(metadata);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, s.find_last_not_of(" \t\r") + 1 - b);
    };
    if (trim(line.substr(0, eq)) == key) return trim(line.substr(eq + 1));
  }
  return {};
}

template <typename T>
std::uint64_t model_hash(const CodecModel<T>& model) {
  const auto text = model.config().canonical_text();
  std::uint64_t h = util::fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  util::ByteWriter w;
  for (const auto& p : model.parameters())
    for (T v : p.tensor.data()) w.f32(static_cast<float>(v));
  return util::fnv1a64(w.bytes(), h);
}

template <typename Dst, typename Src>
void copy_weights(CodecModel<Dst>& dst, const CodecModel<Src>& src) {
  if (dst.config().canonical_text() != src.config().canonical_text())
    throw ModelMismatchError("copy_weights: configs differ");
  auto& d = dst.parameters();
  const auto& s = src.parameters();
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto out = d[i].tensor.mutable_data();
    const auto in = s[i].tensor.data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<Dst>(in[k]);
  }
}

#define ROICODEC_INSTANTIATE(T)                                                  \
  template util::Bytes serialize_checkpoint(const CodecModel<T>&, const std::string&);                   \
  template CodecModel<T> deserialize_checkpoint<T>(std::span<const std::uint8_t>, std::string*);       \
  template void save_checkpoint(const CodecModel<T>&, const std::string&, const std::string&);           \
  template CodecModel<T> load_checkpoint<T>(const std::string&, std::string*);                           \
  template std::uint64_t model_hash(const CodecModel<T>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)
template void copy_weights(CodecModel<float>&, const CodecModel<double>&);
template void copy_weights(CodecModel<double>&, const CodecModel<float>&);
template void copy_weights(CodecModel<float>&, const CodecModel<float>&);
template void copy_weights(CodecModel<double>&, const CodecModel<double>&);

}  // namespace roicodec::model
