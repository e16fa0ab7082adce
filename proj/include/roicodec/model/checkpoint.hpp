#pragma once

#include <cstdint>
#include <string>

#include "roicodec/model/model.hpp"
#include "roicodec/util/bytes.hpp"

namespace roicodec::model {

// Checkpoint layout, little-endian:
//   "RCKP" | version u8 | config_len u32 | canonical config text
//   | param_count u32 | per parameter: name_len u32, name, rank u32, dims u32[rank], f32[numel]
//   | metadata_len u32 | metadata text (free-form key = value lines, e.g. training settings)
//   | CRC-32 of all preceding bytes
inline constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
util::Bytes serialize_checkpoint(const CodecModel<T>& model, const std::string& metadata = "");
template <typename T>
CodecModel<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::string* metadata = nullptr);

template <typename T>
void save_checkpoint(const CodecModel<T>& model, const std::string& path, const std::string& metadata = "");
template <typename T>
CodecModel<T> load_checkpoint(const std::string& path, std::string* metadata = nullptr);

// Value of `key` in a metadata block, or empty.
std::string metadata_value(const std::string& metadata, const std::string& key);

// FNV-1a over the canonical config text followed by every weight as f32. Two
// models share a hash exactly when a bitstream from one decodes on the other.
template <typename T>
std::uint64_t model_hash(const CodecModel<T>& model);

// Copies weights between models with identical configs (e.g. float <-> double).
template <typename Dst, typename Src>
void copy_weights(CodecModel<Dst>& dst, const CodecModel<Src>& src);

}  // namespace roicodec::model
