#pragma once

#include <cstdint>
#include <filesystem>

namespace roicodec::train {

// Writes `count` RGB images of size x size to <dir>/images and matching binary
// rectangular masks to <dir>/masks (PNG, names 0000.png ...). Images mix smooth
// gradients with textured patches, and the masked rectangle always holds one
// textured object so that it carries real detail.
void generate_roi_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace roicodec::train
