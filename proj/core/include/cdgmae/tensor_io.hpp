#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdgmae/tensor.hpp"

namespace cdgmae {

// Tensor file layout, little-endian throughout:
//   "CDGT" | version 0x01 | dtype 0x01 (f32) | rank (u8) | rank x u32 extents | f32 data (row-major)

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// Writes via a temporary file and rename, so readers never see a partial file.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

/// Replaces `path` with `contents` atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

}  // namespace cdgmae
