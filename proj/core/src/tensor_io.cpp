#include "cdgmae/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "cdgmae/errors.hpp"

namespace cdgmae {
namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'D', 'G', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF32 = 0x01;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  const Shape& shape = tensor.shape();
  if (shape.size() > 255) throw ContractError("tensor rank exceeds 255");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t e : shape) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw ContractError("tensor extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  out.reserve(out.size() + 4 * tensor.size());
  for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a CDGT tensor");
  if (bytes[4] != kVersion) throw IoError("unsupported CDGT version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeF32) throw IoError("unsupported CDGT dtype " + std::to_string(bytes[5]));
  const std::size_t rank = bytes[6];
  std::size_t at = 7;
  if (bytes.size() < at + 4 * rank) throw IoError("truncated CDGT header");
  Shape shape(rank);
  for (std::size_t d = 0; d < rank; ++d, at += 4) shape[d] = get_u32(bytes, at);
  const std::size_t n = numel(shape);
  if (bytes.size() != at + 4 * n) {
    throw IoError("CDGT payload holds " + std::to_string(bytes.size() - at) + " bytes, expected " +
                  std::to_string(4 * n));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i, at += 4) data[i] = std::bit_cast<float>(get_u32(bytes, at));
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_atomic(path, encode_tensor(tensor));
}

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace cdgmae
