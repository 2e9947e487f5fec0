#include "protoclass/binary_format.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "protoclass/error.hpp"

namespace protoclass::io {
namespace {

constexpr std::size_t kHeaderBytes = 4 + 4 + 8;  // magic, version, n
constexpr std::size_t kFeaturesHeaderBytes = kHeaderBytes + 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string header(const std::array<char, 4>& magic, std::uint64_t n) {
  std::string out(magic.begin(), magic.end());
  put_u32(out, kFormatVersion);
  put_u64(out, n);
  return out;
}

// Validates magic + version and returns n. Advances nothing; callers index
// from kHeaderBytes.
std::uint64_t check_header(std::string_view bytes,
                           const std::array<char, 4>& magic,
                           std::string_view source) {
  if (bytes.size() < kHeaderBytes)
    throw DataError(std::string(source) + ": truncated header");
  if (std::memcmp(bytes.data(), magic.data(), 4) != 0)
    throw DataError(std::string(source) + ": bad magic, expected '" +
                    std::string(magic.begin(), magic.end()) + "'");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = get_u32(p + 4);
  if (version != kFormatVersion)
    throw DataError(std::string(source) + ": unsupported format version " +
                    std::to_string(version));
  return get_u64(p + 8);
}

}  // namespace

std::string encode_features(const Matrix<float>& features) {
  std::string out = header(kFeaturesMagic, features.rows());
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  out.reserve(out.size() + features.flat().size() * 4);
  for (float v : features.flat()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::string encode_labels(const std::vector<std::uint32_t>& labels) {
  std::string out = header(kLabelsMagic, labels.size());
  for (std::uint32_t v : labels) put_u32(out, v);
  return out;
}

std::string encode_splits(const std::vector<std::uint8_t>& splits) {
  std::string out = header(kSplitsMagic, splits.size());
  out.append(splits.begin(), splits.end());
  return out;
}

Matrix<float> decode_features(std::string_view bytes, std::string_view source) {
  const std::uint64_t n = check_header(bytes, kFeaturesMagic, source);
  if (bytes.size() < kFeaturesHeaderBytes)
    throw DataError(std::string(source) + ": truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t d = get_u32(p + kHeaderBytes);
  if (d == 0) throw DataError(std::string(source) + ": dimension is zero");
  const std::size_t payload = bytes.size() - kFeaturesHeaderBytes;
  if (payload % 4 != 0 || n > payload / 4 / d || payload / 4 != n * d) {
    throw DataError(std::string(source) + ": dimension mismatch, header says " +
                    std::to_string(n) + " x " + std::to_string(d) +
                    " floats but payload holds " + std::to_string(payload / 4));
  }
  std::vector<float> values(n * d);
  const unsigned char* body = p + kFeaturesHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = std::bit_cast<float>(get_u32(body + 4 * i));
  return Matrix<float>(n, d, std::move(values));
}

std::vector<std::uint32_t> decode_labels(std::string_view bytes,
                                         std::string_view source) {
  const std::uint64_t n = check_header(bytes, kLabelsMagic, source);
  if (bytes.size() - kHeaderBytes != n * 4)
    throw DataError(std::string(source) + ": label payload size mismatch");
  const auto* body =
      reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = get_u32(body + 4 * i);
  return labels;
}

std::vector<std::uint8_t> decode_splits(std::string_view bytes,
                                        std::string_view source) {
  const std::uint64_t n = check_header(bytes, kSplitsMagic, source);
  if (bytes.size() - kHeaderBytes != n)
    throw DataError(std::string(source) + ": split payload size mismatch");
  std::vector<std::uint8_t> splits(bytes.begin() + kHeaderBytes, bytes.end());
  for (std::size_t i = 0; i < n; ++i)
    if (splits[i] > 2)
      throw DataError(std::string(source) + ": invalid split tag " +
                      std::to_string(splits[i]) + " at row " +
                      std::to_string(i));
  return splits;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string crc32_hex(std::string_view bytes) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", crc32(bytes));
  return buf;
}

}  // namespace protoclass::io
