#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protoclass/tensor.hpp"

// Versioned little-endian payloads shared by embedding directories and
// prototype banks.
//
//   features: "PWEB" u32 version, u64 n, u32 d, n*d f32 (row-major)
//   labels:   "PWLB" u32 version, u64 n, n u32
//   splits:   "PWSP" u32 version, u64 n, n u8 (0=train 1=val 2=test)

namespace protoclass::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::array<char, 4> kFeaturesMagic{'P', 'W', 'E', 'B'};
inline constexpr std::array<char, 4> kLabelsMagic{'P', 'W', 'L', 'B'};
inline constexpr std::array<char, 4> kSplitsMagic{'P', 'W', 'S', 'P'};

std::string encode_features(const Matrix<float>& features);
std::string encode_labels(const std::vector<std::uint32_t>& labels);
std::string encode_splits(const std::vector<std::uint8_t>& splits);

// `source` names the payload in error messages.
Matrix<float> decode_features(std::string_view bytes, std::string_view source);
std::vector<std::uint32_t> decode_labels(std::string_view bytes,
                                         std::string_view source);
std::vector<std::uint8_t> decode_splits(std::string_view bytes,
                                        std::string_view source);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

std::uint32_t crc32(std::string_view bytes);
std::string crc32_hex(std::string_view bytes);

}  // namespace protoclass::io
