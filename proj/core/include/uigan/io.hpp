#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uigan::io {

/// Encodes [3, H, W] or [H, W] float in [0, 1] as 8-bit PNG bytes.
std::vector<uint8_t> encode_png(const torch::Tensor& image);
/// Decodes PNG bytes to float [C, H, W] in [0, 1]; C is 3 for colour input
/// and 1 for grayscale. Throws uigan::Error on malformed data.
torch::Tensor decode_png(std::span<const uint8_t> bytes);

void write_png(const std::filesystem::path& path, const torch::Tensor& image);
torch::Tensor read_png(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(std::string_view text);

/// Hex SHA-256 prefix of `bytes` (16 hex digits).
std::string short_digest(std::span<const uint8_t> bytes);

}  // namespace uigan::io
