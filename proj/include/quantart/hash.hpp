#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace quantart {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Whitespace is ignored. Throws ValueError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace quantart
