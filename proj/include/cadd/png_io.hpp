#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cadd/image.hpp"

namespace cadd::png {

/// 8-bit PNG with 1 (gray), 3 (RGB) or 4 (RGBA) channels.
void write8(const std::filesystem::path& path, const Image<std::uint8_t>& img);
Image<std::uint8_t> read8(const std::filesystem::path& path);

/// 16-bit single-channel PNG.
void write16(const std::filesystem::path& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read16(const std::filesystem::path& path);

std::vector<std::uint8_t> encode8(const Image<std::uint8_t>& img);
Image<std::uint8_t> decode8(const std::vector<std::uint8_t>& bytes);

}  // namespace cadd::png
