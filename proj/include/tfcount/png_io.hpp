#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tfcount/types.hpp"

namespace tfcount::png {

/// Any PNG libpng understands, converted to 8-bit RGB.
Image decode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode(const Image& image);

Image read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image& image);

}  // namespace tfcount::png
