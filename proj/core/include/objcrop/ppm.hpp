#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "objcrop/image.hpp"

namespace objcrop {

/// Binary NetPBM P6, maxval 255. The only raster format in this project;
/// write/read round-trips are bit-exact.
std::vector<std::uint8_t> ppm_write(const ImageRGB& img);

/// Parses a P6 buffer; throws ParseError naming the byte offset on malformed
/// magic, dimensions, maxval, or truncated pixel payload.
ImageRGB ppm_read(const std::vector<std::uint8_t>& bytes);

ImageRGB ppm_load(const std::filesystem::path& path);
void ppm_save(const ImageRGB& img, const std::filesystem::path& path);

}  // namespace objcrop
