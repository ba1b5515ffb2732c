#pragma once

#include <cstdint>
#include <vector>

#include "objcrop/box.hpp"

namespace objcrop {

/// Owned 8-bit RGB raster, row-major interleaved. data.size() == w*h*3.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const ImageRGB&) const = default;
};

/// Single-channel 8-bit raster (normed-gradient maps and similar).
struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  ImageGray() = default;
  ImageGray(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

/// Bilinear resize with half-pixel centers: the source coordinate of output
/// pixel i is (i + 0.5) * in/out - 0.5, edge-clamped. Interpolation order is
/// fixed for reproducibility: rows first, then columns, i.e.
///   v = (p00*(1-fx) + p10*fx) * (1-fy) + (p01*(1-fx) + p11*fx) * fy,
/// rounded to the nearest byte. Same-size calls return a copy bit-identical
/// to the input.
ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h);
ImageGray resize_bilinear(const ImageGray& img, int out_w, int out_h);

/// Copy of the region, which must lie inside the image.
ImageRGB crop(const ImageRGB& img, const BBox& region);
ImageGray crop(const ImageGray& img, const BBox& region);

ImageRGB flip_horizontal(const ImageRGB& img);

}  // namespace objcrop
