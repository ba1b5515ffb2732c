#include "objcrop/ppm.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <string>

#include "objcrop/errors.hpp"

namespace objcrop {

namespace {

[[noreturn]] void fail(const char* what, std::size_t offset) {
  throw ParseError(std::string("ppm: ") + what + " at byte " + std::to_string(offset));
}

// Skips whitespace and '#' comments between header tokens.
void skip_space(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      return;
    }
  }
}

long parse_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* what) {
  skip_space(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) fail(what, pos);
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000'000L) fail(what, pos);
    ++pos;
  }
  return v;
}

}  // namespace

std::vector<std::uint8_t> ppm_write(const ImageRGB& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

ImageRGB ppm_read(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("bad magic, expected P6", 0);
  pos = 2;
  const long w = parse_int(bytes, pos, "bad width");
  const long h = parse_int(bytes, pos, "bad height");
  if (w < 1 || h < 1) fail("non-positive dimensions", pos);
  const std::size_t maxval_pos = pos;
  const long maxval = parse_int(bytes, pos, "bad maxval");
  if (maxval != 255) fail("unsupported maxval, expected 255", maxval_pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    fail("expected single whitespace after maxval", pos);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) fail("unexpected end of data", bytes.size());
  ImageRGB img(static_cast<int>(w), static_cast<int>(h));
  std::copy_n(bytes.begin() + pos, need, img.data.begin());
  return img;
}

ImageRGB ppm_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInputError("cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return ppm_read(bytes);
}

void ppm_save(const ImageRGB& img, const std::filesystem::path& path) {
  const auto bytes = ppm_write(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw MissingInputError("cannot write image: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

}  // namespace objcrop
