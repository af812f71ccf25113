#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace lawn::imaging {

/// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * static_cast<size_t>(h) * static_cast<size_t>(c), fill) {
    if (w < 1 || h < 1 || (c != 1 && c != 3))
      throw std::invalid_argument("Image: bad dimensions");
  }

  size_t size() const { return data.size(); }

  uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image& o) const = default;
};

/// Single-channel raster whose samples are constrained to {0, 255}.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  BinaryImage() = default;
  BinaryImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

  bool operator==(const BinaryImage& o) const = default;

  Image to_image() const {
    Image img(width, height, 1);
    img.data = data;
    return img;
  }
};

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

/// Ordered boundary walk of one connected component; consecutive points are
/// 8-connected and the walk closes on itself for lengths > 2.
struct Contour {
  std::vector<Point> points;
};

/// Binary PGM (P5) / PPM (P6) reader and writer, maxval 255, exactly one
/// whitespace byte after each header token. The writer is the byte-exact
/// interchange format used by the golden-image tests.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& img, const std::filesystem::path& path);
void write_pnm(const BinaryImage& img, const std::filesystem::path& path);

}  // namespace lawn::imaging
