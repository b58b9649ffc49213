#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spherecal {

/// Single-channel 8-bit image, row-major.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

// Masks are binary: foreground pixels are 255 (values >= 128 are read as
// foreground to tolerate lossy round-trips).
constexpr std::uint8_t kForeground = 255;

inline bool is_foreground(std::uint8_t v) { return v >= 128; }

/// Reads a P5 PGM or an 8-bit grayscale PNG, dispatching on file magic.
ImageU8 read_image(const std::string& path);

void write_pgm(const ImageU8& img, const std::string& path);
void write_png(const ImageU8& img, const std::string& path);

/// Morphological erosion of the foreground with a (2r+1)^2 square element.
ImageU8 erode(const ImageU8& mask, int radius);

/// Threshold + 8-connected components: one binary mask per component with
/// at least min_area pixels, ordered by decreasing area. Fallback segmenter
/// for synthetic grayscale images when no external masks are supplied.
std::vector<ImageU8> segment_by_threshold(const ImageU8& gray,
                                          std::uint8_t thresh,
                                          int min_area = 32);

}  // namespace spherecal
