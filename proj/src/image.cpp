#include "spherecal/image.hpp"

#include "spherecal/types.hpp"

#include <png.h>

#include <cstdio>
#include <deque>
#include <fstream>
#include <memory>

namespace spherecal {

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  while (in) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

ImageU8 read_pgm(std::istream& in, const std::string& path) {
  const int w = read_pnm_token(in);
  const int h = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw CalibError("IoFailure", "bad PGM header in " + path);
  in.get();  // single whitespace byte before raster
  ImageU8 img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!in) throw CalibError("IoFailure", "truncated PGM raster in " + path);
  return img;
}

ImageU8 read_png_file(const std::string& path) {
  std::unique_ptr<FILE, decltype(&fclose)> fp(fopen(path.c_str(), "rb"),
                                              &fclose);
  if (!fp) throw CalibError("IoFailure", "cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CalibError("IoFailure", "libpng failed reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  // Normalize everything to 8-bit gray.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  ImageU8 img(static_cast<int>(png_get_image_width(png, info)),
              static_cast<int>(png_get_image_height(png, info)));
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.data.data() + static_cast<size_t>(y) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

ImageU8 read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(in, path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
    in.close();
    return read_png_file(path);
  }
  throw CalibError("IoFailure", "unsupported image format: " + path);
}

void write_pgm(const ImageU8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CalibError("IoFailure", "cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw CalibError("IoFailure", "short write to " + path);
}

void write_png(const ImageU8& img, const std::string& path) {
  std::unique_ptr<FILE, decltype(&fclose)> fp(fopen(path.c_str(), "wb"),
                                              &fclose);
  if (!fp) throw CalibError("IoFailure", "cannot write " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw CalibError("IoFailure", "libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data()) +
              static_cast<size_t>(y) * img.width;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 erode(const ImageU8& mask, int radius) {
  if (radius <= 0) return mask;
  ImageU8 out(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!is_foreground(mask.at(x, y))) continue;
      bool keep = true;
      for (int dy = -radius; keep && dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (!mask.in_bounds(nx, ny) || !is_foreground(mask.at(nx, ny))) {
            keep = false;
            break;
          }
        }
      }
      if (keep) out.at(x, y) = kForeground;
    }
  }
  return out;
}

std::vector<ImageU8> segment_by_threshold(const ImageU8& gray,
                                          std::uint8_t thresh, int min_area) {
  std::vector<int> label(gray.data.size(), -1);
  struct Comp {
    ImageU8 mask;
    int area = 0;
  };
  std::vector<Comp> comps;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < gray.height; ++y) {
    for (int x = 0; x < gray.width; ++x) {
      if (gray.at(x, y) < thresh || label[y * gray.width + x] >= 0) continue;
      const int id = static_cast<int>(comps.size());
      comps.push_back({ImageU8(gray.width, gray.height, 0), 0});
      queue.push_back({x, y});
      label[y * gray.width + x] = id;
      while (!queue.empty()) {
        auto [px, py] = queue.front();
        queue.pop_front();
        comps[id].mask.at(px, py) = kForeground;
        ++comps[id].area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if (!gray.in_bounds(nx, ny)) continue;
            if (gray.at(nx, ny) < thresh) continue;
            if (label[ny * gray.width + nx] >= 0) continue;
            label[ny * gray.width + nx] = id;
            queue.push_back({nx, ny});
          }
        }
      }
    }
  }
  std::vector<ImageU8> out;
  std::stable_sort(comps.begin(), comps.end(),
                   [](const Comp& a, const Comp& b) { return a.area > b.area; });
  for (auto& c : comps)
    if (c.area >= min_area) out.push_back(std::move(c.mask));
  return out;
}

}  // namespace spherecal
