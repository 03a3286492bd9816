#include "dds/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dds {

void Raster::fill(uint8_t r, uint8_t g, uint8_t b) {
  for (size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
}

void Raster::set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
  size_t i = 3 * (static_cast<size_t>(y) * width + x);
  rgb[i] = r;
  rgb[i + 1] = g;
  rgb[i + 2] = b;
}

Shape shape_from_string(const std::string& s) {
  if (s == "circle") return Shape::kCircle;
  if (s == "square") return Shape::kSquare;
  if (s == "triangle") return Shape::kTriangle;
  if (s == "diamond") return Shape::kDiamond;
  throw std::invalid_argument("unknown shape: " + s);
}

std::string to_string(Shape s) {
  switch (s) {
    case Shape::kCircle: return "circle";
    case Shape::kSquare: return "square";
    case Shape::kTriangle: return "triangle";
    case Shape::kDiamond: return "diamond";
  }
  return "circle";
}

void draw_shape(Raster& img, const Box& box, Shape shape,
                const std::array<uint8_t, 3>& color) {
  Corners c = corners(box);
  int x1 = std::max(0, static_cast<int>(std::floor(c.x1 * img.width)));
  int y1 = std::max(0, static_cast<int>(std::floor(c.y1 * img.height)));
  int x2 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x2 * img.width)) - 1);
  int y2 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y2 * img.height)) - 1);
  double cx = box.cx * img.width, cy = box.cy * img.height;
  double rx = std::max(0.5, box.w * img.width / 2.0);
  double ry = std::max(0.5, box.h * img.height / 2.0);

  for (int y = y1; y <= y2; ++y) {
    for (int x = x1; x <= x2; ++x) {
      double dx = (x + 0.5 - cx) / rx;
      double dy = (y + 0.5 - cy) / ry;
      bool inside = false;
      switch (shape) {
        case Shape::kCircle:
          inside = dx * dx + dy * dy <= 1.0;
          break;
        case Shape::kSquare:
          inside = true;
          break;
        case Shape::kTriangle:
          // apex at top center, base at the bottom edge
          inside = dy >= -1.0 && dy <= 1.0 && std::abs(dx) <= (dy + 1.0) / 2.0;
          break;
        case Shape::kDiamond:
          inside = std::abs(dx) + std::abs(dy) <= 1.0;
          break;
      }
      if (inside) img.set(x, y, color[0], color[1], color[2]);
    }
  }
}

void write_ppm(const std::filesystem::path& path, const Raster& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

Raster read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) {
    throw std::runtime_error("unsupported PPM file: " + path.string());
  }
  in.get();  // single whitespace after the header
  Raster img{w, h, std::vector<uint8_t>(static_cast<size_t>(3) * w * h)};
  in.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw std::runtime_error("truncated PPM file: " + path.string());
  return img;
}

Mat raster_to_input(const Raster& img) {
  Mat m(3, static_cast<Eigen::Index>(img.width) * img.height);
  for (int p = 0; p < img.width * img.height; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      m(ch, p) = img.rgb[3 * static_cast<size_t>(p) + ch] / 255.0;
    }
  }
  return m;
}

}  // namespace dds
