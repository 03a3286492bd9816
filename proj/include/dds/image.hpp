#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dds/geometry.hpp"
#include "dds/tape.hpp"

namespace dds {

// 8-bit RGB raster, row-major pixels.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height

  void fill(uint8_t r, uint8_t g, uint8_t b);
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b);
};

enum class Shape { kCircle, kSquare, kTriangle, kDiamond };

Shape shape_from_string(const std::string& s);
std::string to_string(Shape s);

// Draws a filled shape inscribed in the normalized box.
void draw_shape(Raster& img, const Box& box, Shape shape,
                const std::array<uint8_t, 3>& color);

// Lossless binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const Raster& img);
Raster read_ppm(const std::filesystem::path& path);

// 3 x (H*W) matrix with values in [0, 1], channel per row.
Mat raster_to_input(const Raster& img);

}  // namespace dds
