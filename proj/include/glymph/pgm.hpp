#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glymph/tensor.hpp"

namespace glymph {

/// 16-bit binary PGM ("P5", maxval 65535, big-endian samples).
void write_pgm16(const std::vector<std::uint16_t>& pixels, int height, int width,
                 const std::string& path);

struct Pgm16 {
  int height = 0, width = 0;
  std::vector<std::uint16_t> pixels;
};

Pgm16 read_pgm16(const std::string& path);

/// Exports a 2-D slice with values in [0, 1] as 16-bit grayscale;
/// pixel = round(v * 65535). Out-of-range values are an error.
template <typename S>
void export_image(const Tensor<S>& slice, const std::string& path) {
  if (slice.rank() != 2)
    fail(ErrorKind::Shape, "export_image: expected a 2-D slice, got " + slice.shape_string());
  const int h = slice.extent(0), w = slice.extent(1);
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(slice.size()));
  for (Eigen::Index i = 0; i < slice.size(); ++i) {
    const double v = static_cast<double>(slice[i]);
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorKind::Value, "export_image: value " + std::to_string(v) + " outside [0, 1]");
    pixels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_pgm16(pixels, h, w, path);
}

} // namespace glymph
