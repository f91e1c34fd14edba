#pragma once

#include <string>

#include "segsr/tensor.hpp"

namespace segsr {

// 8-bit PNG I/O. Floats in [0,1] scale by 255 with round-half-up on write.
void write_png_rgb8(const std::string& path, const TensorF& img01);   // [3,H,W]
void write_png_gray8(const std::string& path, const IntField& field);  // pixel = class index
TensorF read_png_rgb(const std::string& path);   // -> [3,H,W], /255
IntField read_png_gray(const std::string& path);

inline uint8_t to_u8(float x) {
  const float v = x * 255.0f + 0.5f;
  return uint8_t(std::min(255.0f, std::max(0.0f, std::floor(v))));
}

}  // namespace segsr
