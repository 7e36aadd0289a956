#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tml/tensor.hpp"

namespace tml {

// 8-bit image, channel-major (c,y,x) like the Tensor layout. Frames are
// stored on disk as binary P6 pixmaps, masks as binary P5 graymaps.
struct Image8 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> px;  // channels*height*width

  uint8_t& at(int c, int y, int x) {
    return px[(static_cast<size_t>(c) * height + y) * width + x];
  }
  uint8_t at(int c, int y, int x) const {
    return px[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

void write_ppm(const std::filesystem::path& path, const Image8& img);
Image8 read_ppm(const std::filesystem::path& path);

// Masks: single channel, 0 or 255 on disk.
void write_pgm(const std::filesystem::path& path, const Image8& img);
Image8 read_pgm(const std::filesystem::path& path);

// Conversions between the 8-bit store and [0,1] float tensors (c,h,w).
Tensor to_tensor(const Image8& img);
Image8 to_image8(const Tensor& chw);

}  // namespace tml
