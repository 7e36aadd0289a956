#include "tml/image.hpp"

#include <cmath>
#include <fstream>

#include "tml/common.hpp"

namespace tml {

namespace {

void write_pnm(const std::filesystem::path& path, const Image8& img, bool color) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << (color ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  // PNM order is (y,x,c); the store is (c,y,x).
  const int nc = color ? 3 : 1;
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * nc);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < nc; ++c) row[static_cast<size_t>(x) * nc + c] = img.at(c, y, x);
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  in >> v;
  return v;
}

Image8 read_pnm(const std::filesystem::path& path, bool color) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string magic;
  in >> magic;
  const std::string expect = color ? "P6" : "P5";
  if (magic != expect) {
    throw std::runtime_error(path.string() + ": expected " + expect + ", got " + magic);
  }
  int w = read_pnm_token(in);
  int h = read_pnm_token(in);
  int maxval = read_pnm_token(in);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error(path.string() + ": unsupported pnm header");
  }
  in.get();  // single whitespace before raster
  const int nc = color ? 3 : 1;
  Image8 img{nc, h, w, std::vector<uint8_t>(static_cast<size_t>(nc) * h * w)};
  std::vector<uint8_t> row(static_cast<size_t>(w) * nc);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error(path.string() + ": truncated raster");
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < nc; ++c) img.at(c, y, x) = row[static_cast<size_t>(x) * nc + c];
    }
  }
  return img;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: need 3 channels");
  write_pnm(path, img, true);
}

Image8 read_ppm(const std::filesystem::path& path) { return read_pnm(path, true); }

void write_pgm(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1) throw std::invalid_argument("write_pgm: need 1 channel");
  write_pnm(path, img, false);
}

Image8 read_pgm(const std::filesystem::path& path) { return read_pnm(path, false); }

Tensor to_tensor(const Image8& img) {
  Tensor t({img.channels, img.height, img.width});
  for (size_t i = 0; i < img.px.size(); ++i) t.data[i] = img.px[i] / 255.0;
  return t;
}

Image8 to_image8(const Tensor& chw) {
  if (chw.rank() != 3) throw std::invalid_argument("to_image8: need rank-3 tensor");
  Image8 img{chw.dim(0), chw.dim(1), chw.dim(2), std::vector<uint8_t>(chw.numel())};
  for (size_t i = 0; i < chw.data.size(); ++i) {
    double v = chw.data[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    img.px[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

}  // namespace tml
