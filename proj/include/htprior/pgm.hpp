#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

// 8-bit grayscale raster. Binary rasters store 0/1; PGM files store 0/255.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;

  std::size_t count_nonzero() const {
    std::size_t n = 0;
    for (auto v : pixels) n += v != 0;
    return n;
  }
};

using Raster = GrayImage;

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Binary raster {0,1} written as {0,255}.
inline void write_binary_pgm(const std::filesystem::path& path, const Raster& r) {
  GrayImage g(r.width, r.height);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) g.pixels[i] = r.pixels[i] ? 255 : 0;
  write_pgm(path, g);
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto token = [&]() -> std::string {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    const auto maxval = std::stoul(token());
    if (maxval == 0 || maxval > 255) throw IoError(path.string() + ": unsupported maxval");
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw IoError(path.string() + ": truncated pixel data");
  return img;
}

inline Raster read_binary_pgm(const std::filesystem::path& path) {
  Raster r = read_pgm(path);
  for (auto& v : r.pixels) {
    if (v != 0 && v != 255) throw IoError(path.string() + ": raster is not binary (values must be 0 or 255)");
    v = v ? 1 : 0;
  }
  return r;
}

// [H, W, 1] tensor with values in [0, 1].
template <typename T = float>
BasicTensor<T> to_tensor(const GrayImage& img, double scale = 1.0) {
  BasicTensor<T> t(Shape{img.height, img.width, 1});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<T>(img.pixels[i] * scale);
  return t;
}

template <typename T>
GrayImage to_gray(const BasicTensor<T>& t) {
  GrayImage g(t.dim(1), t.dim(0));
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(t[i * t.dim(2)]), 0.0, 1.0);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return g;
}

}  // namespace htprior
