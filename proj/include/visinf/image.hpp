#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace visinf {

// Interleaved 8-bit RGB image, row-major.
struct Image {
  int width{0};
  int height{0};
  static constexpr int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * channels) {}

  std::uint8_t* row(int y) { return pixels.data() + static_cast<std::size_t>(y) * width * channels; }
  const std::uint8_t* row(int y) const {
    return pixels.data() + static_cast<std::size_t>(y) * width * channels;
  }

  bool operator==(const Image&) const = default;
};

// Copies the rectangle [left, right) x [top, bottom) out of `img`.
inline Image crop(const Image& img, int left, int top, int right, int bottom) {
  if (left < 0 || top < 0 || right > img.width || bottom > img.height || left > right || top > bottom) {
    throw std::out_of_range("crop rectangle outside image");
  }
  Image out(right - left, bottom - top);
  for (int y = top; y < bottom; ++y) {
    const auto* src = img.row(y) + static_cast<std::size_t>(left) * Image::channels;
    std::copy(src, src + static_cast<std::size_t>(out.width) * Image::channels, out.row(y - top));
  }
  return out;
}

inline int max_abs_diff(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("image dimensions differ");
  }
  int worst = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    worst = std::max(worst, std::abs(int(a.pixels[i]) - int(b.pixels[i])));
  }
  return worst;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto token = [&in]() {
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
  if (token() != "P6") throw std::runtime_error(path.string() + ": not a binary PPM");
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  if (std::stoi(token()) != 255) throw std::runtime_error(path.string() + ": maxval must be 255");
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  return img;
}

}  // namespace visinf
