#pragma once

// Raster file I/O: binary PGM (P5) / PPM (P6) with maxval 255, and 8-bit PNG
// through libpng's simplified API.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "eodeblur/error.hpp"
#include "eodeblur/imagecore.hpp"

namespace eodeblur {

/// Float in [0,1] to 8-bit: clamp, then round half up.
inline std::uint8_t to_u8(float v) noexcept {
  if (!(v > 0.0f)) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
}

/// Interleaves a raster into 8-bit samples.
inline std::vector<std::uint8_t> to_interleaved_u8(const RasterImage& img) {
  const int c = img.channels();
  std::vector<std::uint8_t> out(img.pixel_count() * static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const auto& d = img.plane(ch).data;
    for (std::size_t i = 0; i < d.size(); ++i) out[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch)] = to_u8(d[i]);
  }
  return out;
}

inline RasterImage from_interleaved_u8(const std::uint8_t* src, int width, int height, int channels) {
  RasterImage img(width, height, channels);
  for (int ch = 0; ch < channels; ++ch) {
    auto& d = img.plane(ch).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = static_cast<float>(src[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(ch)]) / 255.0f;
  }
  return img;
}

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RasterImage decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("truncated PNM header in " + name);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 30)) throw FormatError("PNM header value out of range in " + name);
      ++pos;
    }
    return v;
  };
  const int channels = bytes[1] == '5' ? 1 : 3;
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w == 0 || h == 0) throw FormatError("zero image dimensions in " + name);
  if (maxval != 255) throw FormatError("only maxval 255 PNM files are supported: " + name);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("truncated PNM header in " + name);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(channels);
  if (bytes.size() - pos < need) throw FormatError("truncated PNM pixel data in " + name);
  return from_interleaved_u8(bytes.data() + pos, static_cast<int>(w), static_cast<int>(h), channels);
}

inline RasterImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError("invalid PNG " + name + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = color ? 3 : 1;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw FormatError("zero image dimensions in " + name);
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
    throw FormatError("corrupt PNG " + name + ": " + image.message);
  return from_interleaved_u8(buffer.data(), static_cast<int>(image.width), static_cast<int>(image.height), channels);
}

inline std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

}  // namespace detail

/// Loads a PGM/PPM (binary, maxval 255) or PNG file, scaled to [0,1].
inline RasterImage load_raster(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const std::string name = path.string();
  if (bytes.empty()) throw FormatError("truncated (empty) file " + name);
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) return detail::decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return detail::decode_pnm(bytes, name);
  if (bytes.size() < 8) throw FormatError("truncated file " + name);
  throw FormatError("unsupported raster format: " + name);
}

inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  require(!img.empty(), "cannot encode an empty raster");
  const auto pixels = to_interleaved_u8(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline std::vector<std::uint8_t> encode_pnm(const RasterImage& img) {
  require(!img.empty(), "cannot encode an empty raster");
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto pixels = to_interleaved_u8(img);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

/// Encodes by extension: .png, otherwise PGM/PPM by channel count.
inline std::vector<std::uint8_t> encode_raster(const RasterImage& img, const std::filesystem::path& path) {
  return detail::lower_extension(path) == ".png" ? encode_png(img) : encode_pnm(img);
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

inline void save_raster(const RasterImage& img, const std::filesystem::path& path) {
  write_bytes(path, encode_raster(img, path));
}

}  // namespace eodeblur
