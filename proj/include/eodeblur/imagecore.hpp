#pragma once

// Raster representation, resampling, patch extraction and overlap-blended
// tiling. Pixel values are 32-bit floats, nominally in [0,1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eodeblur/error.hpp"
#include "eodeblur/memory.hpp"

namespace eodeblur {

/// Single-channel float plane, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  tracked_vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    require(w >= 0 && h >= 0, "plane dimensions must be non-negative");
  }

  std::size_t size() const noexcept { return data.size(); }
  float& at(int x, int y) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::span<float> row(int y) noexcept { return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)}; }
  std::span<const float> row(int y) const noexcept {
    return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
  }
};

/// Planar multi-channel raster (1 or 3 channels).
class RasterImage {
 public:
  RasterImage() = default;

  RasterImage(int width, int height, int channels, float fill = 0.0f) : width_(width), height_(height) {
    require(channels == 1 || channels == 3, "raster must have 1 or 3 channels");
    require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
    planes_.reserve(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) planes_.emplace_back(width, height, fill);
  }

  static RasterImage from_planes(std::vector<Plane> planes) {
    require(planes.size() == 1 || planes.size() == 3, "raster must have 1 or 3 channels");
    RasterImage img;
    img.width_ = planes.front().width;
    img.height_ = planes.front().height;
    for (const auto& p : planes)
      require(p.width == img.width_ && p.height == img.height_, "planes must share dimensions");
    img.planes_ = std::move(planes);
    return img;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return static_cast<int>(planes_.size()); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
  bool empty() const noexcept { return planes_.empty() || pixel_count() == 0; }

  Plane& plane(int c) { return planes_.at(static_cast<std::size_t>(c)); }
  const Plane& plane(int c) const { return planes_.at(static_cast<std::size_t>(c)); }
  std::vector<Plane>& planes() noexcept { return planes_; }
  const std::vector<Plane>& planes() const noexcept { return planes_; }

  float at(int x, int y, int c) const noexcept { return planes_[static_cast<std::size_t>(c)].at(x, y); }
  float& at(int x, int y, int c) noexcept { return planes_[static_cast<std::size_t>(c)].at(x, y); }

  /// Bit depth of the file the raster was decoded from (8 unless noted).
  int bit_depth_origin() const noexcept { return bit_depth_origin_; }
  void set_bit_depth_origin(int bits) noexcept { bit_depth_origin_ = bits; }

  bool same_shape(const RasterImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels() == other.channels();
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Plane> planes_;
  int bit_depth_origin_ = 8;
};

/// Capture geometry of the onboard RGB sensor.
struct SensorSpec {
  int width = 2048;
  int height = 1536;
  double gsd_min_m = 37.5;
  double gsd_max_m = 41.0;
  bool jpeg_at_origin = true;

  void validate() const {
    require(width > 0 && height > 0, "sensor dimensions must be positive");
    require(gsd_min_m < gsd_max_m, "sensor GSD range must be increasing");
  }
};

/// Half-sample symmetric reflection of an index into [0, n).
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline Plane luminance(const RasterImage& img) {
  if (img.channels() == 1) return img.plane(0);
  Plane y(img.width(), img.height());
  const auto& r = img.plane(0).data;
  const auto& g = img.plane(1).data;
  const auto& b = img.plane(2).data;
  for (std::size_t i = 0; i < y.size(); ++i)
    y.data[i] = static_cast<float>(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
  return y;
}

inline RasterImage gray_image(Plane p) {
  std::vector<Plane> planes;
  planes.push_back(std::move(p));
  return RasterImage::from_planes(std::move(planes));
}

/// Applies `fn` to each plane and reassembles a raster.
template <class Fn>
RasterImage map_planes(const RasterImage& img, Fn&& fn) {
  std::vector<Plane> out;
  out.reserve(static_cast<std::size_t>(img.channels()));
  for (const auto& p : img.planes()) out.push_back(fn(p));
  auto result = RasterImage::from_planes(std::move(out));
  result.set_bit_depth_origin(img.bit_depth_origin());
  return result;
}

inline Plane downscale(const Plane& p, int factor) {
  require(factor >= 1, "downscale factor must be >= 1");
  require(p.width % factor == 0 && p.height % factor == 0, "image dimensions must be divisible by the downscale factor");
  const int ow = p.width / factor;
  const int oh = p.height / factor;
  Plane out(ow, oh);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) s += p.at(x * factor + dx, y * factor + dy);
      out.at(x, y) = static_cast<float>(s * inv);
    }
  }
  return out;
}

/// Area-average downscale by an integer factor.
inline RasterImage downscale(const RasterImage& img, int factor) {
  return map_planes(img, [factor](const Plane& p) { return downscale(p, factor); });
}

/// Bilinear upscale by an integer factor with pixel-center alignment.
inline Plane upscale(const Plane& p, int factor) {
  require(factor >= 1, "upscale factor must be >= 1");
  if (factor == 1) return p;
  const int ow = p.width * factor;
  const int oh = p.height * factor;
  Plane out(ow, oh);
  std::vector<int> x0(static_cast<std::size_t>(ow)), x1(static_cast<std::size_t>(ow));
  std::vector<float> fx(static_cast<std::size_t>(ow));
  for (int x = 0; x < ow; ++x) {
    const double sx = std::clamp((x + 0.5) / factor - 0.5, 0.0, static_cast<double>(p.width - 1));
    const int ix = std::min(static_cast<int>(sx), p.width - 1);
    x0[x] = ix;
    x1[x] = std::min(ix + 1, p.width - 1);
    fx[x] = static_cast<float>(sx - ix);
  }
  for (int y = 0; y < oh; ++y) {
    const double sy = std::clamp((y + 0.5) / factor - 0.5, 0.0, static_cast<double>(p.height - 1));
    const int iy = std::min(static_cast<int>(sy), p.height - 1);
    const int iy1 = std::min(iy + 1, p.height - 1);
    const float fy = static_cast<float>(sy - iy);
    const auto r0 = p.row(iy);
    const auto r1 = p.row(iy1);
    auto dst = out.row(y);
    for (int x = 0; x < ow; ++x) {
      const float top = r0[x0[x]] + fx[x] * (r0[x1[x]] - r0[x0[x]]);
      const float bottom = r1[x0[x]] + fx[x] * (r1[x1[x]] - r1[x0[x]]);
      dst[x] = top + fy * (bottom - top);
    }
  }
  return out;
}

inline RasterImage upscale(const RasterImage& img, int factor) {
  return map_planes(img, [factor](const Plane& p) { return upscale(p, factor); });
}

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const Rect&) const = default;
};

inline Plane crop(const Plane& p, const Rect& r) {
  require(r.x >= 0 && r.y >= 0 && r.w >= 0 && r.h >= 0 && r.x + r.w <= p.width && r.y + r.h <= p.height,
          "crop rectangle outside the plane");
  Plane out(r.w, r.h);
  for (int y = 0; y < r.h; ++y) {
    const auto src = p.row(r.y + y).subspan(static_cast<std::size_t>(r.x), static_cast<std::size_t>(r.w));
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

inline RasterImage crop(const RasterImage& img, const Rect& r) {
  return map_planes(img, [&r](const Plane& p) { return crop(p, r); });
}

/// Grows a plane by reflecting its content (half-sample symmetric).
inline Plane reflect_pad(const Plane& p, int left, int top, int right, int bottom) {
  Plane out(p.width + left + right, p.height + top + bottom);
  for (int y = 0; y < out.height; ++y) {
    const auto src = p.row(reflect_index(y - top, p.height));
    auto dst = out.row(y);
    for (int x = 0; x < out.width; ++x) dst[x] = src[reflect_index(x - left, p.width)];
  }
  return out;
}

inline RasterImage reflect_pad(const RasterImage& img, int left, int top, int right, int bottom) {
  return map_planes(img, [&](const Plane& p) { return reflect_pad(p, left, top, right, bottom); });
}

inline std::size_t patch_count(int width, int height, int size, int stride) {
  if (size > width || size > height) return 0;
  return static_cast<std::size_t>((height - size) / stride + 1) * static_cast<std::size_t>((width - size) / stride + 1);
}

/// Row-major enumeration of the fully interior size x size patches.
inline std::vector<RasterImage> extract_patches(const RasterImage& img, int size, int stride) {
  require(size >= 1 && stride >= 1, "patch size and stride must be positive");
  require(size <= std::min(img.width(), img.height()), "patch size exceeds image");
  std::vector<RasterImage> patches;
  patches.reserve(patch_count(img.width(), img.height(), size, stride));
  for (int y = 0; y + size <= img.height(); y += stride)
    for (int x = 0; x + size <= img.width(); x += stride) patches.push_back(crop(img, {x, y, size, size}));
  return patches;
}

// ---------------------------------------------------------------------------
// Tiling

struct TileGrid {
  int width = 0;
  int height = 0;
  int tile_size = 0;
  int overlap = 0;
  int columns = 0;
  int rows = 0;
  std::vector<int> column_x;  ///< left edge of each tile column
  std::vector<int> column_w;
  std::vector<int> row_y;
  std::vector<int> row_h;
  std::vector<Rect> tiles;    ///< row-major

  std::size_t size() const noexcept { return tiles.size(); }
};

namespace detail {
inline void plan_axis(int extent, int tile, int overlap, std::vector<int>& starts, std::vector<int>& lengths) {
  starts.clear();
  lengths.clear();
  if (extent <= tile) {
    starts.push_back(0);
    lengths.push_back(extent);
    return;
  }
  const int stride = tile - overlap;
  const int count = (extent - overlap + stride - 1) / stride;
  for (int i = 0; i < count; ++i) {
    const int s = i * stride;
    starts.push_back(s);
    lengths.push_back(std::min(tile, extent - s));
  }
}
}  // namespace detail

inline TileGrid plan_tiles(int width, int height, int tile_size, int overlap) {
  require(width > 0 && height > 0, "image dimensions must be positive");
  require(overlap >= 0 && tile_size > overlap, "tiling requires tile_size > overlap >= 0");
  TileGrid g;
  g.width = width;
  g.height = height;
  g.tile_size = tile_size;
  g.overlap = overlap;
  detail::plan_axis(width, tile_size, overlap, g.column_x, g.column_w);
  detail::plan_axis(height, tile_size, overlap, g.row_y, g.row_h);
  g.columns = static_cast<int>(g.column_x.size());
  g.rows = static_cast<int>(g.row_y.size());
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.columns; ++c) g.tiles.push_back({g.column_x[c], g.row_y[r], g.column_w[c], g.row_h[r]});
  return g;
}

inline nlohmann::json to_json(const TileGrid& g) {
  nlohmann::json tiles = nlohmann::json::array();
  for (const auto& t : g.tiles) tiles.push_back({t.x, t.y, t.w, t.h});
  return {{"schema_version", 1}, {"width", g.width},   {"height", g.height}, {"tile_size", g.tile_size},
          {"overlap", g.overlap}, {"columns", g.columns}, {"rows", g.rows},     {"tiles", tiles}};
}

inline std::vector<RasterImage> crop_tiles(const RasterImage& img, const TileGrid& grid) {
  require(img.width() == grid.width && img.height() == grid.height, "grid does not match image");
  std::vector<RasterImage> out;
  out.reserve(grid.size());
  for (const auto& t : grid.tiles) out.push_back(crop(img, t));
  return out;
}

namespace detail {
// Per-axis blend weights: raised-cosine ramps over the bands shared with a
// neighbour, flat elsewhere, normalized so that the weights of all tiles
// covering a coordinate sum to one.
inline std::vector<std::vector<float>> axis_weights(const std::vector<int>& starts, const std::vector<int>& lengths,
                                                    int extent, int overlap) {
  const std::size_t n = starts.size();
  std::vector<std::vector<double>> raw(n);
  std::vector<double> total(static_cast<std::size_t>(extent), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i].assign(static_cast<std::size_t>(lengths[i]), 1.0);
    for (int u = 0; u < lengths[i]; ++u) {
      double w = 1.0;
      if (overlap > 0 && i > 0 && u < overlap) w *= 0.5 - 0.5 * std::cos(std::numbers::pi * (u + 0.5) / overlap);
      const int v = u - (lengths[i] - overlap);
      if (overlap > 0 && i + 1 < n && v >= 0) w *= 0.5 + 0.5 * std::cos(std::numbers::pi * (v + 0.5) / overlap);
      raw[i][static_cast<std::size_t>(u)] = w;
      total[static_cast<std::size_t>(starts[i] + u)] += w;
    }
  }
  std::vector<std::vector<float>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].resize(raw[i].size());
    for (std::size_t u = 0; u < raw[i].size(); ++u)
      out[i][u] = static_cast<float>(raw[i][u] / total[static_cast<std::size_t>(starts[i]) + u]);
  }
  return out;
}
}  // namespace detail

/// Incremental partition-of-unity blender. Tiles are accumulated in the
/// order they are added; callers that need bit-reproducible output add them
/// in grid order.
class Stitcher {
 public:
  Stitcher(const TileGrid& grid, int channels)
      : grid_(grid), out_(grid.width, grid.height, channels, 0.0f),
        wx_(detail::axis_weights(grid.column_x, grid.column_w, grid.width, grid.overlap)),
        wy_(detail::axis_weights(grid.row_y, grid.row_h, grid.height, grid.overlap)) {}

  void add(std::size_t index, const RasterImage& tile) {
    require(index < grid_.size(), "tile index out of range");
    const Rect& r = grid_.tiles[index];
    require(tile.width() == r.w && tile.height() == r.h && tile.channels() == out_.channels(),
            "tile shape does not match grid rectangle");
    const auto& wx = wx_[index % static_cast<std::size_t>(grid_.columns)];
    const auto& wy = wy_[index / static_cast<std::size_t>(grid_.columns)];
    for (int c = 0; c < out_.channels(); ++c) {
      const Plane& src = tile.plane(c);
      Plane& dst = out_.plane(c);
      for (int y = 0; y < r.h; ++y) {
        const float ky = wy[static_cast<std::size_t>(y)];
        const auto s = src.row(y);
        auto d = dst.row(r.y + y);
        for (int x = 0; x < r.w; ++x) d[r.x + x] += (wx[static_cast<std::size_t>(x)] * ky) * s[x];
      }
    }
  }

  const RasterImage& image() const noexcept { return out_; }
  RasterImage release() { return std::move(out_); }

 private:
  const TileGrid& grid_;
  RasterImage out_;
  std::vector<std::vector<float>> wx_;
  std::vector<std::vector<float>> wy_;
};

inline RasterImage stitch(const std::vector<RasterImage>& tiles, const TileGrid& grid) {
  require(tiles.size() == grid.size(), "tile count does not match grid");
  require(!tiles.empty(), "no tiles to stitch");
  Stitcher s(grid, tiles.front().channels());
  for (std::size_t i = 0; i < tiles.size(); ++i) s.add(i, tiles[i]);
  return s.release();
}

}  // namespace eodeblur
