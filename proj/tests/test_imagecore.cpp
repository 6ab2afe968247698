#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "eodeblur/imagecore.hpp"
#include "eodeblur/io.hpp"
#include "support.hpp"

using namespace eodeblur;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "eodeblur_imagecore";
  fs::create_directories(dir);
  return dir / name;
}

void write_raw(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Raster, ShapeAndChannels) {
  RasterImage img(5, 3, 3, 0.25f);
  EXPECT_EQ(img.pixel_count() * img.channels(), 45u);
  for (const auto& p : img.planes()) EXPECT_EQ(p.size(), 15u);
  EXPECT_THROW(RasterImage(4, 4, 2), InvalidArgument);
}

TEST(Raster, SensorDefaults) {
  SensorSpec s;
  EXPECT_EQ(s.width, 2048);
  EXPECT_EQ(s.height, 1536);
  EXPECT_DOUBLE_EQ(s.gsd_min_m, 37.5);
  EXPECT_DOUBLE_EQ(s.gsd_max_m, 41.0);
  EXPECT_NO_THROW(s.validate());
  s.gsd_min_m = 42.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Io, LoadsTinyPgm) {
  const auto p = temp_file("tiny.pgm");
  std::vector<std::uint8_t> bytes = {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 128, 255, 64};
  write_raw(p, bytes);
  const RasterImage img = load_raster(p);
  ASSERT_EQ(img.channels(), 1);
  ASSERT_EQ(img.width(), 2);
  EXPECT_FLOAT_EQ(img.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(img.at(1, 0, 0), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(img.at(0, 1, 0), 1.0f);
  EXPECT_FLOAT_EQ(img.at(1, 1, 0), 64.0f / 255.0f);
}

TEST(Io, EmptyAndTruncatedFilesAreErrors) {
  const auto empty = temp_file("empty.png");
  write_raw(empty, {});
  EXPECT_THROW(load_raster(empty), FormatError);
  const auto shortpnm = temp_file("short.ppm");
  write_raw(shortpnm, {'P', '6', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1, 2, 3});
  EXPECT_THROW(load_raster(shortpnm), FormatError);
  const auto zero = temp_file("zero.pgm");
  write_raw(zero, {'P', '5', '\n', '0', ' ', '4', '\n', '2', '5', '5', '\n'});
  EXPECT_THROW(load_raster(zero), FormatError);
  EXPECT_THROW(load_raster(temp_file("does_not_exist.png")), FormatError);
}

TEST(Io, PngAndPnmRoundTripAtSensorSize) {
  const RasterImage img = test::random_image(2048, 1536, 3, 3);
  const auto png = temp_file("big.png");
  save_raster(img, png);
  const RasterImage back = load_raster(png);
  ASSERT_EQ(back.width(), 2048);
  ASSERT_EQ(back.height(), 1536);
  ASSERT_EQ(back.channels(), 3);
  // Quantization to 8 bits bounds the error by half a step.
  EXPECT_LE(test::max_abs_diff(img, back), 0.5 / 255.0 + 1e-6);
  const auto ppm = temp_file("big.ppm");
  save_raster(back, ppm);
  EXPECT_TRUE(test::bit_equal(back, load_raster(ppm)));
}

TEST(Io, EightBitRoundsHalfUpAndClamps) {
  EXPECT_EQ(to_u8(-0.3f), 0);
  EXPECT_EQ(to_u8(1.7f), 255);
  EXPECT_EQ(to_u8(0.5f), 128);  // 127.5 rounds up
  EXPECT_EQ(to_u8(std::nanf("")), 0);
}

TEST(Resample, DownscaleExamples) {
  EXPECT_EQ(downscale(RasterImage(1024, 1024, 1), 4).width(), 256);
  RasterImage c(12, 8, 3, 0.5f);
  for (int f : {1, 2, 4}) {
    const RasterImage d = downscale(c, f);
    for (const auto& p : d.planes())
      for (float v : p.data) EXPECT_FLOAT_EQ(v, 0.5f);
  }
  RasterImage b(2, 2, 1);
  b.at(0, 0, 0) = 0.0f;
  b.at(1, 0, 0) = 1.0f;
  b.at(0, 1, 0) = 1.0f;
  b.at(1, 1, 0) = 0.0f;
  EXPECT_FLOAT_EQ(downscale(b, 2).at(0, 0, 0), 0.5f);
  EXPECT_THROW(downscale(RasterImage(10, 8, 1), 4), InvalidArgument);
}

TEST(Resample, DownscalePreservesMean) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Plane p = test::random_plane(48, 24, seed);
    const Plane d = downscale(p, 4);
    double a = 0, b = 0;
    for (float v : p.data) a += v;
    for (float v : d.data) b += v;
    EXPECT_NEAR(a / p.size(), b / d.size(), 1e-6);
  }
}

TEST(Resample, UpscaleOfConstantIsConstant) {
  const RasterImage up = upscale(RasterImage(5, 7, 1, 0.3f), 4);
  EXPECT_EQ(up.width(), 20);
  EXPECT_EQ(up.height(), 28);
  for (float v : up.plane(0).data) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Patches, CountExamples) {
  EXPECT_EQ(extract_patches(RasterImage(4, 4, 1), 2, 2).size(), 4u);
  EXPECT_EQ(patch_count(2048, 1536, 1024, 512), 6u);
  EXPECT_THROW(extract_patches(RasterImage(4, 4, 1), 5, 1), InvalidArgument);
}

TEST(Patches, CountMatchesFormulaOnRandomDims) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 8 + static_cast<int>(rng() % 40), h = 8 + static_cast<int>(rng() % 40);
    const int size = 1 + static_cast<int>(rng() % std::min(w, h));
    const int stride = 1 + static_cast<int>(rng() % 9);
    const auto patches = extract_patches(RasterImage(w, h, 1), size, stride);
    const std::size_t expected = static_cast<std::size_t>((h - size) / stride + 1) * static_cast<std::size_t>((w - size) / stride + 1);
    EXPECT_EQ(patches.size(), expected);
  }
}

TEST(Patches, RowMajorContent) {
  const RasterImage img = test::random_image(6, 4, 1, 5);
  const auto patches = extract_patches(img, 2, 2);
  ASSERT_EQ(patches.size(), 6u);
  EXPECT_FLOAT_EQ(patches[1].at(0, 0, 0), img.at(2, 0, 0));
  EXPECT_FLOAT_EQ(patches[3].at(1, 1, 0), img.at(1, 3, 0));
}

namespace {

// Every pixel is covered, and neighbouring tiles share exactly `overlap`
// pixels unless the trailing tile is clamped.
void expect_grid_valid(const TileGrid& g) {
  std::vector<int> cover(static_cast<std::size_t>(g.width) * g.height, 0);
  for (const auto& t : g.tiles) {
    ASSERT_GE(t.x, 0);
    ASSERT_LE(t.x + t.w, g.width);
    ASSERT_LE(t.y + t.h, g.height);
    for (int y = t.y; y < t.y + t.h; ++y)
      for (int x = t.x; x < t.x + t.w; ++x) ++cover[static_cast<std::size_t>(y) * g.width + x];
  }
  for (int c : cover) ASSERT_GE(c, 1);
  for (int i = 1; i < g.columns; ++i) EXPECT_EQ(g.column_x[i - 1] + g.column_w[i - 1] - g.column_x[i], g.overlap);
  for (int i = 1; i < g.rows; ++i) EXPECT_EQ(g.row_y[i - 1] + g.row_h[i - 1] - g.row_y[i], g.overlap);
}

}  // namespace

TEST(Tiling, Examples) {
  EXPECT_EQ(plan_tiles(512, 512, 256, 0).size(), 4u);
  const TileGrid big = plan_tiles(2048, 1536, 512, 64);
  expect_grid_valid(big);
  const TileGrid small = plan_tiles(100, 100, 256, 32);
  ASSERT_EQ(small.size(), 1u);
  EXPECT_EQ(small.tiles[0], (Rect{0, 0, 100, 100}));
  EXPECT_THROW(plan_tiles(100, 100, 32, 32), InvalidArgument);
}

TEST(Tiling, GridInvariantsOnRandomShapes) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int tile = 16 + static_cast<int>(rng() % 64);
    const int overlap = static_cast<int>(rng() % tile);
    expect_grid_valid(plan_tiles(1 + static_cast<int>(rng() % 300), 1 + static_cast<int>(rng() % 300), tile, overlap));
  }
}

TEST(Tiling, GridSerializesToJson) {
  const auto j = to_json(plan_tiles(300, 200, 128, 16));
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["tiles"].size(), static_cast<std::size_t>(j["columns"].get<int>() * j["rows"].get<int>()));
}

class StitchRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(StitchRoundTrip, ReconstructsImage) {
  const int overlap = GetParam();
  for (auto [w, h] : {std::pair{300, 200}, std::pair{513, 257}, std::pair{128, 128}}) {
    const RasterImage img = test::random_image(w, h, 3, static_cast<std::uint64_t>(w + overlap));
    const TileGrid g = plan_tiles(w, h, 128, overlap);
    EXPECT_LE(test::max_abs_diff(stitch(crop_tiles(img, g), g), img), 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(Overlaps, StitchRoundTrip, ::testing::Values(0, 16, 64));

TEST(Stitch, ZeroOverlapCopiesExactly) {
  const RasterImage img = test::random_image(100, 60, 1, 8);
  const TileGrid g = plan_tiles(100, 60, 32, 0);
  EXPECT_TRUE(test::bit_equal(stitch(crop_tiles(img, g), g), img));
}

TEST(Stitch, BlendIsMonotoneInsideOverlap) {
  const TileGrid g = plan_tiles(96, 8, 64, 32);
  ASSERT_EQ(g.size(), 2u);
  std::vector<RasterImage> tiles = {RasterImage(64, 8, 1, 0.2f), RasterImage(64, 8, 1, 0.8f)};
  const RasterImage out = stitch(tiles, g);
  float prev = 0.2f;
  for (int x = 32; x < 64; ++x) {
    const float v = out.at(x, 4, 0);
    EXPECT_GT(v, 0.2f);
    EXPECT_LT(v, 0.8f);
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_FLOAT_EQ(out.at(10, 4, 0), 0.2f);
  EXPECT_FLOAT_EQ(out.at(80, 4, 0), 0.8f);
}

TEST(Stitch, SingleTileIsIdentityAndShapesAreChecked) {
  const RasterImage img = test::random_image(40, 30, 3, 2);
  const TileGrid g = plan_tiles(40, 30, 64, 8);
  EXPECT_TRUE(test::bit_equal(stitch({img}, g), img));
  EXPECT_THROW(stitch({RasterImage(39, 30, 3)}, g), InvalidArgument);
}

TEST(Stitch, OrderOfAdditionOnlyAffectsRounding) {
  const RasterImage img = test::random_image(200, 150, 1, 4);
  const TileGrid g = plan_tiles(200, 150, 64, 16);
  const auto tiles = crop_tiles(img, g);
  Stitcher fwd(g, 1), rev(g, 1);
  for (std::size_t i = 0; i < tiles.size(); ++i) fwd.add(i, tiles[i]);
  for (std::size_t i = tiles.size(); i-- > 0;) rev.add(i, tiles[i]);
  EXPECT_LE(test::max_abs_diff(fwd.image(), rev.image()), 1e-6);
}

TEST(Pad, ReflectPadAndCrop) {
  const RasterImage img = test::random_image(7, 5, 1, 9);
  const RasterImage p = reflect_pad(img, 2, 1, 3, 4);
  EXPECT_EQ(p.width(), 12);
  EXPECT_EQ(p.height(), 10);
  EXPECT_TRUE(test::bit_equal(crop(p, {2, 1, 7, 5}), img));
  EXPECT_FLOAT_EQ(p.at(1, 1, 0), img.at(0, 0, 0));  // half-sample mirror
  EXPECT_FLOAT_EQ(p.at(0, 1, 0), img.at(1, 0, 0));
}
