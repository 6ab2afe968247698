#pragma once

// Tiled restoration under a memory budget: plan tiles, restore them on a
// bounded worker pool, stitch in grid order, report timing and memory.

#include <algorithm>
#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "eodeblur/config.hpp"
#include "eodeblur/deconv.hpp"
#include "eodeblur/degrade.hpp"
#include "eodeblur/imagecore.hpp"
#include "eodeblur/io.hpp"
#include "eodeblur/memory.hpp"
#include "eodeblur/metrics.hpp"
#include "eodeblur/neural/mimo.hpp"
#include "eodeblur/neural/train.hpp"

namespace eodeblur {

enum class Backend { wiener, richardson_lucy, neural };
enum class ProcessingMode { tile_native, downscale_process_upscale };

inline std::string to_string(Backend b) {
  switch (b) {
    case Backend::wiener: return "wiener";
    case Backend::richardson_lucy: return "richardson_lucy";
    case Backend::neural: return "neural";
  }
  return "?";
}

inline Backend parse_backend(const std::string& s) {
  if (s == "wiener") return Backend::wiener;
  if (s == "richardson_lucy" || s == "rl") return Backend::richardson_lucy;
  if (s == "neural") return Backend::neural;
  throw InvalidArgument("unknown backend '" + s + "' (wiener, richardson_lucy, neural)");
}

inline std::string to_string(ProcessingMode m) {
  return m == ProcessingMode::tile_native ? "tile_native" : "downscale_process_upscale";
}

inline ProcessingMode parse_mode(const std::string& s) {
  if (s == "tile_native") return ProcessingMode::tile_native;
  if (s == "downscale_process_upscale") return ProcessingMode::downscale_process_upscale;
  throw InvalidArgument("unknown mode '" + s + "' (tile_native, downscale_process_upscale)");
}

struct PipelineConfig {
  int tile_size = 256;
  int overlap = 32;
  Backend backend = Backend::wiener;
  double memory_budget_mb = 300.0;
  double virtual_budget_mb = 2048.0;
  int workers = 3;
  ProcessingMode mode = ProcessingMode::downscale_process_upscale;
  int scale_factor = 4;
  // Classical backend settings.
  double nsr = 0.02;
  WienerBoundary wiener_boundary = WienerBoundary::symmetric;
  int rl_iterations = 20;

  void validate() const {
    require(workers >= 1, "workers must be >= 1");
    require(tile_size >= 8 && overlap >= 0 && overlap < tile_size, "tiling requires tile_size >= 8 and 0 <= overlap < tile_size");
    require(memory_budget_mb > 0.0 && virtual_budget_mb > 0.0, "memory budgets must be positive");
    require(scale_factor >= 1, "scale factor must be >= 1");
    require(nsr >= 0.0, "nsr must be non-negative");
    require(rl_iterations >= 1, "Richardson-Lucy iterations must be >= 1");
    if (mode == ProcessingMode::downscale_process_upscale)
      require(tile_size % scale_factor == 0 && overlap % scale_factor == 0, "tile size and overlap must be multiples of the scale factor");
  }
};

inline constexpr const char* kEnvMemoryBudget = "EODEBLUR_MEMORY_BUDGET_MB";
inline constexpr const char* kEnvVirtualBudget = "EODEBLUR_VIRTUAL_BUDGET_MB";
inline constexpr const char* kEnvWorkers = "EODEBLUR_WORKERS";

/// Reads [pipeline] and [deconv] sections over the defaults.
inline PipelineConfig pipeline_config_from_ini(const IniFile& ini) {
  ini.check_keys("pipeline", {"tile_size", "overlap", "backend", "memory_budget_mb", "virtual_budget_mb", "workers", "mode", "scale_factor"});
  ini.check_keys("deconv", {"nsr", "iterations", "boundary"});
  PipelineConfig c;
  ini.read("pipeline", "tile_size", c.tile_size);
  ini.read("pipeline", "overlap", c.overlap);
  if (auto b = ini.get("pipeline", "backend")) c.backend = parse_backend(*b);
  ini.read("pipeline", "memory_budget_mb", c.memory_budget_mb);
  ini.read("pipeline", "virtual_budget_mb", c.virtual_budget_mb);
  ini.read("pipeline", "workers", c.workers);
  if (auto m = ini.get("pipeline", "mode")) c.mode = parse_mode(*m);
  ini.read("pipeline", "scale_factor", c.scale_factor);
  ini.read("deconv", "nsr", c.nsr);
  ini.read("deconv", "iterations", c.rl_iterations);
  if (auto b = ini.get("deconv", "boundary")) {
    if (*b == "periodic") c.wiener_boundary = WienerBoundary::periodic;
    else if (*b == "symmetric") c.wiener_boundary = WienerBoundary::symmetric;
    else throw FormatError("config deconv.boundary must be periodic or symmetric");
  }
  c.validate();
  return c;
}

/// Reads the [train] section over the defaults. Widths are "a,b,c".
inline neural::TrainConfig train_config_from_ini(const IniFile& ini) {
  ini.check_keys("train", {"batch_size", "lr_initial", "lr_step", "lr_gamma", "total_iterations", "fft_loss_weight", "seed", "workers",
                           "widths", "blocks_per_scale"});
  neural::TrainConfig c;
  ini.read("train", "batch_size", c.batch_size);
  ini.read("train", "lr_initial", c.lr_initial);
  ini.read("train", "lr_step", c.lr_step);
  ini.read("train", "lr_gamma", c.lr_gamma);
  ini.read("train", "total_iterations", c.total_iterations);
  ini.read("train", "fft_loss_weight", c.fft_loss_weight);
  ini.read("train", "seed", c.seed);
  ini.read("train", "workers", c.workers);
  ini.read("train", "blocks_per_scale", c.arch.blocks_per_scale);
  if (auto w = ini.get("train", "widths")) {
    std::array<int, 3> v{};
    char sep1 = 0, sep2 = 0;
    std::istringstream in(*w);
    if (!(in >> v[0] >> sep1 >> v[1] >> sep2 >> v[2]) || sep1 != ',' || sep2 != ',' || !(in >> std::ws).eof())
      throw FormatError("config train.widths must look like 8,16,24");
    c.arch.widths = v;
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("config [train]: ") + e.what());
  }
  return c;
}

/// Budget and worker overrides from the environment, when set.
inline void apply_env_overrides(PipelineConfig& c) {
  auto number = [](const char* name) -> std::optional<double> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    const double d = std::strtod(v, &end);
    if (end == v || *end != '\0') throw InvalidArgument(std::string("environment variable ") + name + " is not a number");
    return d;
  };
  if (auto v = number(kEnvMemoryBudget)) c.memory_budget_mb = *v;
  if (auto v = number(kEnvVirtualBudget)) c.virtual_budget_mb = *v;
  if (auto v = number(kEnvWorkers)) c.workers = static_cast<int>(*v);
  c.validate();
}

struct RestoreAssets {
  std::optional<BlurKernel> kernel;
  std::optional<neural::ModelWeights<float>> weights;
};

// ---------------------------------------------------------------------------
// Memory model. Units are 4-byte floats per tile pixel (T = tile side), C
// image channels, counted from the buffers each backend keeps alive at its
// peak. Complex double buffers count 4 floats per element, double buffers 2.
//
//   wiener periodic:  tile in C + out C + OTF 4 + spectrum 4 + result 1 + clamp copy 1  = 2C + 10
//   wiener symmetric: tile in C + out C + OTF 16 + extension 4 + spectrum 16
//                     + result 4 + crop 1                                              = 2C + 41
//   richardson_lucy:  tile in C + out C + OTF 4 + A^T 1 and 1s 4 + y, x, Ax, ratio 8
//                     + adjoint buffer 4 + adjoint result 2 + FFTW scratch 2          = 2C + 24
//   neural:           tile in C + out C + input tensor C + output copies 1.3125 C
//                     + graph values and widest im2col / T^2 (mimo_activation_floats)
//
// downscale_process_upscale with factor f: tile in C + upsampled residual C
// + downscaled tile and its restoration 2C/f^2 + the backend's own working
// set at side T/f divided by f^2.

namespace detail {

inline double backend_floats_per_pixel(Backend b, WienerBoundary boundary, int channels, int side,
                                       const neural::MimoArch* arch) {
  const double c = channels;
  switch (b) {
    case Backend::wiener: return boundary == WienerBoundary::symmetric ? 2 * c + 41 : 2 * c + 10;
    case Backend::richardson_lucy: return 2 * c + 24;
    case Backend::neural: {
      const neural::MimoArch a = arch ? *arch : neural::MimoArch{};
      const int s = (side + 3) / 4 * 4;
      const double area = static_cast<double>(side) * side;
      return 2 * c + c * (static_cast<double>(s) * s) / area * 2.3125 +
             static_cast<double>(neural::mimo_activation_floats(a, s, s)) / area;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Working set of one in-flight tile, in bytes.
inline double tile_working_set_bytes(const PipelineConfig& cfg, int channels, const neural::MimoArch* arch = nullptr) {
  const double t2 = static_cast<double>(cfg.tile_size) * cfg.tile_size;
  if (cfg.mode == ProcessingMode::tile_native)
    return 4.0 * t2 * detail::backend_floats_per_pixel(cfg.backend, cfg.wiener_boundary, channels, cfg.tile_size, arch);
  const double f2 = static_cast<double>(cfg.scale_factor) * cfg.scale_factor;
  const int inner = cfg.tile_size / cfg.scale_factor;
  const double inner_floats = detail::backend_floats_per_pixel(cfg.backend, cfg.wiener_boundary, channels, inner, arch);
  return 4.0 * t2 * (2.0 * channels + 2.0 * channels / f2 + inner_floats / f2);
}

/// Input planes + output planes + workers x tile working set, in MiB.
inline double estimate_peak_mb(const PipelineConfig& cfg, int width, int height, int channels, const neural::MimoArch* arch = nullptr) {
  cfg.validate();
  const double planes = 2.0 * 4.0 * static_cast<double>(width) * height * channels;
  return (planes + cfg.workers * tile_working_set_bytes(cfg, channels, arch)) / (1024.0 * 1024.0);
}

struct RestorationResult {
  RasterImage output;
  double elapsed_seconds = 0.0;
  double estimated_peak_mb = 0.0;
  double measured_peak_mb = 0.0;  ///< tracked allocations, input included
  std::size_t tiles_processed = 0;
  Backend backend = Backend::wiener;
  ProcessingMode mode = ProcessingMode::tile_native;
  int workers = 1;
  std::vector<std::string> warnings;
  std::optional<QualityReport> report;
};

inline nlohmann::json to_json(const RestorationResult& r) {
  nlohmann::json j = {{"schema_version", 1},
                      {"width", r.output.width()},
                      {"height", r.output.height()},
                      {"channels", r.output.channels()},
                      {"elapsed_seconds", r.elapsed_seconds},
                      {"estimated_peak_mb", r.estimated_peak_mb},
                      {"measured_peak_mb", r.measured_peak_mb},
                      {"tiles_processed", r.tiles_processed},
                      {"backend", to_string(r.backend)},
                      {"mode", to_string(r.mode)},
                      {"workers", r.workers},
                      {"warnings", r.warnings}};
  if (r.report) j["report"] = to_json(*r.report);
  return j;
}

namespace detail {

inline RasterImage clamp01(RasterImage img) {
  for (auto& p : img.planes())
    for (auto& v : p.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

inline RasterImage run_backend(const RasterImage& tile, const PipelineConfig& cfg, const RestoreAssets& assets, const BlurKernel* kernel) {
  switch (cfg.backend) {
    case Backend::wiener: {
      // Kernels wider than a small tile are cropped to the tile.
      const int limit = std::min(tile.width(), tile.height());
      const BlurKernel k = kernel->size() <= limit ? *kernel : kernel->resized(limit % 2 ? limit : limit - 1);
      return wiener(tile, k, cfg.nsr, cfg.wiener_boundary);
    }
    case Backend::richardson_lucy: {
      const int limit = std::min(tile.width(), tile.height());
      const BlurKernel k = kernel->size() <= limit ? *kernel : kernel->resized(limit % 2 ? limit : limit - 1);
      return clamp01(richardson_lucy(tile, k, cfg.rl_iterations));
    }
    case Backend::neural: {
      const int pw = (4 - tile.width() % 4) % 4, ph = (4 - tile.height() % 4) % 4;
      RasterImage out;
      if (pw || ph) {
        const RasterImage padded = reflect_pad(tile, 0, 0, pw, ph);
        out = crop(neural::to_raster(neural::mimo_forward(*assets.weights, neural::from_raster(padded))[0]), Rect{0, 0, tile.width(), tile.height()});
      } else {
        out = neural::to_raster(neural::mimo_forward(*assets.weights, neural::from_raster(tile))[0]);
      }
      return clamp01(std::move(out));
    }
  }
  return tile;
}

}  // namespace detail

/// Restores one tile according to the configured mode.
inline RasterImage restore_tile(const RasterImage& tile, const PipelineConfig& cfg, const RestoreAssets& assets,
                                const BlurKernel* scaled_kernel) {
  if (cfg.mode == ProcessingMode::tile_native) return detail::run_backend(tile, cfg, assets, assets.kernel ? &*assets.kernel : nullptr);
  // Residual transfer: the low-resolution correction is upsampled and added
  // to the full-resolution tile, so an identity backend is exact.
  const int f = cfg.scale_factor;
  const int pw = (f - tile.width() % f) % f, ph = (f - tile.height() % f) % f;
  const bool pad = pw || ph;
  const RasterImage padded = pad ? reflect_pad(tile, 0, 0, pw, ph) : RasterImage{};
  const RasterImage& src = pad ? padded : tile;
  const RasterImage low = downscale(src, f);
  RasterImage correction = detail::run_backend(low, cfg, assets, scaled_kernel);
  for (int c = 0; c < low.channels(); ++c) {
    auto& d = correction.plane(c).data;
    const auto& l = low.plane(c).data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= l[i];
  }
  RasterImage out = upscale(correction, f);
  correction = RasterImage{};
  for (int c = 0; c < out.channels(); ++c) {
    auto& o = out.plane(c).data;
    const auto& s = src.plane(c).data;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(o[i] + s[i], 0.0f, 1.0f);
  }
  return pad ? crop(out, Rect{0, 0, tile.width(), tile.height()}) : out;
}

namespace detail {
inline void check_assets(const PipelineConfig& cfg, const RestoreAssets& assets, int channels) {
  if (cfg.backend == Backend::neural) {
    if (!assets.weights) throw InvalidArgument("neural backend requires model weights");
    assets.weights->validate();
    if (assets.weights->arch.channels != channels)
      throw InvalidArgument("model expects " + std::to_string(assets.weights->arch.channels) + " channels, image has " + std::to_string(channels));
  } else if (!assets.kernel) {
    throw InvalidArgument(to_string(cfg.backend) + " backend requires a blur kernel");
  }
}
}  // namespace detail

/// Tiled restoration. Tiles are restored by `workers` threads, at most
/// `workers` tiles ahead of the stitcher, and blended in grid order, so the
/// output is independent of scheduling. Fails before any tile work when the
/// estimate exceeds the virtual budget.
inline RestorationResult restore(const RasterImage& img, const PipelineConfig& cfg, const RestoreAssets& assets,
                                 const RasterImage* reference = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  require(img.width() > 0 && img.height() > 0, "cannot restore an empty image");
  detail::check_assets(cfg, assets, img.channels());

  RestorationResult res;
  res.backend = cfg.backend;
  res.mode = cfg.mode;
  res.workers = cfg.workers;
  const neural::MimoArch* arch = assets.weights ? &assets.weights->arch : nullptr;
  res.estimated_peak_mb = estimate_peak_mb(cfg, img.width(), img.height(), img.channels(), arch);
  if (res.estimated_peak_mb > cfg.virtual_budget_mb)
    throw BudgetExceeded("estimated peak " + std::to_string(res.estimated_peak_mb) + " MB exceeds the virtual budget of " +
                         std::to_string(cfg.virtual_budget_mb) + " MB");
  if (res.estimated_peak_mb > cfg.memory_budget_mb)
    res.warnings.push_back("estimated peak " + std::to_string(res.estimated_peak_mb) + " MB exceeds the RAM budget of " +
                           std::to_string(cfg.memory_budget_mb) + " MB");

  const std::int64_t input_bytes = static_cast<std::int64_t>(img.pixel_count() * img.channels() * sizeof(float));
  const std::int64_t baseline = memory::current_bytes();
  memory::reset_peak();

  std::optional<BlurKernel> scaled;
  if (assets.kernel && cfg.mode == ProcessingMode::downscale_process_upscale) scaled = downscale_kernel(*assets.kernel, cfg.scale_factor);

  const TileGrid grid = plan_tiles(img.width(), img.height(), cfg.tile_size, cfg.overlap);
  Stitcher stitcher(grid, img.channels());
  const std::size_t n = grid.size();
  std::vector<std::optional<RasterImage>> done(n);
  std::mutex m;
  std::condition_variable cv;
  std::size_t next = 0, stitched = 0;
  std::exception_ptr error;
  const auto window = static_cast<std::size_t>(cfg.workers);

  auto worker = [&] {
    for (;;) {
      std::size_t idx;
      {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return error || next >= n || next < stitched + window; });
        if (error || next >= n) return;
        idx = next++;
      }
      try {
        RasterImage out = restore_tile(crop(img, grid.tiles[idx]), cfg, assets, scaled ? &*scaled : nullptr);
        std::lock_guard lock(m);
        done[idx] = std::move(out);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  const std::size_t threads = std::min<std::size_t>(window, n);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::size_t i = 0; i < n; ++i) {
    RasterImage tile;
    {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return error || done[i].has_value(); });
      if (error) break;
      tile = std::move(*done[i]);
      done[i].reset();
    }
    stitcher.add(i, tile);
    tile = RasterImage{};
    {
      std::lock_guard lock(m);
      ++stitched;
    }
    cv.notify_all();
  }
  {
    std::lock_guard lock(m);
    if (!error && stitched < n) error = std::make_exception_ptr(Error("tile processing stopped early"));
  }
  cv.notify_all();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  res.output = stitcher.release();
  res.tiles_processed = stitched;
  res.measured_peak_mb = static_cast<double>(memory::peak_bytes() - baseline + input_bytes) / (1024.0 * 1024.0);
  if (reference) {
    require(reference->same_shape(img), "reference does not match the input shape");
    QualityReport q;
    q.ssim = ssim(res.output, *reference);
    q.psnr_db = psnr(res.output, *reference);
    res.report = q;
  }
  res.elapsed_seconds = std::max(1e-9, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return res;
}

// ---------------------------------------------------------------------------
// Capture chain

struct CaptureRequest {
  std::string id;
  std::filesystem::path input_path;
  std::optional<Backend> backend;
  std::optional<std::filesystem::path> reference_path;
  std::optional<double> edges_threshold;
};

inline CaptureRequest parse_capture_request(const nlohmann::json& j) {
  CaptureRequest r;
  try {
    r.id = j.at("id").get<std::string>();
    r.input_path = j.at("input_path").get<std::string>();
    if (j.contains("backend")) r.backend = parse_backend(j.at("backend").get<std::string>());
    if (j.contains("reference_path") && !j.at("reference_path").is_null()) r.reference_path = j.at("reference_path").get<std::string>();
    if (j.contains("edges") && !j.at("edges").is_null()) r.edges_threshold = j.at("edges").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid capture request: ") + e.what());
  }
  if (r.id.empty() || r.id.find_first_of("/\\") != std::string::npos) throw FormatError("capture request id must be a non-empty file-name-safe string");
  return r;
}

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct CaptureArtifacts {
  std::filesystem::path image;
  std::filesystem::path report;
  std::optional<std::filesystem::path> edges;
  std::string content_hash;
};

/// load -> restore -> store. Files are named <id>_<hash>.png, <id>_<hash>.json
/// and <id>_<hash>_edges.png, where hash is FNV-1a of the restored PNG bytes.
inline CaptureArtifacts run_capture_chain(const CaptureRequest& req, PipelineConfig cfg, const RestoreAssets& assets,
                                          const std::filesystem::path& store_dir) {
  if (req.backend) cfg.backend = *req.backend;
  const RasterImage input = load_raster(req.input_path);
  std::optional<RasterImage> reference;
  if (req.reference_path) reference = load_raster(*req.reference_path);
  std::error_code ec;
  std::filesystem::create_directories(store_dir, ec);
  if (ec || !std::filesystem::is_directory(store_dir)) throw FormatError("cannot create store directory " + store_dir.string());

  RestorationResult res = restore(input, cfg, assets, reference ? &*reference : nullptr);
  const auto png = encode_png(res.output);
  CaptureArtifacts art;
  art.content_hash = hex64(fnv1a64(png));
  const std::string stem = req.id + "_" + art.content_hash;
  art.image = store_dir / (stem + ".png");
  write_bytes(art.image, png);
  nlohmann::json j = to_json(res);
  j["request_id"] = req.id;
  j["input_path"] = req.input_path.string();
  j["content_hash"] = art.content_hash;
  j["image_file"] = art.image.filename().string();
  if (req.edges_threshold) {
    art.edges = store_dir / (stem + "_edges.png");
    write_bytes(*art.edges, encode_png(to_image(sobel_edges(res.output, *req.edges_threshold))));
    j["edges_file"] = art.edges->filename().string();
    j["edges_threshold"] = *req.edges_threshold;
  }
  art.report = store_dir / (stem + ".json");
  std::ofstream out(art.report);
  if (!out) throw FormatError("cannot write " + art.report.string());
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed for " + art.report.string());
  return art;
}

}  // namespace eodeblur
