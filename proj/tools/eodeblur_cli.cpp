// eodeblur command-line front end. Exit status: 0 ok, 1 usage, 2 data
// error (including a failed gradcheck), 3 memory budget violation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eodeblur/eodeblur.hpp"

namespace fs = std::filesystem;
using namespace eodeblur;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBudget = 3;

struct UsageError : Error {
  using Error::Error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Accepts either inline JSON or a path to a JSON file.
json inline_or_file(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') {
    try {
      return json::parse(arg);
    } catch (const json::exception& e) {
      throw FormatError(std::string("inline JSON: ") + e.what());
    }
  }
  return read_json_file(arg);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed for " + path.string());
}

BlurKernel load_kernel(const fs::path& path) { return kernel_from_json(read_json_file(path)); }

// Taps scaled so the largest is white.
RasterImage kernel_image(const BlurKernel& k) {
  const double peak = *std::max_element(k.taps().begin(), k.taps().end());
  Plane p(k.size(), k.size());
  for (int v = 0; v < k.size(); ++v)
    for (int u = 0; u < k.size(); ++u) p.at(u, v) = peak > 0.0 ? static_cast<float>(k.at(u, v) / peak) : 0.0f;
  return gray_image(std::move(p));
}

bool is_raster_file(const fs::path& p) {
  const std::string ext = detail::lower_extension(p);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::vector<fs::path> raster_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_raster_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<double> parse_grid(const std::string& text) {
  // "lo:hi:step" or a comma-separated list.
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double lo = 0, hi = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0 || hi < lo)
      throw UsageError("radius grid must be lo:hi:step or a comma list");
    for (int i = 0; lo + i * step <= hi + 1e-9; ++i) out.push_back(lo + i * step);
  } else {
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("bad radius grid entry '" + item + "'");
      }
    }
  }
  if (out.empty()) throw UsageError("radius grid is empty");
  return out;
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw UsageError("expected on or off, got '" + s + "'");
}

// Degraded/clean pairs built from synthetic scenes: defocus disk + shot noise.
std::vector<neural::TrainingPair> synthetic_pairs(int count, int size, double radius, double photons, std::uint64_t seed) {
  std::vector<neural::TrainingPair> pairs;
  for (int i = 0; i < count; ++i) {
    SceneParams sp;
    sp.width = sp.height = size;
    sp.seed = seed + static_cast<std::uint64_t>(i);
    const RasterImage clean = make_scene(sp);
    RasterImage blurred = convolve(clean, disk_kernel(radius));
    if (photons > 0.0) blurred = shot_noise(blurred, photons, step_seed(sp.seed, 0));
    pairs.push_back({neural::from_raster(blurred), neural::from_raster(clean)});
  }
  return pairs;
}

// <dir>/clean/NAME and <dir>/degraded/NAME, matched by file name.
std::vector<neural::TrainingPair> load_pairs(const fs::path& dir) {
  std::vector<neural::TrainingPair> pairs;
  for (const auto& clean_path : raster_files(dir / "clean")) {
    const fs::path degraded_path = dir / "degraded" / clean_path.filename();
    if (!fs::exists(degraded_path)) throw FormatError("no degraded counterpart for " + clean_path.string());
    const RasterImage clean = load_raster(clean_path);
    const RasterImage degraded = load_raster(degraded_path);
    if (!clean.same_shape(degraded)) throw FormatError("shape mismatch for pair " + clean_path.filename().string());
    pairs.push_back({neural::from_raster(degraded), neural::from_raster(clean)});
  }
  if (pairs.empty()) throw FormatError("no training pairs under " + dir.string());
  return pairs;
}

struct RestoreFlags {
  std::string config, weights, kernel, reference, report, backend, mode;
  std::optional<int> workers, tile, overlap;
  std::optional<double> nsr;
};

void add_restore_flags(CLI::App* c, RestoreFlags& f) {
  c->add_option("--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
  c->add_option("--weights", f.weights, "MUNW weight file (neural backend)")->check(CLI::ExistingFile);
  c->add_option("--kernel", f.kernel, "kernel JSON (classical backends)")->check(CLI::ExistingFile);
  c->add_option("--backend", f.backend, "wiener | richardson_lucy | neural");
  c->add_option("--mode", f.mode, "tile_native | downscale_process_upscale");
  c->add_option("--workers", f.workers, "worker threads");
  c->add_option("--tile", f.tile, "tile size in pixels");
  c->add_option("--overlap", f.overlap, "tile overlap in pixels");
  c->add_option("--nsr", f.nsr, "Wiener noise-to-signal ratio");
}

// Defaults, then the config file, then environment, then flags.
std::pair<PipelineConfig, RestoreAssets> resolve_restore(const RestoreFlags& f) {
  PipelineConfig cfg;
  if (!f.config.empty()) {
    const IniFile ini = IniFile::load(f.config);
    ini.check_sections({"pipeline", "deconv", "train"});
    cfg = pipeline_config_from_ini(ini);
  }
  apply_env_overrides(cfg);
  if (!f.backend.empty()) cfg.backend = parse_backend(f.backend);
  if (!f.mode.empty()) cfg.mode = parse_mode(f.mode);
  if (f.workers) cfg.workers = *f.workers;
  if (f.tile) cfg.tile_size = *f.tile;
  if (f.overlap) cfg.overlap = *f.overlap;
  if (f.nsr) cfg.nsr = *f.nsr;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  RestoreAssets assets;
  if (!f.kernel.empty()) assets.kernel = load_kernel(f.kernel);
  if (!f.weights.empty()) assets.weights = neural::load_weights(f.weights);
  if (cfg.backend == Backend::neural && !assets.weights) throw UsageError("the neural backend needs --weights");
  if (cfg.backend != Backend::neural && !assets.kernel) throw UsageError("the " + to_string(cfg.backend) + " backend needs --kernel");
  return {cfg, std::move(assets)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eodeblur: defocus deblurring toolkit for Earth-observation imagery"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // degrade
  std::string spec_arg, in_path, out_path;
  auto* degrade = app.add_subcommand("degrade", "apply a degradation chain");
  degrade->add_option("--spec", spec_arg, "DegradeSpec JSON file or inline JSON")->required();
  degrade->add_option("input", in_path)->required();
  degrade->add_option("output", out_path)->required();

  // estimate-kernel
  std::string degraded_path, reference_path, grid_text, kernel_out = "kernel.json", kernel_pgm;
  int support = 13;
  auto* estimate = app.add_subcommand("estimate-kernel", "estimate the blur kernel from a degraded/reference pair");
  estimate->add_option("--degraded", degraded_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--reference", reference_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--parametric", grid_text, "fit a disk radius over lo:hi:step or a comma list instead");
  estimate->add_option("--support", support, "kernel size (odd)")->capture_default_str();
  estimate->add_option("--out", kernel_out, "kernel JSON")->capture_default_str();
  estimate->add_option("--pgm", kernel_pgm, "kernel visualization (default: <out>.pgm)");

  // deconv
  std::string deconv_backend = "wiener", kernel_path, taper = "off", boundary = "symmetric";
  double nsr = 0.01;
  int iters = 20;
  auto* deconv = app.add_subcommand("deconv", "whole-image classical deconvolution");
  deconv->add_option("--backend", deconv_backend, "wiener | rl")->capture_default_str();
  deconv->add_option("--kernel", kernel_path)->required()->check(CLI::ExistingFile);
  deconv->add_option("--nsr", nsr)->capture_default_str();
  deconv->add_option("--iters", iters)->capture_default_str();
  deconv->add_option("--taper", taper, "on | off")->capture_default_str();
  deconv->add_option("--boundary", boundary, "Wiener boundary: periodic | symmetric")->capture_default_str();
  deconv->add_option("input", in_path)->required();
  deconv->add_option("output", out_path)->required();

  // restore
  RestoreFlags rf;
  auto* restore_cmd = app.add_subcommand("restore", "tiled restoration under the memory budget");
  add_restore_flags(restore_cmd, rf);
  restore_cmd->add_option("--reference", rf.reference, "clean image for SSIM/PSNR")->check(CLI::ExistingFile);
  restore_cmd->add_option("--report", rf.report, "also write the JSON result here");
  restore_cmd->add_option("input", in_path)->required();
  restore_cmd->add_option("output", out_path)->required();

  // capture
  std::string request_arg, store_dir;
  RestoreFlags cf;
  auto* capture = app.add_subcommand("capture", "run one capture request through load, restore and store");
  add_restore_flags(capture, cf);
  capture->add_option("--request", request_arg, "request JSON file or inline JSON")->required();
  capture->add_option("--store", store_dir, "output directory")->required();

  // metrics
  std::string ref_path, niqe_model_path, brisque_model_path;
  auto* metrics_cmd = app.add_subcommand("metrics", "quality report as JSON");
  metrics_cmd->add_option("--ref", ref_path, "reference for SSIM/PSNR")->check(CLI::ExistingFile);
  metrics_cmd->add_option("--niqe-model", niqe_model_path)->check(CLI::ExistingFile);
  metrics_cmd->add_option("--brisque-model", brisque_model_path)->check(CLI::ExistingFile);
  metrics_cmd->add_option("input", in_path)->required();

  // edges
  double threshold = 0.25;
  auto* edges = app.add_subcommand("edges", "binary Sobel edge map");
  edges->add_option("--threshold", threshold)->capture_default_str();
  edges->add_option("input", in_path)->required();
  edges->add_option("output", out_path)->required();

  // niqe-fit
  std::string corpus_dir, model_out;
  int patch_size = 96;
  double percentile = 75.0;
  auto* niqe_fit_cmd = app.add_subcommand("niqe-fit", "fit a NIQE model on a corpus of sharp images");
  niqe_fit_cmd->add_option("--corpus", corpus_dir)->required();
  niqe_fit_cmd->add_option("--out", model_out)->required();
  niqe_fit_cmd->add_option("--patch-size", patch_size)->capture_default_str();
  niqe_fit_cmd->add_option("--percentile", percentile, "sharpness percentile of patches kept")->capture_default_str();

  // train-toy
  std::string train_config, data_dir, weights_out, csv_out;
  int iterations = 0, synth_count = 8, synth_size = 64;
  double synth_radius = 2.0, synth_photons = 0.0;
  std::uint64_t synth_seed = 300;
  auto* train = app.add_subcommand("train-toy", "train the multi-scale model on a small dataset");
  train->add_option("--config", train_config, "INI file with a [train] section")->check(CLI::ExistingFile);
  train->add_option("--data", data_dir, "directory with clean/ and degraded/ subdirectories");
  train->add_option("--synthetic", synth_count, "number of synthetic pairs when --data is absent")->capture_default_str();
  train->add_option("--size", synth_size, "synthetic pair size")->capture_default_str();
  train->add_option("--radius", synth_radius, "synthetic defocus radius")->capture_default_str();
  train->add_option("--photons", synth_photons, "synthetic shot noise (0 = none)")->capture_default_str();
  train->add_option("--data-seed", synth_seed, "first synthetic scene seed")->capture_default_str();
  train->add_option("--iterations", iterations, "iterations to run (default: total_iterations)");
  train->add_option("--out", weights_out)->required();
  train->add_option("--csv", csv_out, "loss curve (default: <out>.csv)");

  // gradcheck
  std::size_t samples = 256;
  double eps = 1e-3;
  int gc_size = 8;
  std::uint64_t gc_seed = 7;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the model gradients");
  gradcheck_cmd->add_option("--samples", samples)->capture_default_str();
  gradcheck_cmd->add_option("--eps", eps)->capture_default_str();
  gradcheck_cmd->add_option("--size", gc_size, "input side (multiple of 4)")->capture_default_str();
  gradcheck_cmd->add_option("--seed", gc_seed)->capture_default_str();

  // spectrum
  std::string profile_out;
  int bins = 64;
  auto* spectrum = app.add_subcommand("spectrum", "centered log-magnitude spectrum");
  spectrum->add_option("--profile", profile_out, "radial profile JSON");
  spectrum->add_option("--bins", bins)->capture_default_str();
  spectrum->add_option("input", in_path)->required();
  spectrum->add_option("output", out_path)->required();

  // synth
  SceneParams scene;
  auto* synth = app.add_subcommand("synth", "synthetic multispectral-like test scene");
  synth->add_option("--width", scene.width)->capture_default_str();
  synth->add_option("--height", scene.height)->capture_default_str();
  synth->add_option("--seed", scene.seed)->capture_default_str();
  synth->add_option("output", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*degrade) {
      const DegradeSpec spec = degrade_spec_from_json(inline_or_file(spec_arg));
      save_raster(apply(spec, load_raster(in_path)), out_path);
    } else if (*estimate) {
      const RasterImage d = load_raster(degraded_path), r = load_raster(reference_path);
      json j = {{"schema_version", 1}};
      BlurKernel k = BlurKernel::identity();
      if (!grid_text.empty()) {
        const RadiusFit fit = fit_defocus_radius(d, r, parse_grid(grid_text));
        k = disk_kernel(fit.radius);
        j["method"] = "parametric";
        j["radius"] = fit.radius;
        j["residual"] = fit.residual;
      } else {
        if (support < 1 || support % 2 == 0) throw UsageError("--support must be odd and positive");
        k = kernel_from_otf(estimate_otf(d, r), support);
        j["method"] = "otf";
      }
      write_json(kernel_out, to_json(k));
      const fs::path pgm = kernel_pgm.empty() ? fs::path(kernel_out).replace_extension(".pgm") : fs::path(kernel_pgm);
      save_raster(kernel_image(k), pgm);
      j["kernel"] = kernel_out;
      j["size"] = k.size();
      std::cout << j.dump(2) << '\n';
    } else if (*deconv) {
      const BlurKernel k = load_kernel(kernel_path);
      RasterImage img = load_raster(in_path);
      if (parse_on_off(taper)) img = edge_taper(img, k);
      if (deconv_backend == "wiener") {
        if (boundary != "periodic" && boundary != "symmetric") throw UsageError("--boundary must be periodic or symmetric");
        img = wiener(img, k, nsr, boundary == "symmetric" ? WienerBoundary::symmetric : WienerBoundary::periodic);
      } else if (deconv_backend == "rl" || deconv_backend == "richardson_lucy") {
        img = richardson_lucy(img, k, iters);
      } else {
        throw UsageError("--backend must be wiener or rl");
      }
      save_raster(img, out_path);
    } else if (*restore_cmd) {
      auto [cfg, assets] = resolve_restore(rf);
      const RasterImage img = load_raster(in_path);
      std::optional<RasterImage> ref;
      if (!rf.reference.empty()) ref = load_raster(rf.reference);
      const RestorationResult res = restore(img, cfg, assets, ref ? &*ref : nullptr);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      save_raster(res.output, out_path);
      const json j = to_json(res);
      if (!rf.report.empty()) write_json(rf.report, j);
      std::cout << j.dump(2) << '\n';
    } else if (*capture) {
      auto [cfg, assets] = resolve_restore(cf);
      const CaptureRequest req = parse_capture_request(inline_or_file(request_arg));
      // A backend named in the request overrides the flags, so it needs its asset.
      if (req.backend == Backend::neural && !assets.weights) throw UsageError("request asks for the neural backend but no --weights given");
      if (req.backend && *req.backend != Backend::neural && !assets.kernel) throw UsageError("request backend needs --kernel");
      const CaptureArtifacts art = run_capture_chain(req, cfg, assets, store_dir);
      json j = {{"schema_version", 1}, {"image", art.image.string()}, {"report", art.report.string()}, {"content_hash", art.content_hash}};
      if (art.edges) j["edges"] = art.edges->string();
      std::cout << j.dump(2) << '\n';
    } else if (*metrics_cmd) {
      const RasterImage img = load_raster(in_path);
      QualityReport q;
      if (!ref_path.empty()) {
        const RasterImage ref = load_raster(ref_path);
        if (!ref.same_shape(img)) throw FormatError("reference shape differs from input");
        q.ssim = ssim(img, ref);
        q.psnr_db = psnr(img, ref);
      }
      if (!niqe_model_path.empty()) q.niqe = niqe_score(img, load_niqe_model(niqe_model_path));
      if (!brisque_model_path.empty()) q.brisque = brisque_score(img, fs::path(brisque_model_path));
      std::cout << to_json(q).dump(2) << '\n';
    } else if (*edges) {
      const BinaryMap m = sobel_edges(load_raster(in_path), threshold);
      save_raster(to_image(m), out_path);
      std::cout << json{{"schema_version", 1}, {"threshold", threshold}, {"edge_pixels", m.count()}}.dump(2) << '\n';
    } else if (*niqe_fit_cmd) {
      std::vector<RasterImage> corpus;
      for (const auto& p : raster_files(corpus_dir)) corpus.push_back(load_raster(p));
      if (corpus.empty()) throw FormatError("no images in " + corpus_dir);
      save_niqe_model(niqe_fit(corpus, patch_size, percentile), model_out);
      std::cout << json{{"schema_version", 1}, {"images", corpus.size()}, {"model", model_out}}.dump(2) << '\n';
    } else if (*train) {
      neural::TrainConfig tc;
      if (!train_config.empty()) tc = train_config_from_ini(IniFile::load(train_config));
      const auto pairs = data_dir.empty() ? synthetic_pairs(synth_count, synth_size, synth_radius, synth_photons, synth_seed) : load_pairs(data_dir);
      const auto result = neural::train_toy(tc, pairs, iterations);
      neural::save_weights(result.weights, weights_out);
      const fs::path csv = csv_out.empty() ? fs::path(weights_out).replace_extension(".csv") : fs::path(csv_out);
      std::ofstream os(csv);
      if (!os) throw FormatError("cannot write " + csv.string());
      neural::write_loss_csv(os, result.curve);
      std::cout << json{{"schema_version", 1},
                        {"iterations", result.curve.size()},
                        {"initial_loss", result.curve.front().loss},
                        {"final_loss", result.curve.back().loss},
                        {"weights", weights_out},
                        {"loss_csv", csv.string()}}
                       .dump(2)
                << '\n';
    } else if (*gradcheck_cmd) {
      const neural::MimoArch arch{};
      const auto w = neural::init_weights<double>(arch, gc_seed);
      const auto [input, target] = neural::gradcheck_sample(arch, gc_size, gc_seed);
      const auto r = neural::gradcheck(w, input, target, 0.1, eps, samples, gc_seed);
      std::cout << json{{"schema_version", 1},
                        {"max_relative_error", r.max_relative_error},
                        {"checked", r.checked},
                        {"skipped_at_kinks", r.skipped_at_kinks},
                        {"worst_parameter", r.worst_parameter},
                        {"parameters", neural::parameter_count(arch)}}
                       .dump(2)
                << '\n';
      if (r.max_relative_error > 1e-3) {
        std::cerr << "gradcheck failed: max relative error " << r.max_relative_error << " > 1e-3\n";
        return kExitData;
      }
    } else if (*spectrum) {
      const RasterImage img = load_raster(in_path);
      Plane s = log_spectrum(img);
      if (!profile_out.empty()) write_json(profile_out, to_json(radial_profile(s, bins)));
      const auto [lo, hi] = std::minmax_element(s.data.begin(), s.data.end());
      const float a = *lo, span = *hi - *lo;
      for (auto& v : s.data) v = span > 0.0f ? (v - a) / span : 0.0f;
      save_raster(gray_image(std::move(s)), out_path);
    } else if (*synth) {
      save_raster(make_scene(scene), out_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return kExitBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
