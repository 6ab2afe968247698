#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "eodeblur/pipeline.hpp"

using namespace eodeblur;

namespace {

// Sets an environment variable for the lifetime of the guard.
struct EnvGuard {
  std::string name;
  EnvGuard(std::string n, const std::string& value) : name(std::move(n)) { ::setenv(name.c_str(), value.c_str(), 1); }
  ~EnvGuard() { ::unsetenv(name.c_str()); }
};

}  // namespace

TEST(IniFile, ParsesSectionsCommentsAndWhitespace) {
  const auto ini = IniFile::parse_string(
      "# leading comment\n"
      "[pipeline]\n"
      "  tile_size = 128   ; trailing comment\n"
      "backend=rl\n"
      "\n"
      "[ train ]\n"
      "lr_initial = 2.5e-4\n"
      "flag = on\n");
  EXPECT_TRUE(ini.has("pipeline", "tile_size"));
  EXPECT_FALSE(ini.has("pipeline", "overlap"));
  EXPECT_EQ(ini.get("pipeline", "backend"), "rl");
  EXPECT_EQ(ini.get_as<int>("pipeline", "tile_size"), 128);
  EXPECT_DOUBLE_EQ(*ini.get_as<double>("train", "lr_initial"), 2.5e-4);
  EXPECT_EQ(ini.get_as<bool>("train", "flag"), true);
  EXPECT_FALSE(ini.get("missing", "x").has_value());
  int untouched = 7;
  ini.read("pipeline", "overlap", untouched);
  EXPECT_EQ(untouched, 7);
}

TEST(IniFile, MalformedInputIsRejected) {
  EXPECT_THROW(IniFile::parse_string("key = 1\n"), FormatError);
  EXPECT_THROW(IniFile::parse_string("[open\n"), FormatError);
  EXPECT_THROW(IniFile::parse_string("[]\n"), FormatError);
  EXPECT_THROW(IniFile::parse_string("[a]\njust words\n"), FormatError);
  EXPECT_THROW(IniFile::parse_string("[a]\n = 3\n"), FormatError);
  EXPECT_THROW(IniFile::parse_string("[a]\nx = 1\nx = 2\n"), FormatError);
  EXPECT_THROW(IniFile::load("/nonexistent/eodeblur.ini"), FormatError);
}

TEST(IniFile, TypeErrorsNameTheKey) {
  const auto ini = IniFile::parse_string("[s]\nn = 12x\nf = abc\nb = maybe\n");
  try {
    ini.get_as<int>("s", "n");
    FAIL() << "expected a FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("s.n"), std::string::npos);
  }
  EXPECT_THROW(ini.get_as<double>("s", "f"), FormatError);
  EXPECT_THROW(ini.get_as<bool>("s", "b"), FormatError);
}

TEST(IniFile, UnknownKeysAndSections) {
  const auto ini = IniFile::parse_string("[pipeline]\ntile_sise = 64\n[extra]\nx = 1\n");
  EXPECT_THROW(ini.check_keys("pipeline", {"tile_size"}), FormatError);
  EXPECT_NO_THROW(ini.check_keys("absent", {}));
  EXPECT_THROW(ini.check_sections({"pipeline"}), FormatError);
  EXPECT_NO_THROW(ini.check_sections({"pipeline", "extra"}));
}

TEST(IniFile, LoadsFromDisk) {
  const auto p = std::filesystem::temp_directory_path() / "eodeblur_test_config.ini";
  std::ofstream(p) << "[deconv]\nnsr = 0.05\n";
  EXPECT_DOUBLE_EQ(*IniFile::load(p).get_as<double>("deconv", "nsr"), 0.05);
}

TEST(PipelineConfig, DefaultsAreValid) {
  const PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.tile_size, 256);
  EXPECT_EQ(c.overlap, 32);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.backend, Backend::wiener);
}

TEST(PipelineConfig, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.workers = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.overlap = 256; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.tile_size = 4; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.memory_budget_mb = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.nsr = -1; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.overlap = 30; }).validate(), InvalidArgument);
  EXPECT_NO_THROW(bad([](auto& c) {
                    c.overlap = 30;
                    c.mode = ProcessingMode::tile_native;
                  }).validate());
}

TEST(PipelineConfig, FromIni) {
  const auto c = pipeline_config_from_ini(IniFile::parse_string(
      "[pipeline]\ntile_size = 128\noverlap = 16\nbackend = richardson_lucy\nmemory_budget_mb = 64\n"
      "virtual_budget_mb = 512\nworkers = 2\nmode = tile_native\nscale_factor = 2\n"
      "[deconv]\nnsr = 0.005\niterations = 7\nboundary = periodic\n"));
  EXPECT_EQ(c.tile_size, 128);
  EXPECT_EQ(c.overlap, 16);
  EXPECT_EQ(c.backend, Backend::richardson_lucy);
  EXPECT_DOUBLE_EQ(c.memory_budget_mb, 64);
  EXPECT_DOUBLE_EQ(c.virtual_budget_mb, 512);
  EXPECT_EQ(c.workers, 2);
  EXPECT_EQ(c.mode, ProcessingMode::tile_native);
  EXPECT_EQ(c.scale_factor, 2);
  EXPECT_DOUBLE_EQ(c.nsr, 0.005);
  EXPECT_EQ(c.rl_iterations, 7);
  EXPECT_EQ(c.wiener_boundary, WienerBoundary::periodic);
}

TEST(PipelineConfig, FromIniErrors) {
  EXPECT_THROW(pipeline_config_from_ini(IniFile::parse_string("[pipeline]\nbackend = magic\n")), InvalidArgument);
  EXPECT_THROW(pipeline_config_from_ini(IniFile::parse_string("[pipeline]\nmode = sideways\n")), InvalidArgument);
  EXPECT_THROW(pipeline_config_from_ini(IniFile::parse_string("[pipeline]\ntiles = 3\n")), FormatError);
  EXPECT_THROW(pipeline_config_from_ini(IniFile::parse_string("[deconv]\nboundary = zero\n")), FormatError);
  EXPECT_THROW(pipeline_config_from_ini(IniFile::parse_string("[pipeline]\nworkers = 0\n")), InvalidArgument);
}

TEST(PipelineConfig, BackendAndModeNames) {
  EXPECT_EQ(parse_backend("rl"), Backend::richardson_lucy);
  for (Backend b : {Backend::wiener, Backend::richardson_lucy, Backend::neural}) EXPECT_EQ(parse_backend(to_string(b)), b);
  for (ProcessingMode m : {ProcessingMode::tile_native, ProcessingMode::downscale_process_upscale}) EXPECT_EQ(parse_mode(to_string(m)), m);
}

TEST(PipelineConfig, EnvironmentOverrides) {
  PipelineConfig c;
  {
    EnvGuard a(kEnvMemoryBudget, "12.5"), b(kEnvVirtualBudget, "99"), w(kEnvWorkers, "2");
    apply_env_overrides(c);
  }
  EXPECT_DOUBLE_EQ(c.memory_budget_mb, 12.5);
  EXPECT_DOUBLE_EQ(c.virtual_budget_mb, 99);
  EXPECT_EQ(c.workers, 2);
  {
    EnvGuard a(kEnvMemoryBudget, "lots");
    EXPECT_THROW(apply_env_overrides(c), InvalidArgument);
  }
  PipelineConfig untouched;
  apply_env_overrides(untouched);
  EXPECT_DOUBLE_EQ(untouched.memory_budget_mb, 300.0);
}

TEST(TrainConfigIni, FromIni) {
  const auto c = train_config_from_ini(IniFile::parse_string(
      "[train]\nbatch_size = 2\nlr_initial = 1e-3\nlr_step = 100\nlr_gamma = 0.25\ntotal_iterations = 400\n"
      "fft_loss_weight = 0.0\nseed = 42\nworkers = 3\nwidths = 4, 8 ,12\nblocks_per_scale = 4\n"));
  EXPECT_EQ(c.batch_size, 2);
  EXPECT_DOUBLE_EQ(c.lr_initial, 1e-3);
  EXPECT_EQ(c.lr_step, 100);
  EXPECT_DOUBLE_EQ(c.lr_gamma, 0.25);
  EXPECT_EQ(c.total_iterations, 400);
  EXPECT_DOUBLE_EQ(c.fft_loss_weight, 0.0);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.arch.widths, (std::array<int, 3>{4, 8, 12}));
  EXPECT_EQ(c.arch.blocks_per_scale, 4);
}

TEST(TrainConfigIni, Errors) {
  EXPECT_THROW(train_config_from_ini(IniFile::parse_string("[train]\nwidths = 4,8\n")), FormatError);
  EXPECT_THROW(train_config_from_ini(IniFile::parse_string("[train]\nwidths = 4;8;12\n")), FormatError);
  EXPECT_THROW(train_config_from_ini(IniFile::parse_string("[train]\nblocks_per_scale = 3\n")), FormatError);
  EXPECT_THROW(train_config_from_ini(IniFile::parse_string("[train]\nlearning_rate = 1\n")), FormatError);
  EXPECT_THROW(train_config_from_ini(IniFile::parse_string("[train]\nbatch_size = 0\n")), FormatError);
}
