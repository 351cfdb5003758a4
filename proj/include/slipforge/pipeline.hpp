#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slipforge/evsim.hpp"
#include "slipforge/features.hpp"
#include "slipforge/labelprep.hpp"
#include "slipforge/learn.hpp"
#include "slipforge/render.hpp"
#include "slipforge/slipdyn.hpp"

namespace slipforge {

enum class SweepMode { exhaustive, random };
enum class Partition { train, test };
std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Grip offsets are given as fractions so that every combination stays valid
/// whatever the cuboid size: horizontal in [-1, 1] of the half width, vertical
/// in [0, 1] of the height.
struct SweepSpec {
  SweepMode mode = SweepMode::exhaustive;
  std::uint64_t seed = 0;
  ScenarioParams base;

  // Exhaustive mode: one list per parameter, combined in this order.
  std::vector<double> width{0.08};
  std::vector<double> height{0.10};
  std::vector<double> mass{0.2};
  std::vector<std::array<int, 3>> texture_sets{{0, 1, 2}};
  std::vector<std::array<double, 2>> light_position{{-1.5707963267948966, 0.6}};  // azimuth, elevation
  std::vector<double> light_intensity{0.7};
  std::vector<double> background_brightness{0.3};
  std::vector<double> grip_horizontal{0.0};
  std::vector<double> grip_vertical{0.1};

  // Random mode: uniform draws; textures come from disjoint pools.
  int n_train = 0;
  int n_test = 0;
  Range width_range{0.06, 0.10};
  Range height_range{0.08, 0.12};
  Range mass_range{0.05, 1.0};
  Range azimuth_range{-2.5, -0.6};
  Range elevation_range{0.3, 1.0};
  Range intensity_range{0.5, 0.9};
  Range background_range{0.2, 0.4};
  Range grip_horizontal_range{-0.8, 0.8};
  Range grip_vertical_range{0.05, 0.5};
  /// Texture ids shared out 80:20 between train and test samples.
  std::vector<int> texture_pool;
  bool split = true;

  /// Exhaustive product size or n_train + n_test.
  std::size_t size() const;
  void validate() const;
};

struct SampleSpec {
  std::size_t id = 0;
  ScenarioParams params;
  Partition partition = Partition::train;
};

/// Exhaustive mode: lexicographic Cartesian product (last parameter varies
/// fastest). Random mode: n_train train draws, then n_test test draws that
/// share no parameter value with any train draw. Throws SpecError on empty
/// lists or invalid ranges.
std::vector<SampleSpec> gen_params(const SweepSpec& spec);

struct RenderSettings {
  double fov_deg = 60.0;
  double camera_offset = 0.25;
  int supersample = 1;
  double ground_tile = 1.0;
  double sphere_radius = 3.0;
  bool light_in_camera_frame = false;
};

struct LabelSettings {
  LabelThresholds thresholds;
  int bins = 150;
  WindowStatistic statistic = WindowStatistic::max_minus_min;
  CropWindow crop;
  std::uint64_t seed = 0;
};

inline ModelConfig model_defaults(ModelKind kind) {
  ModelConfig m;
  m.kind = kind;
  return m;
}

struct PipelineConfig {
  SweepSpec sweep;
  TrajectoryConfig trajectory;
  SlipConfig slip;
  RenderSettings render;
  EventModelParams events;
  LabelSettings label;
  ModelConfig mlp = model_defaults(ModelKind::mlp);
  ModelConfig snn = model_defaults(ModelKind::snn);
  TrainConfig train;
  SweepSpace sweep_space;
  int sweep_runs = 10;
  bool dump_frames = false;
};

nlohmann::json to_json(const ScenarioParams& p);
ScenarioParams scenario_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SweepSpec& s);
SweepSpec sweep_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
/// Missing keys keep their defaults; unknown top-level keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& c);

SceneModel make_scene(const ScenarioParams& p, const RenderSettings& r);
CameraModel make_camera(const RenderSettings& r);

enum class SampleStatus { ok, diverged, failed };
std::string to_string(SampleStatus s);
SampleStatus sample_status_from_string(const std::string& s);

struct SampleRecord {
  std::size_t id = 0;
  ScenarioParams params;
  Partition partition = Partition::train;
  SampleStatus status = SampleStatus::failed;
  std::string error;
  std::string dir;                  // relative to the output root
  std::vector<std::string> files;   // relative to the output root
  std::size_t event_count = 0;
  std::size_t frame_count = 0;
  double max_theta_deg = 0.0;
};

struct Manifest {
  std::vector<SampleRecord> samples;

  std::size_t count(SampleStatus s) const;
  bool all_ok() const { return count(SampleStatus::ok) == samples.size(); }
};

nlohmann::json to_json(const SampleRecord& r);
SampleRecord sample_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::filesystem::path& path);

// File names inside a sample directory.
inline constexpr const char* kParamsFile = "params.json";
inline constexpr const char* kPoseFile = "poses.txt";
inline constexpr const char* kThetaFile = "theta.txt";
inline constexpr const char* kEventFile = "events.bin";
inline constexpr const char* kEventParamsFile = "events.json";
inline constexpr const char* kRecordFile = "record.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kConfigFile = "config.json";

std::string sample_dir_name(std::size_t id);

/// Runs slipdyn, render, evsim and the theta series for one sample and
/// writes its files into `dir` (which must exist).
SampleRecord run_sample(const SampleSpec& s, const PipelineConfig& cfg, const std::filesystem::path& dir);

struct RunOptions {
  int parallelism = 1;
  bool resume = false;
};

/// Runs every sample of cfg.sweep into `out_dir`. Each sample is produced in a
/// temporary directory and renamed into place when complete; samples that
/// fail are recorded and the run continues. With resume, finished samples
/// (ok or diverged) already on disk are kept. Writes config.json and
/// manifest.json. Throws IoError when `out_dir` cannot be written.
Manifest run_dataset(const PipelineConfig& cfg, const std::filesystem::path& out_dir, const RunOptions& opt = {});
Manifest run_dataset(const PipelineConfig& cfg, const std::vector<SampleSpec>& samples,
                     const std::filesystem::path& out_dir, const RunOptions& opt = {});

/// Re-renders a finished sample and rewrites its event files with cfg.events.
void regenerate_events(const std::filesystem::path& sample_dir, const PipelineConfig& cfg);

struct LabelSummary {
  std::size_t samples = 0;
  std::size_t windows = 0;
  std::size_t slip = 0;       // before balancing
  std::size_t nonslip = 0;
  std::size_t excluded = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};
nlohmann::json to_json(const LabelSummary& s);

/// Labels every ok sample of the manifest found under `run_dir`, balances and
/// splits the train partition 80:20 into train/val, balances the test
/// partition into test, and writes dataset/{train,val,test}/*.sub plus
/// split.json under `dataset_dir`. Throws BalanceError when a class is empty.
LabelSummary run_labelprep(const Manifest& manifest, const std::filesystem::path& run_dir,
                           const LabelSettings& settings, const std::filesystem::path& dataset_dir);

/// Loads one split directory ("train", "val" or "test") as binned features.
/// A missing directory yields an empty set.
FeatureDataset load_features(const std::filesystem::path& dataset_dir, const std::string& split_name);

struct LoadedDataset {
  FeatureDataset train;
  FeatureDataset validation;
  FeatureDataset test;
  FeatureScaler scaler;
};
/// Loads all three splits and scales them with a scaler fitted on train.
LoadedDataset load_dataset(const std::filesystem::path& dataset_dir);

/// FNV-1a 64 over sorted relative paths and file contents, hex encoded.
std::string directory_hash(const std::filesystem::path& root);

}  // namespace slipforge
