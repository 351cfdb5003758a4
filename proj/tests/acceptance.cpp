// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: slipforge_acceptance WORK_DIR [--keep] [criterion...]
// The work directory is wiped first unless --keep is given, in which case
// finished samples are reused.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "slipforge/errors.hpp"
#include "slipforge/evsim.hpp"
#include "slipforge/features.hpp"
#include "slipforge/geometry.hpp"
#include "slipforge/labelprep.hpp"
#include "slipforge/learn.hpp"
#include "slipforge/pipeline.hpp"
#include "slipforge/pose_log.hpp"
#include "support.hpp"

using namespace slipforge;
using namespace slipforge::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work;

// ---------------------------------------------------------------- datasets

PipelineConfig simple_config() {
  PipelineConfig c;
  SweepSpec& s = c.sweep;
  s.seed = 1;
  s.width = {0.06, 0.10};
  s.mass = {0.05, 1.0};
  s.texture_sets = {{3, 26, 30}, {12, 40, 7}};
  s.grip_horizontal = {0.0, 0.8};
  s.grip_vertical = {0.1, 0.5};
  c.label.thresholds = {1.0, 0.1};
  c.label.seed = 5;
  return c;
}

PipelineConfig complex_config() {
  PipelineConfig c;
  SweepSpec& s = c.sweep;
  s.mode = SweepMode::random;
  s.seed = 2;
  s.n_train = 60;
  s.n_test = 12;
  c.label.thresholds = {1.0, 0.1};
  c.label.seed = 6;
  return c;
}

/// Simulates and labels a dataset once; later criteria reuse it.
struct Built {
  Manifest manifest;
  LabelSummary summary;
  fs::path run;
  fs::path data;
};

Built build(const std::string& name, const PipelineConfig& c) {
  Built b;
  b.run = g_work / name / "run";
  b.data = g_work / name / "dataset";
  b.manifest = run_dataset(c, b.run, {1, true});
  if (!b.manifest.all_ok()) throw InternalError(name + ": not every sample finished ok");
  b.summary = run_labelprep(b.manifest, b.run, c.label, b.data);
  return b;
}

std::map<std::string, Built> g_built;

const Built& dataset(const std::string& name) {
  auto it = g_built.find(name);
  if (it != g_built.end()) return it->second;
  return g_built[name] = build(name, name == "simple" ? simple_config() : complex_config());
}

SweepResult sweep_model(const PipelineConfig& c, ModelKind kind, const LoadedDataset& d, const fs::path& dir) {
  return sweep(kind == ModelKind::mlp ? c.mlp : c.snn, c.sweep_space, c.sweep_runs, 17, d.train, d.validation,
               d.test.empty() ? nullptr : &d.test, dir);
}

// ---------------------------------------------------------------- criteria

Outcome simple_set_accuracy() {
  const PipelineConfig c = simple_config();
  const Built& b = dataset("simple");
  const LoadedDataset d = load_dataset(b.data);
  std::string detail = fmt("%zu samples, train %zu val %zu;", b.manifest.samples.size(), d.train.size(),
                           d.validation.size());
  bool pass = b.manifest.samples.size() == 32;
  for (ModelKind k : {ModelKind::mlp, ModelKind::snn}) {
    const SweepResult r = sweep_model(c, k, d, g_work / "simple" / ("sweep_" + to_string(k)));
    const double best = r.runs[r.best].best_val_accuracy;
    pass = pass && r.runs.size() == 10 && best >= 0.90;
    detail += fmt(" %s best val %.3f (run %zu)", to_string(k).c_str(), best, r.best);
  }
  return {pass, detail};
}

Outcome generalization_gap() {
  const PipelineConfig c = complex_config();
  const Built& b = dataset("complex");
  const LoadedDataset d = load_dataset(b.data);
  std::string detail = fmt("train %zu val %zu test %zu;", d.train.size(), d.validation.size(), d.test.size());
  bool pass = b.manifest.samples.size() == 72 && !d.test.empty();
  for (ModelKind k : {ModelKind::mlp, ModelKind::snn}) {
    const SweepResult r = sweep_model(c, k, d, g_work / "complex" / ("sweep_" + to_string(k)));
    const RunRecord& best = r.runs[r.best];
    const double test = best.test_accuracy.value_or(-1.0);
    const double gap = std::abs(best.best_val_accuracy - test);
    pass = pass && gap <= 0.10;
    detail += fmt(" %s val %.3f test %.3f gap %.3f", to_string(k).c_str(), best.best_val_accuracy, test, gap);
  }
  return {pass, detail};
}

std::vector<Frame> random_frames(Rng& rng) {
  std::vector<Frame> frames(20);
  std::vector<float> base(256);
  for (auto& v : base) v = static_cast<float>(rng.uniform(0.05, 0.95));
  for (int k = 0; k < 20; ++k) {
    Frame& f = frames[static_cast<std::size_t>(k)];
    f.width = 16;
    f.height = 16;
    f.timestamp = k / 60.0;
    for (auto& v : base) {
      // Mostly small steps with occasional jumps, kept inside [0, 1].
      const double step = rng.uniform() < 0.1 ? rng.uniform(-0.5, 0.5) : rng.normal(0.0, 0.05);
      v = static_cast<float>(std::clamp(v + step, 0.0, 1.0));
    }
    f.pixels = base;
  }
  return frames;
}

Outcome event_model_oracle() {
  Rng rng(303);
  EventModelParams quiet;
  EventModelParams noisy;
  noisy.threshold_sigma = 0.03;
  noisy.leak_rate = 0.5;
  noisy.shot_noise_rate = 2.0;
  int equal = 0;
  std::size_t events = 0;
  for (int i = 0; i < 100; ++i) {
    const auto frames = random_frames(rng);
    for (const EventModelParams* p : {&quiet, &noisy}) {
      const EventStream fast = frames_to_events(frames, *p, 1000 + static_cast<std::uint64_t>(i));
      const EventStream ref = reference_frames_to_events(frames, *p, 1000 + static_cast<std::uint64_t>(i));
      equal += fast == ref;
      events += ref.size();
    }
  }
  return {equal == 200, fmt("%d/200 streams identical (%zu events)", equal, events)};
}

/// Object-mask events of one sample: an event between frames k-1 and k counts
/// when its pixel is covered in either frame.
std::size_t mask_events(const ScenarioParams& p, const PipelineConfig& c, const fs::path& sample_dir) {
  const PoseLog log = simulate_slip(p, build_trajectory(p, c.trajectory), c.slip);
  const SceneModel scene = make_scene(p, c.render);
  const CameraModel cam = make_camera(c.render);
  std::vector<ObjectMask> masks;
  for (std::size_t k = 0; k < log.size(); ++k) {
    masks.push_back(object_mask_relative(scene, cam, log.records[k].gripper, log.cube_in_gripper[k]));
  }
  const EventStream ev = read_events(sample_dir / kEventFile, EventFormat::binary);
  std::size_t n = 0;
  for (const Event& e : ev.events) {
    const auto k = static_cast<std::size_t>(
        std::clamp<long>(std::lround(std::ceil(e.t * kFrameRate - 1e-9)), 1, static_cast<long>(log.size()) - 1));
    n += masks[k - 1].at(e.x, e.y) || masks[k].at(e.x, e.y);
  }
  return n;
}

Outcome object_mask_invariant() {
  PipelineConfig c;
  c.render.light_in_camera_frame = true;  // shading fixed relative to the gripper camera
  std::vector<SampleSpec> samples(2);
  samples[0].id = 0;
  samples[0].params.cuboid_mass = 0.05;
  samples[0].params.grip_offset_horizontal = 0.0;
  samples[1].id = 1;
  samples[1].params.cuboid_mass = 1.0;
  samples[1].params.grip_offset_horizontal = 0.8 * 0.5 * samples[1].params.cuboid_width;
  for (auto& s : samples) {
    s.params.texture_ids = {3, 26, 30};
    s.params.seed = 40 + s.id;
  }
  const fs::path out = g_work / "mask";
  const Manifest m = run_dataset(c, samples, out, {1, true});
  if (!m.all_ok()) return {false, "samples did not finish"};
  const std::size_t still = mask_events(samples[0].params, c, out / m.samples[0].dir);
  const std::size_t slip = mask_events(samples[1].params, c, out / m.samples[1].dir);
  return {still == 0 && slip >= 100,
          fmt("non-slip %zu object events (max theta %.3g deg), slip %zu (max theta %.1f deg)", still,
              m.samples[0].max_theta_deg, slip, m.samples[1].max_theta_deg)};
}

Outcome angular_difference_oracle() {
  Rng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Q bg = random_q(rng), bc = random_q(rng), g = random_q(rng), cq = random_q(rng);
    const Q dg = qmul(g, qconj(bg)), dc = qmul(cq, qconj(bc));
    const double want = q_angle(qmul(qconj(dg), dc));
    const double got = angular_difference(q_matrix(bg), q_matrix(bc), q_matrix(g), q_matrix(cq)).theta;
    worst = std::max(worst, std::abs(got - want));
  }
  // Identical relative change: the cube follows the gripper exactly.
  double identical = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Q bg = random_q(rng), rel = random_q(rng), move = random_q(rng);
    const RotationMatrix BG = q_matrix(bg), BC = BG * q_matrix(rel);
    const RotationMatrix G = q_matrix(move) * BG, C = q_matrix(move) * BC;
    identical = std::max(identical, angular_difference(BG, BC, G, C).theta);
  }
  return {worst <= 1e-9 && identical == 0.0,
          fmt("max |theta - geodesic| %.2e rad; max theta for identical change %.1e", worst, identical)};
}

Outcome preprocessing_arithmetic() {
  const Built& b = dataset("simple");
  const LabelSettings st = simple_config().label;
  std::size_t windows = 0, bad_span = 0, checked = 0, mismatched = 0;
  Rng rng(606);
  for (const SampleRecord& r : b.manifest.samples) {
    const fs::path dir = b.run / r.dir;
    const auto poses = read_pose_log(dir / kPoseFile);
    const EventStream ev = read_events(dir / kEventFile, EventFormat::binary);
    const auto subs = slice_and_label(ev, theta_series(to_pose_pairs(poses)), st.thresholds, st.statistic, r.id);
    for (const Subsample& s : subs) {
      ++windows;
      int frames = 0;
      for (const auto& rec : poses) frames += rec.t >= s.start_time && rec.t - s.start_time <= s.duration;
      bad_span += frames != kFramesPerSubsample;
      if (checked >= 1000 || rng.uniform() > 0.8) continue;
      // Independent count straight from the sensor stream.
      std::size_t want = 0;
      for (const Event& e : ev.events) {
        const double tau = e.t - s.start_time;
        want += tau >= 0.0 && tau <= 0.16 && e.x >= 73 && e.x < 273 && e.y >= 5 && e.y < 255;
      }
      mismatched += bin(s, 150).sum() != want;
      ++checked;
    }
  }
  const double width = kSubsampleDuration / 150;
  const bool width_ok = std::abs(width - 0.16 / 150) < 1e-18 && bin_index(width * 0.5, 150) == 0 &&
                        bin_index(width * 1.5, 150) == 1 && bin_index(0.16, 150) == 149;
  return {bad_span == 0 && width_ok && checked == 1000 && mismatched == 0,
          fmt("%zu windows, %zu not spanning 10 frames; bin width %.6e s; %zu/%zu sums mismatched", windows, bad_span,
              width, mismatched, checked)};
}

std::pair<std::size_t, std::size_t> class_files(const fs::path& dir) {
  std::size_t rot = 0, stable = 0;
  if (!fs::exists(dir)) return {0, 0};
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    rot += n.rfind("rotation_", 0) == 0;
    stable += n.rfind("stable_", 0) == 0;
  }
  return {rot, stable};
}

Outcome balance_and_split() {
  const Built& b = dataset("complex");
  const auto [tr_r, tr_s] = class_files(b.data / "train");
  const auto [va_r, va_s] = class_files(b.data / "val");
  const auto [te_r, te_s] = class_files(b.data / "test");
  const std::size_t total = tr_r + tr_s + va_r + va_s;
  const bool balanced = tr_r + va_r == tr_s + va_s && te_r == te_s && total > 0 && te_r > 0;
  const double train_share = static_cast<double>(tr_r + tr_s);
  const bool split_ok = std::abs(train_share - 0.8 * static_cast<double>(total)) <= 1.0;

  const LabelSettings st = complex_config().label;
  run_labelprep(b.manifest, b.run, st, g_work / "complex" / "dataset_again");
  const std::string h1 = directory_hash(b.data), h2 = directory_hash(g_work / "complex" / "dataset_again");
  return {balanced && split_ok && h1 == h2,
          fmt("train+val %zu rotation / %zu stable, test %zu / %zu; train %.0f of %zu (80%% = %.1f); hashes %s %s",
              tr_r + va_r, tr_s + va_s, te_r, te_s, train_share, total, 0.8 * static_cast<double>(total), h1.c_str(),
              h1 == h2 ? "equal" : h2.c_str())};
}

Outcome mlp_gradient_check() {
  Rng rng(808);
  std::vector<BinnedTensor> ts;
  const CropWindow w{0, 0, 20, 20};
  for (int i = 0; i < 8; ++i) {
    Subsample s;
    s.label = i % 2 ? Label::nonslip : Label::slip;
    const int n = 30 + static_cast<int>(rng.index(50));
    for (int k = 0; k < n; ++k) {
      s.events.push_back({rng.uniform(0.0, 0.16), static_cast<std::uint16_t>(rng.index(20)),
                          static_cast<std::uint16_t>(rng.index(20)), rng.uniform() < 0.5 ? std::int8_t{1} : std::int8_t{-1}});
    }
    std::sort(s.events.begin(), s.events.end(), event_less);
    ts.push_back(bin(s, 10, w));
  }
  FeatureDataset d = make_feature_dataset(ts);
  prepare_features(d, {});
  const GradCheckResult r = finite_difference_check(ModelKind::mlp, d, 9, {16, 8}, 50, 1e-4);
  return {r.max_relative_error < 1e-4 && r.parameter_count <= 10000 && r.checked == 50,
          fmt("max relative error %.2e over %d of %zu parameters", r.max_relative_error, r.checked,
              r.parameter_count)};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(is), {}};
  }
  return out;
}

Outcome pipeline_determinism() {
  PipelineConfig c;
  c.sweep.mode = SweepMode::random;
  c.sweep.seed = 9;
  c.sweep.n_train = 5;
  c.sweep.n_test = 1;
  const fs::path a = g_work / "det_p1", b = g_work / "det_p8";
  fs::remove_all(a);
  fs::remove_all(b);
  const Manifest ma = run_dataset(c, a, {1, false});
  const Manifest mb = run_dataset(c, b, {8, false});
  const auto ta = read_tree(a), tb = read_tree(b);
  std::size_t bytes = 0;
  for (const auto& [k, v] : ta) bytes += v.size();
  return {ma.all_ok() && mb.all_ok() && ta == tb && directory_hash(a) == directory_hash(b),
          fmt("%zu files, %zu bytes, %s", ta.size(), bytes, ta == tb ? "identical" : "DIFFERENT")};
}

Outcome parameter_generation() {
  SweepSpec s;
  s.width = {0.06, 0.10};
  s.height = {0.08, 0.12};
  s.mass = {0.05, 1.0};
  s.texture_sets = {{0, 1, 2}, {3, 4, 5}};
  s.light_position = {{-1.5, 0.5}, {-1.0, 0.8}};
  s.light_intensity = {0.7};
  s.background_brightness = {0.3};
  s.grip_horizontal = {-0.5, 0.0, 0.5};
  s.grip_vertical = {0.1, 0.4};
  const std::size_t exhaustive = gen_params(s).size();

  SweepSpec r;
  r.mode = SweepMode::random;
  r.seed = 10;
  r.n_train = 80;
  r.n_test = 20;
  const auto sets = gen_params(r);
  using Getter = std::function<std::vector<double>(const ScenarioParams&)>;
  const std::vector<std::pair<const char*, Getter>> axes{
      {"width", [](const ScenarioParams& p) { return std::vector<double>{p.cuboid_width}; }},
      {"height", [](const ScenarioParams& p) { return std::vector<double>{p.cuboid_height}; }},
      {"mass", [](const ScenarioParams& p) { return std::vector<double>{p.cuboid_mass}; }},
      {"textures",
       [](const ScenarioParams& p) {
         return std::vector<double>{static_cast<double>(p.texture_ids[0]), static_cast<double>(p.texture_ids[1]),
                                    static_cast<double>(p.texture_ids[2])};
       }},
      {"light_azimuth", [](const ScenarioParams& p) { return std::vector<double>{p.light_azimuth}; }},
      {"light_elevation", [](const ScenarioParams& p) { return std::vector<double>{p.light_elevation}; }},
      {"light_intensity", [](const ScenarioParams& p) { return std::vector<double>{p.light_intensity}; }},
      {"background", [](const ScenarioParams& p) { return std::vector<double>{p.background_brightness}; }},
      {"grip_horizontal", [](const ScenarioParams& p) { return std::vector<double>{p.grip_offset_horizontal}; }},
      {"grip_vertical", [](const ScenarioParams& p) { return std::vector<double>{p.grip_offset_vertical}; }},
  };
  std::string shared;
  std::size_t n_test = 0;
  for (const auto& x : sets) n_test += x.partition == Partition::test;
  for (const auto& [name, get] : axes) {
    std::set<double> train;
    for (const auto& x : sets) {
      if (x.partition == Partition::train) {
        for (double v : get(x.params)) train.insert(v);
      }
    }
    bool clash = false;
    for (const auto& x : sets) {
      if (x.partition != Partition::test) continue;
      for (double v : get(x.params)) clash = clash || train.count(v) != 0;
    }
    if (clash) shared += std::string(" ") + name;
  }
  return {exhaustive == 192 && sets.size() == 100 && n_test == 20 && shared.empty(),
          fmt("exhaustive %zu sets; random %zu draws (%zu test), shared axes:%s", exhaustive, sets.size(), n_test,
              shared.empty() ? " none" : shared.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s WORK_DIR [--keep] [criterion...]\n", argv[0]);
    return 2;
  }
  g_work = argv[1];
  bool keep = false;
  std::set<int> only;
  for (int i = 2; i < argc; ++i) {
    if (std::string(argv[i]) == "--keep") {
      keep = true;
    } else {
      only.insert(std::atoi(argv[i]));
    }
  }
  if (!keep) fs::remove_all(g_work);
  fs::create_directories(g_work);
  const std::vector<std::pair<int, Outcome (*)()>> criteria{
      {1, simple_set_accuracy},     {2, generalization_gap},   {3, event_model_oracle},
      {4, object_mask_invariant},   {5, angular_difference_oracle}, {6, preprocessing_arithmetic},
      {7, balance_and_split},       {8, mlp_gradient_check},   {9, pipeline_determinism},
      {10, parameter_generation},
  };

  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && only.count(id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s  [%.0f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
