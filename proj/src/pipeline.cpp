#include "slipforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slipforge/errors.hpp"
#include "slipforge/pose_log.hpp"
#include "slipforge/rng.hpp"
#include "slipforge/texture.hpp"

namespace slipforge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Partition p) { return p == Partition::train ? "train" : "test"; }

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "test") return Partition::test;
  throw SpecError("unknown partition '" + s + "'");
}

std::string to_string(SampleStatus s) {
  switch (s) {
    case SampleStatus::ok: return "ok";
    case SampleStatus::diverged: return "diverged";
    case SampleStatus::failed: break;
  }
  return "failed";
}

SampleStatus sample_status_from_string(const std::string& s) {
  if (s == "ok") return SampleStatus::ok;
  if (s == "diverged") return SampleStatus::diverged;
  if (s == "failed") return SampleStatus::failed;
  throw SpecError("unknown sample status '" + s + "'");
}

// ---------------------------------------------------------------- sweep spec

std::size_t SweepSpec::size() const {
  if (mode == SweepMode::random) return static_cast<std::size_t>(std::max(0, n_train) + std::max(0, n_test));
  return width.size() * height.size() * mass.size() * texture_sets.size() * light_position.size() *
         light_intensity.size() * background_brightness.size() * grip_horizontal.size() * grip_vertical.size();
}

namespace {

void check_range(const Range& r, const char* name, bool strict) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.hi < r.lo || (strict && !(r.hi > r.lo))) {
    throw SpecError(std::string("invalid range for ") + name);
  }
}

template <class T>
void check_list(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw SpecError(std::string("empty value list for ") + name);
}

}  // namespace

void SweepSpec::validate() const {
  if (mode == SweepMode::exhaustive) {
    check_list(width, "width");
    check_list(height, "height");
    check_list(mass, "mass");
    check_list(texture_sets, "texture_sets");
    check_list(light_position, "light_position");
    check_list(light_intensity, "light_intensity");
    check_list(background_brightness, "background_brightness");
    check_list(grip_horizontal, "grip_horizontal");
    check_list(grip_vertical, "grip_vertical");
    for (const auto& set : texture_sets) {
      for (int id : set) {
        if (id < 0 || id >= kTextureCount) throw SpecError("texture id out of range: " + std::to_string(id));
      }
    }
    return;
  }
  if (n_train < 0 || n_test < 0 || n_train + n_test < 1) throw SpecError("random mode needs n_train + n_test >= 1");
  if (!split && n_test > 0) throw SpecError("n_test > 0 requires split = true");
  // Disjoint test values are impossible to draw from a degenerate range.
  const bool strict = split && n_test > 0;
  check_range(width_range, "width", strict);
  check_range(height_range, "height", strict);
  check_range(mass_range, "mass", strict);
  check_range(azimuth_range, "azimuth", strict);
  check_range(elevation_range, "elevation", strict);
  check_range(intensity_range, "light_intensity", strict);
  check_range(background_range, "background_brightness", strict);
  check_range(grip_horizontal_range, "grip_horizontal", strict);
  check_range(grip_vertical_range, "grip_vertical", strict);
  for (int id : texture_pool) {
    if (id < 0 || id >= kTextureCount) throw SpecError("texture id out of range: " + std::to_string(id));
  }
}

namespace {

ScenarioParams make_params(const ScenarioParams& base, double w, double h, double m, const std::array<int, 3>& tex,
                           double az, double el, double li, double bg, double gh, double gv) {
  ScenarioParams p = base;
  p.cuboid_width = w;
  p.cuboid_height = h;
  p.cuboid_mass = m;
  p.texture_ids = tex;
  p.light_azimuth = az;
  p.light_elevation = el;
  p.light_intensity = li;
  p.background_brightness = bg;
  p.grip_offset_horizontal = gh * 0.5 * w;
  p.grip_offset_vertical = gv * h;
  return p;
}

std::vector<SampleSpec> gen_exhaustive(const SweepSpec& s) {
  const std::array<std::size_t, 9> n{s.width.size(),           s.height.size(),          s.mass.size(),
                                     s.texture_sets.size(),    s.light_position.size(),  s.light_intensity.size(),
                                     s.background_brightness.size(), s.grip_horizontal.size(), s.grip_vertical.size()};
  std::array<std::size_t, 9> k{};
  std::vector<SampleSpec> out;
  out.reserve(s.size());
  for (std::size_t id = 0; id < s.size(); ++id) {
    ScenarioParams p = make_params(s.base, s.width[k[0]], s.height[k[1]], s.mass[k[2]], s.texture_sets[k[3]],
                                   s.light_position[k[4]][0], s.light_position[k[4]][1], s.light_intensity[k[5]],
                                   s.background_brightness[k[6]], s.grip_horizontal[k[7]], s.grip_vertical[k[8]]);
    p.seed = derive_seed(s.seed, id);
    try {
      p.validate();
    } catch (const ParamError& e) {
      throw SpecError("parameter set " + std::to_string(id) + " is invalid: " + e.what());
    }
    out.push_back({id, p, Partition::train});
    for (int d = 8; d >= 0; --d) {
      if (++k[static_cast<std::size_t>(d)] < n[static_cast<std::size_t>(d)]) break;
      k[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

constexpr int kAxes = 9;  // continuous draws per sample (textures handled by pools)
constexpr int kMaxRedraws = 10000;

std::vector<SampleSpec> gen_random(const SweepSpec& s) {
  std::vector<int> pool = s.texture_pool;
  if (pool.empty()) {
    for (int i = 0; i < kTextureCount; ++i) pool.push_back(i);
  }
  std::vector<int> train_pool = pool, test_pool = pool;
  if (s.split && s.n_test > 0) {
    Rng rng(derive_seed(s.seed, 0, 20));
    rng.shuffle(pool);
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(pool.size())));
    if (n_train == 0 || n_train == pool.size()) throw SpecError("texture pool too small to split 80:20");
    train_pool.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_pool.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
  }
  const std::array<const Range*, kAxes> ranges{&s.width_range,     &s.height_range,          &s.mass_range,
                                               &s.azimuth_range,   &s.elevation_range,       &s.intensity_range,
                                               &s.background_range, &s.grip_horizontal_range, &s.grip_vertical_range};
  std::array<std::set<double>, kAxes> used;

  std::vector<SampleSpec> out;
  const int total = s.n_train + s.n_test;
  for (int i = 0; i < total; ++i) {
    const bool test = i >= s.n_train;
    Rng rng(derive_seed(s.seed, static_cast<std::uint64_t>(i), 21));
    std::array<double, kAxes> v{};
    for (int a = 0; a < kAxes; ++a) {
      int tries = 0;
      do {
        if (++tries > kMaxRedraws) throw SpecError("could not draw a test value disjoint from the train values");
        v[static_cast<std::size_t>(a)] = rng.uniform(ranges[static_cast<std::size_t>(a)]->lo,
                                                     ranges[static_cast<std::size_t>(a)]->hi);
      } while (test && s.split && used[static_cast<std::size_t>(a)].count(v[static_cast<std::size_t>(a)]) != 0);
      if (!test) used[static_cast<std::size_t>(a)].insert(v[static_cast<std::size_t>(a)]);
    }
    const std::vector<int>& tp = test ? test_pool : train_pool;
    std::array<int, 3> tex{};
    std::vector<int> pick = tp;
    for (int t = 0; t < 3; ++t) {
      if (pick.size() >= 3) {
        // Distinct ids when the pool allows it.
        const std::size_t j = static_cast<std::size_t>(rng.index(pick.size() - static_cast<std::size_t>(t)));
        tex[static_cast<std::size_t>(t)] = pick[j];
        std::swap(pick[j], pick[pick.size() - 1 - static_cast<std::size_t>(t)]);
      } else {
        tex[static_cast<std::size_t>(t)] = tp[rng.index(tp.size())];
      }
    }
    ScenarioParams p = make_params(s.base, v[0], v[1], v[2], tex, v[3], v[4], v[5], v[6], v[7], v[8]);
    p.seed = derive_seed(s.seed, static_cast<std::uint64_t>(i));
    try {
      p.validate();
    } catch (const ParamError& e) {
      throw SpecError("random parameter set " + std::to_string(i) + " is invalid: " + e.what());
    }
    out.push_back({static_cast<std::size_t>(i), p, test ? Partition::test : Partition::train});
  }
  return out;
}

}  // namespace

std::vector<SampleSpec> gen_params(const SweepSpec& spec) {
  spec.validate();
  return spec.mode == SweepMode::exhaustive ? gen_exhaustive(spec) : gen_random(spec);
}

// ---------------------------------------------------------------- JSON

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw SpecError("unknown key '" + key + "' in " + where);
    }
  }
}

json to_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from_json(const json& j, const Range& def) {
  if (j.is_null()) return def;
  if (!j.is_array() || j.size() != 2) throw SpecError("a range is a two-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
T get_or(const json& j, const char* key, const T& def) {
  try {
    return j.contains(key) ? j.at(key).get<T>() : def;
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json to_json(const TrajectoryConfig& t) {
  return {{"durations", t.durations},
          {"lift_height", t.lift_height},
          {"tilt_angle", t.tilt_angle},
          {"place_shift", t.place_shift}};
}

TrajectoryConfig trajectory_from_json(const json& j) {
  check_keys(j, {"durations", "lift_height", "tilt_angle", "place_shift"}, "trajectory");
  TrajectoryConfig t;
  t.durations = get_or(j, "durations", t.durations);
  t.lift_height = get_or(j, "lift_height", t.lift_height);
  t.tilt_angle = get_or(j, "tilt_angle", t.tilt_angle);
  t.place_shift = get_or(j, "place_shift", t.place_shift);
  return t;
}

json to_json(const EventModelParams& p) {
  return {{"contrast_threshold", p.contrast_threshold},
          {"threshold_sigma", p.threshold_sigma},
          {"refractory", p.refractory},
          {"leak_rate", p.leak_rate},
          {"shot_noise_rate", p.shot_noise_rate},
          {"upsample_factor", p.upsample_factor},
          {"log_eps", p.log_eps}};
}

EventModelParams event_params_from_json(const json& j) {
  check_keys(j,
             {"contrast_threshold", "threshold_sigma", "refractory", "leak_rate", "shot_noise_rate", "upsample_factor",
              "log_eps"},
             "events");
  EventModelParams p;
  p.contrast_threshold = get_or(j, "contrast_threshold", p.contrast_threshold);
  p.threshold_sigma = get_or(j, "threshold_sigma", p.threshold_sigma);
  p.refractory = get_or(j, "refractory", p.refractory);
  p.leak_rate = get_or(j, "leak_rate", p.leak_rate);
  p.shot_noise_rate = get_or(j, "shot_noise_rate", p.shot_noise_rate);
  p.upsample_factor = get_or(j, "upsample_factor", p.upsample_factor);
  p.log_eps = get_or(j, "log_eps", p.log_eps);
  p.validate();
  return p;
}

std::string to_string(WindowStatistic s) {
  return s == WindowStatistic::max_minus_min ? "max_minus_min" : "end_minus_start";
}

WindowStatistic statistic_from_string(const std::string& s) {
  if (s == "max_minus_min") return WindowStatistic::max_minus_min;
  if (s == "end_minus_start") return WindowStatistic::end_minus_start;
  throw SpecError("unknown window statistic '" + s + "'");
}

json to_json(const LabelSettings& l) {
  return {{"theta_slip", l.thresholds.theta_slip},
          {"theta_nonslip", l.thresholds.theta_nonslip},
          {"bins", l.bins},
          {"statistic", to_string(l.statistic)},
          {"crop", {l.crop.x0, l.crop.y0, l.crop.width, l.crop.height}},
          {"seed", l.seed}};
}

LabelSettings label_from_json(const json& j) {
  check_keys(j, {"theta_slip", "theta_nonslip", "bins", "statistic", "crop", "seed"}, "label");
  LabelSettings l;
  l.thresholds.theta_slip = get_or(j, "theta_slip", l.thresholds.theta_slip);
  l.thresholds.theta_nonslip = get_or(j, "theta_nonslip", l.thresholds.theta_nonslip);
  l.thresholds.validate();
  l.bins = get_or(j, "bins", l.bins);
  if (l.bins < 1) throw SpecError("bins must be >= 1");
  l.statistic = statistic_from_string(get_or<std::string>(j, "statistic", to_string(l.statistic)));
  if (j.contains("crop")) {
    const auto c = get_or<std::array<int, 4>>(j, "crop", {});
    l.crop = {c[0], c[1], c[2], c[3]};
  }
  l.seed = get_or(j, "seed", l.seed);
  return l;
}

json to_json(const RenderSettings& r) {
  return {{"fov_deg", r.fov_deg},         {"camera_offset", r.camera_offset}, {"supersample", r.supersample},
          {"ground_tile", r.ground_tile}, {"sphere_radius", r.sphere_radius},
          {"light_in_camera_frame", r.light_in_camera_frame}};
}

RenderSettings render_from_json(const json& j) {
  check_keys(j, {"fov_deg", "camera_offset", "supersample", "ground_tile", "sphere_radius", "light_in_camera_frame"},
             "render");
  RenderSettings r;
  r.fov_deg = get_or(j, "fov_deg", r.fov_deg);
  r.camera_offset = get_or(j, "camera_offset", r.camera_offset);
  r.supersample = get_or(j, "supersample", r.supersample);
  r.ground_tile = get_or(j, "ground_tile", r.ground_tile);
  r.sphere_radius = get_or(j, "sphere_radius", r.sphere_radius);
  r.light_in_camera_frame = get_or(j, "light_in_camera_frame", r.light_in_camera_frame);
  return r;
}

json to_json(const SweepSpace& s) {
  json opts = json::array();
  for (OptimizerKind o : s.optimizers) opts.push_back(to_string(o));
  return {{"learning_rates", s.learning_rates}, {"batch_sizes", s.batch_sizes}, {"optimizers", opts},
          {"epochs", s.epochs}};
}

SweepSpace sweep_space_from_json(const json& j) {
  check_keys(j, {"learning_rates", "batch_sizes", "optimizers", "epochs"}, "sweep_space");
  SweepSpace s;
  s.learning_rates = get_or(j, "learning_rates", s.learning_rates);
  s.batch_sizes = get_or(j, "batch_sizes", s.batch_sizes);
  if (j.contains("optimizers")) {
    s.optimizers.clear();
    for (const auto& o : j.at("optimizers")) s.optimizers.push_back(optimizer_from_string(o.get<std::string>()));
  }
  s.epochs = get_or(j, "epochs", s.epochs);
  return s;
}

}  // namespace

json to_json(const ScenarioParams& p) {
  return {{"cuboid_width", p.cuboid_width},
          {"cuboid_height", p.cuboid_height},
          {"cuboid_depth", p.cuboid_depth},
          {"cuboid_mass", p.cuboid_mass},
          {"grip_offset_horizontal", p.grip_offset_horizontal},
          {"grip_offset_vertical", p.grip_offset_vertical},
          {"friction_torque_max", p.friction_torque_max},
          {"texture_ids", p.texture_ids},
          {"light_azimuth", p.light_azimuth},
          {"light_elevation", p.light_elevation},
          {"light_intensity", p.light_intensity},
          {"background_brightness", p.background_brightness},
          {"seed", p.seed}};
}

ScenarioParams scenario_params_from_json(const json& j) {
  check_keys(j,
             {"cuboid_width", "cuboid_height", "cuboid_depth", "cuboid_mass", "grip_offset_horizontal",
              "grip_offset_vertical", "friction_torque_max", "texture_ids", "light_azimuth", "light_elevation",
              "light_intensity", "background_brightness", "seed"},
             "scenario parameters");
  ScenarioParams p;
  p.cuboid_width = get_or(j, "cuboid_width", p.cuboid_width);
  p.cuboid_height = get_or(j, "cuboid_height", p.cuboid_height);
  p.cuboid_depth = get_or(j, "cuboid_depth", p.cuboid_depth);
  p.cuboid_mass = get_or(j, "cuboid_mass", p.cuboid_mass);
  p.grip_offset_horizontal = get_or(j, "grip_offset_horizontal", p.grip_offset_horizontal);
  p.grip_offset_vertical = get_or(j, "grip_offset_vertical", p.grip_offset_vertical);
  p.friction_torque_max = get_or(j, "friction_torque_max", p.friction_torque_max);
  p.texture_ids = get_or(j, "texture_ids", p.texture_ids);
  p.light_azimuth = get_or(j, "light_azimuth", p.light_azimuth);
  p.light_elevation = get_or(j, "light_elevation", p.light_elevation);
  p.light_intensity = get_or(j, "light_intensity", p.light_intensity);
  p.background_brightness = get_or(j, "background_brightness", p.background_brightness);
  p.seed = get_or(j, "seed", p.seed);
  return p;
}

json to_json(const SweepSpec& s) {
  json j = {{"mode", s.mode == SweepMode::exhaustive ? "exhaustive" : "random"},
            {"seed", s.seed},
            {"base", to_json(s.base)}};
  if (s.mode == SweepMode::exhaustive) {
    j["width"] = s.width;
    j["height"] = s.height;
    j["mass"] = s.mass;
    j["texture_sets"] = s.texture_sets;
    j["light_position"] = s.light_position;
    j["light_intensity"] = s.light_intensity;
    j["background_brightness"] = s.background_brightness;
    j["grip_horizontal"] = s.grip_horizontal;
    j["grip_vertical"] = s.grip_vertical;
  } else {
    j["n_train"] = s.n_train;
    j["n_test"] = s.n_test;
    j["split"] = s.split;
    j["texture_pool"] = s.texture_pool;
    j["width"] = to_json(s.width_range);
    j["height"] = to_json(s.height_range);
    j["mass"] = to_json(s.mass_range);
    j["light_azimuth"] = to_json(s.azimuth_range);
    j["light_elevation"] = to_json(s.elevation_range);
    j["light_intensity"] = to_json(s.intensity_range);
    j["background_brightness"] = to_json(s.background_range);
    j["grip_horizontal"] = to_json(s.grip_horizontal_range);
    j["grip_vertical"] = to_json(s.grip_vertical_range);
  }
  return j;
}

SweepSpec sweep_spec_from_json(const json& j) {
  SweepSpec s;
  const std::string mode = get_or<std::string>(j, "mode", "exhaustive");
  if (mode == "exhaustive") {
    s.mode = SweepMode::exhaustive;
    check_keys(j,
               {"mode", "seed", "base", "width", "height", "mass", "texture_sets", "light_position", "light_intensity",
                "background_brightness", "grip_horizontal", "grip_vertical"},
               "sweep");
  } else if (mode == "random") {
    s.mode = SweepMode::random;
    check_keys(j,
               {"mode", "seed", "base", "n_train", "n_test", "split", "texture_pool", "width", "height", "mass",
                "light_azimuth", "light_elevation", "light_intensity", "background_brightness", "grip_horizontal",
                "grip_vertical"},
               "sweep");
  } else {
    throw SpecError("unknown sweep mode '" + mode + "'");
  }
  s.seed = get_or(j, "seed", s.seed);
  if (j.contains("base")) s.base = scenario_params_from_json(j.at("base"));
  if (s.mode == SweepMode::exhaustive) {
    s.width = get_or(j, "width", s.width);
    s.height = get_or(j, "height", s.height);
    s.mass = get_or(j, "mass", s.mass);
    s.texture_sets = get_or(j, "texture_sets", s.texture_sets);
    s.light_position = get_or(j, "light_position", s.light_position);
    s.light_intensity = get_or(j, "light_intensity", s.light_intensity);
    s.background_brightness = get_or(j, "background_brightness", s.background_brightness);
    s.grip_horizontal = get_or(j, "grip_horizontal", s.grip_horizontal);
    s.grip_vertical = get_or(j, "grip_vertical", s.grip_vertical);
  } else {
    auto range = [&](const char* key, const Range& def) {
      return range_from_json(j.contains(key) ? j.at(key) : json(), def);
    };
    s.n_train = get_or(j, "n_train", s.n_train);
    s.n_test = get_or(j, "n_test", s.n_test);
    s.split = get_or(j, "split", s.split);
    s.texture_pool = get_or(j, "texture_pool", s.texture_pool);
    s.width_range = range("width", s.width_range);
    s.height_range = range("height", s.height_range);
    s.mass_range = range("mass", s.mass_range);
    s.azimuth_range = range("light_azimuth", s.azimuth_range);
    s.elevation_range = range("light_elevation", s.elevation_range);
    s.intensity_range = range("light_intensity", s.intensity_range);
    s.background_range = range("background_brightness", s.background_range);
    s.grip_horizontal_range = range("grip_horizontal", s.grip_horizontal_range);
    s.grip_vertical_range = range("grip_vertical", s.grip_vertical_range);
  }
  s.validate();
  return s;
}

json to_json(const PipelineConfig& c) {
  return {{"sweep", to_json(c.sweep)},
          {"trajectory", to_json(c.trajectory)},
          {"slip", {{"integrator_rate", c.slip.integrator_rate}, {"damping_scale", c.slip.damping_scale}}},
          {"render", to_json(c.render)},
          {"events", to_json(c.events)},
          {"label", to_json(c.label)},
          {"mlp", to_json(c.mlp)},
          {"snn", to_json(c.snn)},
          {"train", to_json(c.train)},
          {"sweep_space", to_json(c.sweep_space)},
          {"sweep_runs", c.sweep_runs},
          {"dump_frames", c.dump_frames}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j,
             {"sweep", "trajectory", "slip", "render", "events", "label", "mlp", "snn", "train", "sweep_space",
              "sweep_runs", "dump_frames"},
             "config");
  PipelineConfig c;
  try {
    if (j.contains("sweep")) c.sweep = sweep_spec_from_json(j.at("sweep"));
    if (j.contains("trajectory")) c.trajectory = trajectory_from_json(j.at("trajectory"));
    if (j.contains("slip")) {
      const json& s = j.at("slip");
      check_keys(s, {"integrator_rate", "damping_scale"}, "slip");
      c.slip.integrator_rate = get_or(s, "integrator_rate", c.slip.integrator_rate);
      c.slip.damping_scale = get_or(s, "damping_scale", c.slip.damping_scale);
    }
    if (j.contains("render")) c.render = render_from_json(j.at("render"));
    if (j.contains("events")) c.events = event_params_from_json(j.at("events"));
    if (j.contains("label")) c.label = label_from_json(j.at("label"));
    if (j.contains("mlp")) c.mlp = model_config_from_json(j.at("mlp"));
    if (j.contains("snn")) c.snn = model_config_from_json(j.at("snn"));
    c.mlp.kind = ModelKind::mlp;
    c.snn.kind = ModelKind::snn;
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("sweep_space")) c.sweep_space = sweep_space_from_json(j.at("sweep_space"));
    c.sweep_runs = get_or(j, "sweep_runs", c.sweep_runs);
    c.dump_frames = get_or(j, "dump_frames", c.dump_frames);
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed config: ") + e.what());
  } catch (const ParamError& e) {
    throw SpecError(e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw SpecError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
}

}  // namespace

void save_config(const fs::path& path, const PipelineConfig& c) { write_text(path, to_json(c).dump(2) + "\n"); }

// ---------------------------------------------------------------- manifest

std::size_t Manifest::count(SampleStatus s) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [s](const SampleRecord& r) { return r.status == s; }));
}

json to_json(const SampleRecord& r) {
  json j = {{"id", r.id},
            {"params", to_json(r.params)},
            {"partition", to_string(r.partition)},
            {"status", to_string(r.status)},
            {"dir", r.dir},
            {"files", r.files},
            {"event_count", r.event_count},
            {"frame_count", r.frame_count},
            {"max_theta_deg", r.max_theta_deg}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

SampleRecord sample_record_from_json(const json& j) {
  try {
    SampleRecord r;
    r.id = j.at("id").get<std::size_t>();
    r.params = scenario_params_from_json(j.at("params"));
    r.partition = partition_from_string(j.at("partition").get<std::string>());
    r.status = sample_status_from_string(j.at("status").get<std::string>());
    r.error = j.value("error", std::string());
    r.dir = j.at("dir").get<std::string>();
    r.files = j.at("files").get<std::vector<std::string>>();
    r.event_count = j.at("event_count").get<std::size_t>();
    r.frame_count = j.at("frame_count").get<std::size_t>();
    r.max_theta_deg = j.at("max_theta_deg").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad sample record: ") + e.what(), 1);
  }
}

json to_json(const Manifest& m) {
  json samples = json::array();
  for (const auto& r : m.samples) samples.push_back(to_json(r));
  return {{"samples", samples},
          {"ok", m.count(SampleStatus::ok)},
          {"diverged", m.count(SampleStatus::diverged)},
          {"failed", m.count(SampleStatus::failed)}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  if (!j.contains("samples")) throw ParseError("manifest has no samples", 1);
  for (const auto& s : j.at("samples")) m.samples.push_back(sample_record_from_json(s));
  return m;
}

Manifest read_manifest(const fs::path& path) { return manifest_from_json(read_json(path)); }

std::string sample_dir_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%06zu", id);
  return buf;
}

// ---------------------------------------------------------------- samples

SceneModel make_scene(const ScenarioParams& p, const RenderSettings& r) {
  SceneModel s;
  s.cube_width = p.cuboid_width;
  s.cube_height = p.cuboid_height;
  s.cube_depth = p.cuboid_depth;
  s.cube_texture = p.texture_ids[0];
  s.ground_texture = p.texture_ids[1];
  s.background_texture = p.texture_ids[2];
  s.ground_tile = r.ground_tile;
  s.sphere_radius = r.sphere_radius;
  s.background_brightness = p.background_brightness;
  s.light_azimuth = p.light_azimuth;
  s.light_elevation = p.light_elevation;
  s.light_intensity = p.light_intensity;
  s.light_in_camera_frame = r.light_in_camera_frame;
  s.supersample = r.supersample;
  return s;
}

CameraModel make_camera(const RenderSettings& r) { return CameraModel::side_view(r.fov_deg, r.camera_offset); }

namespace {

std::uint64_t event_seed(const ScenarioParams& p) { return derive_seed(p.seed, 0, 31); }

void write_theta(const fs::path& path, const std::vector<AngularDifference>& theta) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < theta.size(); ++i) os << i << ' ' << theta[i].theta << '\n';
  write_text(path, os.str());
}

/// Renders every frame of `log` and synthesizes events. Frames are dumped to
/// `frame_dir` when it is not empty.
EventStream render_events(const ScenarioParams& p, const PipelineConfig& cfg, const PoseLog& log,
                          const fs::path& frame_dir, std::vector<std::string>* frame_files) {
  const SceneModel scene = make_scene(p, cfg.render);
  const CameraModel cam = make_camera(cfg.render);
  EventSimulator sim(cam.width, cam.height, cfg.events, event_seed(p));
  if (!frame_dir.empty()) fs::create_directories(frame_dir);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const Frame f = render_frame_relative(scene, cam, log.records[k].gripper, log.cube_in_gripper[k],
                                          log.records[k].t);
    if (!frame_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06zu.pgm", k);
      write_pgm(frame_dir / name, f);
      if (frame_files != nullptr) frame_files->push_back(std::string("frames/") + name);
    }
    sim.push(f);
  }
  return sim.finish();
}

}  // namespace

SampleRecord run_sample(const SampleSpec& s, const PipelineConfig& cfg, const fs::path& dir) {
  SampleRecord r;
  r.id = s.id;
  r.params = s.params;
  r.partition = s.partition;
  s.params.validate();
  write_text(dir / kParamsFile, to_json(s.params).dump(2) + "\n");
  r.files.push_back(kParamsFile);

  const auto phases = build_trajectory(s.params, cfg.trajectory);
  PoseLog log;
  try {
    log = simulate_slip(s.params, phases, cfg.slip);
  } catch (const NumericalDivergence& e) {
    r.status = SampleStatus::diverged;
    r.error = e.what();
    return r;
  }
  r.frame_count = log.size();
  write_pose_log(dir / kPoseFile, log.records);
  r.files.push_back(kPoseFile);

  const auto theta = theta_series(to_pose_pairs(log.records));
  for (const auto& a : theta) r.max_theta_deg = std::max(r.max_theta_deg, a.degrees());
  write_theta(dir / kThetaFile, theta);
  r.files.push_back(kThetaFile);

  std::vector<std::string> frames;
  const EventStream ev = render_events(s.params, cfg, log, cfg.dump_frames ? dir / "frames" : fs::path(), &frames);
  write_events(ev, dir / kEventFile, EventFormat::binary);
  write_event_params(dir / kEventParamsFile, cfg.events, event_seed(s.params));
  r.files.push_back(kEventFile);
  r.files.push_back(kEventParamsFile);
  r.files.insert(r.files.end(), frames.begin(), frames.end());
  r.event_count = ev.size();
  r.status = SampleStatus::ok;
  return r;
}

namespace {

bool record_complete(const fs::path& root, const SampleRecord& r) {
  if (r.status == SampleStatus::failed) return false;
  return std::all_of(r.files.begin(), r.files.end(), [&](const std::string& f) { return fs::exists(root / f); });
}

/// Fixes record paths to be relative to the output root.
void root_relative(SampleRecord& r, const std::string& dir) {
  r.dir = dir;
  for (auto& f : r.files) f = dir + "/" + f;
  r.files.push_back(dir + "/" + kRecordFile);
}

SampleRecord process_sample(const SampleSpec& s, const PipelineConfig& cfg, const fs::path& out_dir, bool resume) {
  const std::string rel = std::string("samples/") + sample_dir_name(s.id);
  const fs::path final_dir = out_dir / rel;
  const fs::path tmp_dir = out_dir / (rel + ".tmp");
  fs::remove_all(tmp_dir);  // left over from an interrupted run
  if (resume && fs::exists(final_dir / kRecordFile)) {
    try {
      SampleRecord r = sample_record_from_json(read_json(final_dir / kRecordFile));
      if (r.id == s.id && r.params == s.params && record_complete(out_dir, r)) return r;
    } catch (const Error&) {
      // Unreadable record: recompute the sample.
    }
  }
  fs::remove_all(final_dir);
  SampleRecord r;
  try {
    fs::create_directories(tmp_dir);
    r = run_sample(s, cfg, tmp_dir);
    root_relative(r, rel);
    write_text(tmp_dir / kRecordFile, to_json(r).dump(2) + "\n");
    fs::rename(tmp_dir, final_dir);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    r = SampleRecord{};
    r.id = s.id;
    r.params = s.params;
    r.partition = s.partition;
    r.status = SampleStatus::failed;
    r.error = e.what();
  }
  return r;
}

}  // namespace

Manifest run_dataset(const PipelineConfig& cfg, const fs::path& out_dir, const RunOptions& opt) {
  return run_dataset(cfg, gen_params(cfg.sweep), out_dir, opt);
}

Manifest run_dataset(const PipelineConfig& cfg, const std::vector<SampleSpec>& samples, const fs::path& out_dir,
                     const RunOptions& opt) {
  if (opt.parallelism < 1) throw ParamError("parallelism must be >= 1");
  std::set<std::size_t> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw SpecError("duplicate sample id " + std::to_string(s.id));
  }
  std::error_code ec;
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  save_config(out_dir / kConfigFile, cfg);

  Manifest m;
  m.samples.resize(samples.size());
  std::atomic<std::size_t> next{0};
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opt.parallelism),
                                                             std::max<std::size_t>(samples.size(), 1)));
  int omp_threads = 1;
#ifdef _OPENMP
  omp_threads = std::max(1, omp_get_max_threads() / workers);
#endif
  auto work = [&] {
#ifdef _OPENMP
    omp_set_num_threads(omp_threads);
#endif
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      m.samples[i] = process_sample(samples[i], cfg, out_dir, opt.resume);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  std::sort(m.samples.begin(), m.samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  write_text(out_dir / kManifestFile, to_json(m).dump(2) + "\n");
  return m;
}

void regenerate_events(const fs::path& sample_dir, const PipelineConfig& cfg) {
  SampleRecord r = sample_record_from_json(read_json(sample_dir / kRecordFile));
  if (r.status != SampleStatus::ok) throw InputError("sample " + std::to_string(r.id) + " is not ok");
  const auto phases = build_trajectory(r.params, cfg.trajectory);
  const PoseLog log = simulate_slip(r.params, phases, cfg.slip);
  if (log.size() != r.frame_count) throw InputError("trajectory settings differ from the recorded run");
  const EventStream ev = render_events(r.params, cfg, log, {}, nullptr);
  write_events(ev, sample_dir / kEventFile, EventFormat::binary);
  write_event_params(sample_dir / kEventParamsFile, cfg.events, event_seed(r.params));
  r.event_count = ev.size();
  write_text(sample_dir / kRecordFile, to_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------- labelprep

json to_json(const LabelSummary& s) {
  return {{"samples", s.samples}, {"windows", s.windows},       {"slip", s.slip},
          {"nonslip", s.nonslip}, {"excluded", s.excluded},     {"train", s.train},
          {"validation", s.validation}, {"test", s.test}};
}

namespace {

std::vector<Subsample> label_sample(const SampleRecord& r, const fs::path& run_dir, const LabelSettings& st) {
  const fs::path dir = run_dir / r.dir;
  const EventStream ev = read_events(dir / kEventFile, EventFormat::binary);
  const auto poses = read_pose_log(dir / kPoseFile);
  const auto theta = theta_series(to_pose_pairs(poses));
  return slice_and_label(ev, theta, st.thresholds, st.statistic, r.id, st.crop);
}

}  // namespace

LabelSummary run_labelprep(const Manifest& manifest, const fs::path& run_dir, const LabelSettings& st,
                           const fs::path& dataset_dir) {
  st.thresholds.validate();
  std::vector<const SampleRecord*> ok;
  for (const auto& r : manifest.samples) {
    if (r.status == SampleStatus::ok) ok.push_back(&r);
  }
  if (ok.empty()) throw BalanceError("no ok samples in the manifest");
  std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->id < b->id; });

  // First pass: labels only, events dropped to bound memory.
  LabelSummary sum;
  sum.samples = ok.size();
  std::vector<Subsample> pools[2];
  for (const SampleRecord* r : ok) {
    for (Subsample& s : label_sample(*r, run_dir, st)) {
      ++sum.windows;
      if (s.label == Label::excluded) {
        ++sum.excluded;
        continue;
      }
      ++(s.label == Label::slip ? sum.slip : sum.nonslip);
      s.events.clear();
      s.events.shrink_to_fit();
      pools[r->partition == Partition::train ? 0 : 1].push_back(std::move(s));
    }
  }
  auto describe = [&](const char* what, const std::exception& e) {
    return std::string(what) + ": " + e.what() + " (samples " + std::to_string(sum.samples) + ", windows " +
           std::to_string(sum.windows) + ", slip " + std::to_string(sum.slip) + ", nonslip " +
           std::to_string(sum.nonslip) + ", excluded " + std::to_string(sum.excluded) + ")";
  };
  DatasetSplit split_ids;
  try {
    const auto train_pool = balance(std::move(pools[0]), derive_seed(st.seed, 0, 41));
    split_ids = split(train_pool, derive_seed(st.seed, 1, 41));
    if (!pools[1].empty()) {
      for (const auto& s : balance(std::move(pools[1]), derive_seed(st.seed, 2, 41))) split_ids.test.push_back(s.id());
    }
  } catch (const BalanceError& e) {
    throw BalanceError(describe("train/test balance", e));
  }
  std::sort(split_ids.train.begin(), split_ids.train.end());
  std::sort(split_ids.validation.begin(), split_ids.validation.end());
  std::sort(split_ids.test.begin(), split_ids.test.end());
  sum.train = split_ids.train.size();
  sum.validation = split_ids.validation.size();
  sum.test = split_ids.test.size();

  const std::array<std::pair<const char*, const std::vector<std::uint64_t>*>, 3> parts{
      {{"train", &split_ids.train}, {"val", &split_ids.validation}, {"test", &split_ids.test}}};
  std::error_code ec;
  fs::create_directories(dataset_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dataset_dir.string() + ": " + ec.message());
  for (const auto& [name, ids] : parts) {
    fs::remove_all(dataset_dir / name);
    fs::create_directories(dataset_dir / name);
  }

  // Second pass: re-slice each sample and write its selected windows.
  json listing = {{"seed", st.seed}, {"label", to_json(st)}, {"summary", to_json(sum)}};
  std::array<json, 3> entries{json::array(), json::array(), json::array()};
  std::array<std::size_t, 3> counters{};
  for (const SampleRecord* r : ok) {
    const auto first = static_cast<std::uint64_t>(r->id) << 16;
    const auto last = first | 0xFFFFu;
    bool wanted = false;
    for (const auto& [name, ids] : parts) {
      auto it = std::lower_bound(ids->begin(), ids->end(), first);
      wanted = wanted || (it != ids->end() && *it <= last);
    }
    if (!wanted) continue;
    for (const Subsample& s : label_sample(*r, run_dir, st)) {
      for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& ids = *parts[p].second;
        if (!std::binary_search(ids.begin(), ids.end(), s.id())) continue;
        char name[48];
        std::snprintf(name, sizeof name, "%s_%06zu.sub", file_stem(s.label).c_str(), counters[p]++);
        write_subsample(dataset_dir / parts[p].first / name, s, st.bins, st.crop);
        entries[p].push_back({{"id", s.id()},
                              {"file", std::string(parts[p].first) + "/" + name},
                              {"label", to_string(s.label)},
                              {"delta_theta", s.delta_theta}});
      }
    }
  }
  listing["train"] = entries[0];
  listing["val"] = entries[1];
  listing["test"] = entries[2];
  write_text(dataset_dir / "split.json", listing.dump(2) + "\n");
  return sum;
}

FeatureDataset load_features(const fs::path& dataset_dir, const std::string& split_name) {
  FeatureDataset d;
  const fs::path dir = dataset_dir / split_name;
  if (!fs::exists(dir)) return d;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".sub") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  bool first = true;
  for (const auto& f : files) {
    const SubsampleFile sf = read_subsample(f);
    const BinnedTensor t = bin(sf.sub, sf.bins, sf.window);
    const FeatureLayout l = FeatureLayout::for_tensor(t.bins, t.height, t.width);
    if (first) {
      d.layout = l;
      first = false;
    } else if (!(l == d.layout)) {
      throw InputError("subsamples with different shapes in " + dir.string());
    }
    d.items.push_back({pool_features_sparse(t), class_index(t.label), sf.sub.id()});
  }
  return d;
}

LoadedDataset load_dataset(const fs::path& dataset_dir) {
  LoadedDataset d;
  d.train = load_features(dataset_dir, "train");
  d.validation = load_features(dataset_dir, "val");
  d.test = load_features(dataset_dir, "test");
  if (d.train.empty()) throw InputError("no training subsamples in " + dataset_dir.string());
  if (d.validation.empty()) d.validation.layout = d.train.layout;
  if (d.test.empty()) d.test.layout = d.train.layout;
  d.scaler = prepare_features(d.train, {&d.validation, &d.test});
  return d;
}

// ---------------------------------------------------------------- hashing

std::string directory_hash(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root).generic_string());
  }
  std::sort(rel.begin(), rel.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 0x100000001b3ull;
    }
  };
  std::vector<char> buf(1 << 16);
  for (const auto& r : rel) {
    feed(r.c_str(), r.size() + 1);
    std::ifstream is(root / r, std::ios::binary);
    if (!is) throw IoError("cannot read " + (root / r).string());
    while (is) {
      is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      feed(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    feed("\0", 1);
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace slipforge
