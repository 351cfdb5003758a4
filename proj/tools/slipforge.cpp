// slipforge: synthetic event-camera slip datasets and classifiers.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slipforge/errors.hpp"
#include "slipforge/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace slipforge;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string run;
  std::string data;
  std::string params;
  std::string checkpoint;
  std::string split = "test";
  std::string model = "mlp";
  int jobs = 1;
  int runs = -1;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::optional<bool> frames;
};

PipelineConfig config_of(const Options& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.frames) c.dump_frames = *o.frames;
  return c;
}

void set_threads(int jobs) {
#ifdef _OPENMP
  omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<SampleSpec> read_samples(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  const json j = json::parse(is);
  std::vector<SampleSpec> out;
  for (const auto& e : j) {
    out.push_back({e.at("id").get<std::size_t>(), scenario_params_from_json(e.at("params")),
                   partition_from_string(e.at("partition").get<std::string>())});
  }
  return out;
}

void print_manifest(const Manifest& m) {
  std::printf("samples %zu: ok %zu, diverged %zu, failed %zu\n", m.samples.size(), m.count(SampleStatus::ok),
              m.count(SampleStatus::diverged), m.count(SampleStatus::failed));
  for (const auto& r : m.samples) {
    if (r.status != SampleStatus::ok) std::printf("  sample %zu %s: %s\n", r.id, to_string(r.status).c_str(), r.error.c_str());
  }
}

int cmd_gen_params(const Options& o) {
  PipelineConfig c = config_of(o);
  if (o.seed) c.sweep.seed = *o.seed;
  json out = json::array();
  for (const auto& s : gen_params(c.sweep)) {
    out.push_back({{"id", s.id}, {"partition", to_string(s.partition)}, {"params", to_json(s.params)}});
  }
  if (o.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    write_json(o.out, out);
    std::printf("%zu parameter sets written to %s\n", out.size(), o.out.c_str());
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  PipelineConfig c = config_of(o);
  if (o.seed) c.sweep.seed = *o.seed;
  const RunOptions ro{o.jobs, o.resume};
  const Manifest m = o.params.empty() ? run_dataset(c, o.out, ro) : run_dataset(c, read_samples(o.params), o.out, ro);
  print_manifest(m);
  return m.all_ok() ? 0 : 1;
}

int cmd_events(const Options& o) {
  const PipelineConfig c = config_of(o);
  set_threads(o.jobs);
  Manifest m = read_manifest(fs::path(o.run) / kManifestFile);
  for (auto& r : m.samples) {
    if (r.status != SampleStatus::ok) continue;
    try {
      regenerate_events(fs::path(o.run) / r.dir, c);
      r = sample_record_from_json(json::parse(std::ifstream(fs::path(o.run) / r.dir / kRecordFile)));
    } catch (const std::exception& e) {
      r.status = SampleStatus::failed;
      r.error = e.what();
    }
  }
  write_json(fs::path(o.run) / kManifestFile, to_json(m));
  print_manifest(m);
  return m.all_ok() ? 0 : 1;
}

int cmd_label(const Options& o) {
  PipelineConfig c = config_of(o);
  if (o.seed) c.label.seed = *o.seed;
  const Manifest m = read_manifest(fs::path(o.run) / kManifestFile);
  const LabelSummary s = run_labelprep(m, o.run, c.label, o.out);
  std::printf("windows %zu: slip %zu, nonslip %zu, excluded %zu\n", s.windows, s.slip, s.nonslip, s.excluded);
  std::printf("balanced split: train %zu, val %zu, test %zu\n", s.train, s.validation, s.test);
  return 0;
}

const ModelConfig& model_of(const PipelineConfig& c, const std::string& name) {
  return model_kind_from_string(name) == ModelKind::mlp ? c.mlp : c.snn;
}

int cmd_train(const Options& o) {
  PipelineConfig c = config_of(o);
  if (o.seed) c.train.seed = *o.seed;
  set_threads(o.jobs);
  LoadedDataset d = load_dataset(o.data);
  TrainResult r = train(model_of(c, o.model), d.train, d.validation, c.train);
  r.best.scaler = d.scaler;
  if (!d.test.empty()) {
    const EvalResult t = evaluate(r.best, d.test);
    r.record.test_accuracy = t.accuracy;
    r.record.test_loss = t.loss;
  }
  fs::create_directories(o.out);
  save_checkpoint(fs::path(o.out) / "model.ckpt", r.best);
  write_json(fs::path(o.out) / "run.json", to_json(r.record));
  for (const auto& e : r.record.epochs) {
    std::printf("epoch %2d  loss %.4f  acc %.3f  val_loss %.4f  val_acc %.3f\n", e.epoch, e.train_loss,
                e.train_accuracy, e.val_loss, e.val_accuracy);
  }
  std::printf("best val_acc %.3f at epoch %d", r.record.best_val_accuracy, r.record.best_epoch);
  if (r.record.test_accuracy) std::printf(", test_acc %.3f", *r.record.test_accuracy);
  std::printf("\n");
  return 0;
}

int cmd_eval(const Options& o) {
  set_threads(o.jobs);
  const Classifier model = load_checkpoint(o.checkpoint);
  FeatureDataset d = load_features(o.data, o.split);
  if (d.empty()) throw EvalError("no subsamples in split '" + o.split + "'");
  if (!model.scaler.scale.empty()) model.scaler.apply(d);
  const EvalResult r = evaluate(model, d);
  std::printf("%s: accuracy %.4f (%zu/%zu), loss %.4f\n", o.split.c_str(), r.accuracy, r.correct, r.total, r.loss);
  return 0;
}

int cmd_sweep(const Options& o) {
  PipelineConfig c = config_of(o);
  const std::uint64_t seed = o.seed.value_or(c.train.seed);
  const int runs = o.runs > 0 ? o.runs : c.sweep_runs;
  LoadedDataset d = load_dataset(o.data);
  const SweepResult r = sweep(model_of(c, o.model), c.sweep_space, runs, seed, d.train, d.validation,
                              d.test.empty() ? nullptr : &d.test, o.out, o.jobs);
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    const RunRecord& rec = r.runs[i];
    std::printf("run %3zu  %-7s lr %.1e  batch %3d  ", i, to_string(rec.config.optimizer).c_str(),
                rec.config.learning_rate, rec.config.batch_size);
    if (rec.diverged_epoch) {
      std::printf("diverged in epoch %d\n", *rec.diverged_epoch);
    } else {
      std::printf("val_acc %.3f", rec.best_val_accuracy);
      if (rec.test_accuracy) std::printf("  test_acc %.3f", *rec.test_accuracy);
      std::printf("\n");
    }
  }
  const RunRecord& best = r.runs[r.best];
  write_json(fs::path(o.out) / "summary.json",
             {{"best_run", r.best}, {"best_val_accuracy", best.best_val_accuracy}, {"best", to_json(best)}});
  std::printf("best run %zu: val_acc %.3f\n", r.best, best.best_val_accuracy);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic event-camera slip datasets and slip classifiers"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* s) { s->add_option("-c,--config", o.config, "Pipeline config (JSON)"); };
  auto add_seed = [&](CLI::App* s, const char* what) { s->add_option("--seed", o.seed, what); };
  auto add_jobs = [&](CLI::App* s) {
    s->add_option("-j,--jobs", o.jobs, "Parallelism")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-params", "Expand the sweep into parameter sets");
  add_config(gen);
  gen->add_option("-o,--out", o.out, "Output JSON file (stdout if omitted)");
  add_seed(gen, "Master seed (overrides the config)");

  auto* sim = app.add_subcommand("simulate", "Run slip dynamics, rendering and event synthesis");
  add_config(sim);
  sim->add_option("-o,--out", o.out, "Run directory")->required();
  sim->add_option("-p,--params", o.params, "Parameter sets from gen-params instead of the config sweep");
  add_jobs(sim);
  add_seed(sim, "Master seed (overrides the config)");
  sim->add_flag("--resume", o.resume, "Keep finished samples already in the run directory");
  sim->add_flag("--frames,!--no-frames", o.frames, "Dump every rendered frame as PGM");

  auto* ev = app.add_subcommand("events", "Re-synthesize events of a run with the config's event model");
  add_config(ev);
  ev->add_option("-r,--run", o.run, "Run directory")->required();
  add_jobs(ev);

  auto* lab = app.add_subcommand("label", "Slice, label, balance and split a run into a dataset");
  add_config(lab);
  lab->add_option("-r,--run", o.run, "Run directory")->required();
  lab->add_option("-o,--out", o.out, "Dataset directory")->required();
  add_seed(lab, "Balance/split seed (overrides the config)");

  auto* tr = app.add_subcommand("train", "Train one classifier");
  add_config(tr);
  tr->add_option("-d,--data", o.data, "Dataset directory")->required();
  tr->add_option("-o,--out", o.out, "Model directory")->required();
  tr->add_option("-m,--model", o.model, "mlp or snn")->check(CLI::IsMember({"mlp", "snn"}));
  add_jobs(tr);
  add_seed(tr, "Training seed (overrides the config)");

  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  evl->add_option("-k,--checkpoint", o.checkpoint, "Checkpoint file")->required();
  evl->add_option("-d,--data", o.data, "Dataset directory")->required();
  evl->add_option("-s,--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  add_jobs(evl);

  auto* sw = app.add_subcommand("sweep", "Random hyperparameter search");
  add_config(sw);
  sw->add_option("-d,--data", o.data, "Dataset directory")->required();
  sw->add_option("-o,--out", o.out, "Record directory")->required();
  sw->add_option("-m,--model", o.model, "mlp or snn")->check(CLI::IsMember({"mlp", "snn"}));
  sw->add_option("-n,--runs", o.runs, "Number of runs (default from the config)");
  add_jobs(sw);
  add_seed(sw, "Sweep seed (overrides the config's train seed)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_params(o);
    if (*sim) return cmd_simulate(o);
    if (*ev) return cmd_events(o);
    if (*lab) return cmd_label(o);
    if (*tr) return cmd_train(o);
    if (*evl) return cmd_eval(o);
    if (*sw) return cmd_sweep(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "slipforge: %s\n", e.what());
    return 1;
  }
  return 1;
}
