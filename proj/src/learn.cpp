#include "slipforge/learn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slipforge/errors.hpp"
#include "slipforge/rng.hpp"

namespace slipforge {

using nlohmann::json;

std::string to_string(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "snn"; }
std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "rmsprop"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "snn") return ModelKind::snn;
  throw ParamError("unknown model kind '" + s + "'");
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ParamError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ParamError("learning rate must be >= 0");
  if (batch_size < 1) throw ParamError("batch size must be >= 1");
  if (epochs < 0) throw ParamError("epochs must be >= 0");
}

// ---------------------------------------------------------------- Classifier

Classifier Classifier::create(const ModelConfig& cfg, const FeatureLayout& layout, std::uint64_t seed) {
  if (cfg.kind == ModelKind::mlp) {
    return Classifier(cfg, layout, seed, MlpNet<float>(layout.dim(), cfg.mlp_hidden, seed));
  }
  return Classifier(cfg, layout, seed, SnnNet<float>(layout, cfg.snn_hidden, cfg.snn, seed));
}

std::vector<float>& Classifier::params() {
  return std::visit([](auto& n) -> std::vector<float>& { return n.params(); }, net_);
}

const std::vector<float>& Classifier::params() const {
  return std::visit([](const auto& n) -> const std::vector<float>& { return n.params(); }, net_);
}

BatchStats Classifier::loss_and_grad(std::span<const LabeledFeatures* const> batch, std::vector<float>& grad) const {
  return std::visit([&](const auto& n) { return n.loss_and_grad(batch, grad); }, net_);
}

int Classifier::predict(const SparseVec& x) const {
  return std::visit([&](const auto& n) { return n.predict(x); }, net_);
}

double Classifier::loss(const LabeledFeatures& e) const {
  return std::visit([&](const auto& n) { return static_cast<double>(n.loss(e)); }, net_);
}

std::pair<int, double> Classifier::predict_and_loss(const LabeledFeatures& e) const {
  return std::visit(
      [&](const auto& n) {
        const auto [p, l] = n.predict_and_loss(e);
        return std::pair<int, double>(p, static_cast<double>(l));
      },
      net_);
}

// ---------------------------------------------------------------- JSON

json to_json(const TrainConfig& c) {
  return {{"optimizer", to_string(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.optimizer = optimizer_from_string(j.value("optimizer", to_string(c.optimizer)));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json to_json(const ModelConfig& m) {
  return {{"kind", to_string(m.kind)},
          {"mlp_hidden", m.mlp_hidden},
          {"snn_hidden", m.snn_hidden},
          {"snn",
           {{"decay", m.snn.decay},
            {"threshold", m.snn.threshold},
            {"surrogate_slope", m.snn.surrogate_slope},
            {"input_gain", m.snn.input_gain},
            {"target_true", m.snn.target_true},
            {"target_false", m.snn.target_false}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.kind = model_kind_from_string(j.value("kind", to_string(m.kind)));
  m.mlp_hidden = j.value("mlp_hidden", m.mlp_hidden);
  m.snn_hidden = j.value("snn_hidden", m.snn_hidden);
  if (j.contains("snn")) {
    const json& s = j.at("snn");
    m.snn.decay = s.value("decay", m.snn.decay);
    m.snn.threshold = s.value("threshold", m.snn.threshold);
    m.snn.surrogate_slope = s.value("surrogate_slope", m.snn.surrogate_slope);
    m.snn.input_gain = s.value("input_gain", m.snn.input_gain);
    m.snn.target_true = s.value("target_true", m.snn.target_true);
    m.snn.target_false = s.value("target_false", m.snn.target_false);
  }
  m.snn.validate();
  return m;
}

json to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_loss_median", e.train_loss_median},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
  }
  json j = {{"model", to_json(r.model)},
            {"config", to_json(r.config)},
            {"epochs", epochs},
            {"best_val_accuracy", r.best_val_accuracy},
            {"best_epoch", r.best_epoch}};
  if (r.test_accuracy) j["test_accuracy"] = *r.test_accuracy;
  if (r.test_loss) j["test_loss"] = *r.test_loss;
  if (r.diverged_epoch) j["diverged_epoch"] = *r.diverged_epoch;
  return j;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.model = model_config_from_json(j.at("model"));
  r.config = train_config_from_json(j.at("config"));
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                        e.at("train_loss_median").get<double>(), e.at("train_accuracy").get<double>(),
                        e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>()});
  }
  r.best_val_accuracy = j.at("best_val_accuracy").get<double>();
  r.best_epoch = j.at("best_epoch").get<int>();
  if (j.contains("test_accuracy")) r.test_accuracy = j.at("test_accuracy").get<double>();
  if (j.contains("test_loss")) r.test_loss = j.at("test_loss").get<double>();
  if (j.contains("diverged_epoch")) r.diverged_epoch = j.at("diverged_epoch").get<int>();
  return r;
}

// ---------------------------------------------------------------- evaluation

EvalResult evaluate(const Classifier& model, const FeatureDataset& data) {
  if (data.empty()) throw EvalError("cannot evaluate on an empty set");
  const std::size_t n = data.size();
  std::vector<int> hit(n);
  std::vector<double> loss(n);
  for (const auto& item : data.items) {
    if (!item.x.index.empty() && static_cast<int>(item.x.index.back()) >= model.layout().dim()) {
      throw EvalError("feature dimension does not match the model");
    }
  }
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = data.items[i];
    const auto [pred, l] = model.predict_and_loss(item);
    hit[i] = pred == item.label ? 1 : 0;
    loss[i] = l;
  }
  EvalResult r;
  r.total = n;
  double total_loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.correct += static_cast<std::size_t>(hit[i]);
    total_loss += loss[i];
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(n);
  r.loss = total_loss / static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------- training

FeatureScaler prepare_features(FeatureDataset& train_set, std::initializer_list<FeatureDataset*> others) {
  FeatureScaler sc = FeatureScaler::fit(train_set);
  sc.apply(train_set);
  for (FeatureDataset* d : others) {
    if (d != nullptr && !d->empty()) sc.apply(*d);
  }
  return sc;
}

TrainResult train(const ModelConfig& model_cfg, const FeatureDataset& train_set, const FeatureDataset& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw InputError("training needs non-empty train and validation sets");
  if (!(train_set.layout == val_set.layout)) throw InputError("train and validation layouts differ");

  Classifier model = Classifier::create(model_cfg, train_set.layout, derive_seed(cfg.seed, 0, 1));
  Classifier best = model;
  Optimizer<float> opt(cfg.optimizer, cfg.learning_rate, model.params().size());
  Rng order_rng(derive_seed(cfg.seed, 0, 2));

  RunRecord rec;
  rec.model = model_cfg;
  rec.config = cfg;
  {
    const EvalResult v0 = evaluate(model, val_set);
    rec.best_val_accuracy = v0.accuracy;
    rec.best_epoch = 0;
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<float> grad;
  std::vector<const LabeledFeatures*> batch;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<double> batch_losses;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&train_set.items[order[i]]);
      const BatchStats st = model.loss_and_grad(batch, grad);
      if (!std::isfinite(st.loss)) throw DivergedError(epoch);
      opt.step(model.params(), grad);
      loss_sum += st.loss * static_cast<double>(batch.size());
      correct += static_cast<std::size_t>(st.correct);
      batch_losses.push_back(st.loss);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    std::sort(batch_losses.begin(), batch_losses.end());
    const std::size_t nb = batch_losses.size();
    m.train_loss_median = nb % 2 ? batch_losses[nb / 2] : 0.5 * (batch_losses[nb / 2 - 1] + batch_losses[nb / 2]);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const EvalResult v = evaluate(model, val_set);
    if (!std::isfinite(v.loss)) throw DivergedError(epoch);
    m.val_loss = v.loss;
    m.val_accuracy = v.accuracy;
    rec.epochs.push_back(m);
    if (v.accuracy > rec.best_val_accuracy) {
      rec.best_val_accuracy = v.accuracy;
      rec.best_epoch = epoch;
      best.params() = model.params();
    }
  }
  return {std::move(rec), std::move(best)};
}

// ---------------------------------------------------------------- sweep

SweepResult sweep(const ModelConfig& model, const SweepSpace& space, int n_runs, std::uint64_t seed,
                  const FeatureDataset& train_set, const FeatureDataset& val_set, const FeatureDataset* test_set,
                  const std::filesystem::path& record_dir, int parallelism) {
  if (space.learning_rates.empty() || space.batch_sizes.empty() || space.optimizers.empty()) {
    throw ParamError("sweep space must be non-empty");
  }
  if (n_runs < 1) throw ParamError("n_runs must be >= 1");
  if (parallelism < 1) throw ParamError("parallelism must be >= 1");
  if (!record_dir.empty()) std::filesystem::create_directories(record_dir);

  std::vector<TrainConfig> configs(static_cast<std::size_t>(n_runs));
  for (int r = 0; r < n_runs; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r), 11));
    TrainConfig c;
    c.learning_rate = space.learning_rates[rng.index(space.learning_rates.size())];
    c.batch_size = space.batch_sizes[rng.index(space.batch_sizes.size())];
    c.optimizer = space.optimizers[rng.index(space.optimizers.size())];
    c.epochs = space.epochs;
    c.seed = derive_seed(seed, static_cast<std::uint64_t>(r), 12);
    configs[static_cast<std::size_t>(r)] = c;
  }

  SweepResult out;
  out.runs.resize(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  const int workers = std::min(parallelism, n_runs);
  int omp_threads = 1;
#ifdef _OPENMP
  omp_threads = std::max(1, omp_get_max_threads() / workers);
#endif

  auto work = [&] {
#ifdef _OPENMP
    omp_set_num_threads(omp_threads);
#endif
    for (int r = next++; r < n_runs; r = next++) {
      try {
        const TrainConfig& c = configs[static_cast<std::size_t>(r)];
        RunRecord rec;
        try {
          TrainResult res = train(model, train_set, val_set, c);
          rec = std::move(res.record);
          if (test_set != nullptr && !test_set->empty()) {
            const EvalResult t = evaluate(res.best, *test_set);
            rec.test_accuracy = t.accuracy;
            rec.test_loss = t.loss;
          }
        } catch (const DivergedError& e) {
          rec.model = model;
          rec.config = c;
          rec.diverged_epoch = e.epoch();
        }
        if (!record_dir.empty()) {
          char name[32];
          std::snprintf(name, sizeof name, "run_%03d.json", r);
          std::ofstream os(record_dir / name);
          if (!os) throw IoError("cannot write " + (record_dir / name).string());
          os << to_json(rec).dump(2) << '\n';
        }
        out.runs[static_cast<std::size_t>(r)] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t i = 1; i < out.runs.size(); ++i) {
    if (out.runs[i].best_val_accuracy > out.runs[out.best].best_val_accuracy) out.best = i;
  }
  return out;
}

// ---------------------------------------------------------------- gradient check

namespace {

template <class Net>
GradCheckResult check_net(Net& net, const FeatureDataset& data, std::uint64_t seed, int n_params, double h) {
  std::vector<const LabeledFeatures*> batch;
  for (const auto& item : data.items) batch.push_back(&item);
  std::vector<double> grad, scratch;
  net.loss_and_grad(batch, grad);
  auto& p = net.params();
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  GradCheckResult r;
  r.parameter_count = p.size();
  const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(std::max(0, n_params)));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx[k];
    const double saved = p[i];
    p[i] = saved + h;
    const double up = net.loss_and_grad(batch, scratch).loss;
    p[i] = saved - h;
    const double down = net.loss_and_grad(batch, scratch).loss;
    p[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(fd - grad[i]) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace

GradCheckResult finite_difference_check(ModelKind kind, const FeatureDataset& batch, std::uint64_t seed,
                                        std::vector<int> hidden, int n_params, double h, SnnParams snn) {
  if (batch.empty()) throw InputError("gradient check needs a non-empty batch");
  constexpr std::size_t kMaxParams = 10000;
  if (kind == ModelKind::mlp) {
    if (hidden.empty()) hidden = {16, 8};
    MlpNet<double> net(batch.layout.dim(), hidden, derive_seed(seed, 0, 1));
    if (net.params().size() > kMaxParams) throw ParamError("gradient check model exceeds 1e4 parameters");
    return check_net(net, batch, derive_seed(seed, 0, 2), n_params, h);
  }
  if (hidden.empty()) hidden = {8};
  snn.smooth = true;
  SnnNet<double> net(batch.layout, hidden, snn, derive_seed(seed, 0, 1));
  if (net.params().size() > kMaxParams) throw ParamError("gradient check model exceeds 1e4 parameters");
  return check_net(net, batch, derive_seed(seed, 0, 2), n_params, h);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointMagic = "SFCKPT 1";

void write_floats(std::ostream& os, const std::vector<float>& v) {
  std::vector<unsigned char> buf(4 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &v[i], 4);
    for (int b = 0; b < 4; ++b) buf[4 * i + static_cast<std::size_t>(b)] = static_cast<unsigned char>(u >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_floats(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<unsigned char> buf(4 * n);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw ParseError("truncated " + what, static_cast<long long>(is.gcount()));
  }
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&v[i], &u, 4);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Classifier& model) {
  const FeatureLayout& l = model.layout();
  json h = {{"kind", to_string(model.kind())},
            {"model", to_json(model.config())},
            {"layout", {{"bins", l.bins}, {"pooled_height", l.pooled_height}, {"pooled_width", l.pooled_width}}},
            {"seed", model.seed()},
            {"param_count", model.params().size()},
            {"scaler_size", model.scaler.scale.size()}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << kCheckpointMagic << '\n' << h.dump() << '\n';
  write_floats(os, model.params());
  write_floats(os, model.scaler.scale);
  if (!os) throw IoError("write failed for " + path.string());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic, header;
  std::getline(is, magic);
  if (magic != kCheckpointMagic) throw ParseError("not a checkpoint: " + path.string(), 1);
  std::getline(is, header);
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), 2);
  }
  const ModelConfig cfg = model_config_from_json(h.at("model"));
  const json& lj = h.at("layout");
  FeatureLayout layout{lj.at("bins").get<int>(), lj.at("pooled_height").get<int>(), lj.at("pooled_width").get<int>()};
  Classifier c = Classifier::create(cfg, layout, h.at("seed").get<std::uint64_t>());
  const auto n = h.at("param_count").get<std::size_t>();
  if (n != c.params().size()) throw ParseError("checkpoint parameter count does not match its architecture", 2);
  c.params() = read_floats(is, n, "checkpoint parameters");
  c.scaler.scale = read_floats(is, h.at("scaler_size").get<std::size_t>(), "checkpoint scaler");
  return c;
}

}  // namespace slipforge
