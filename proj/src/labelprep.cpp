#include "slipforge/labelprep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "slipforge/errors.hpp"
#include "slipforge/rng.hpp"
#include "slipforge/slipdyn.hpp"

namespace slipforge {

namespace {

constexpr const char* kSubMagic = "SLIPSUB 1";

}  // namespace

void LabelThresholds::validate() const {
  if (!(theta_nonslip > 0.0) || !(theta_slip >= theta_nonslip) || !std::isfinite(theta_slip)) {
    throw ParamError("thresholds must satisfy theta_slip >= theta_nonslip > 0");
  }
}

std::string to_string(Label label) {
  switch (label) {
    case Label::slip: return "slip";
    case Label::nonslip: return "nonslip";
    case Label::excluded: return "excluded";
  }
  return "?";
}

std::string file_stem(Label label) {
  switch (label) {
    case Label::slip: return "rotation";
    case Label::nonslip: return "stable";
    case Label::excluded: break;
  }
  throw InternalError("excluded subsamples have no file name");
}

Label label_from_string(const std::string& s) {
  if (s == "slip") return Label::slip;
  if (s == "nonslip") return Label::nonslip;
  if (s == "excluded") return Label::excluded;
  throw ParseError("unknown label '" + s + "'", 0);
}

Label classify(double delta_theta, const LabelThresholds& t) {
  if (delta_theta > t.theta_slip) return Label::slip;
  if (delta_theta < t.theta_nonslip) return Label::nonslip;
  // Equal thresholds leave no exclusion band; the boundary value is not
  // "greater than" the slip threshold, so it counts as non-slip.
  if (t.theta_slip == t.theta_nonslip) return Label::nonslip;
  return Label::excluded;
}

std::vector<Event> crop_events(std::span<const Event> events, const CropWindow& w) {
  std::vector<Event> out;
  for (const Event& e : events) {
    const int x = e.x - w.x0, y = e.y - w.y0;
    if (x >= 0 && x < w.width && y >= 0 && y < w.height) {
      out.push_back({e.t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), e.polarity});
    }
  }
  return out;
}

EventStream crop(const EventStream& stream, const CropWindow& w) {
  if (stream.width == w.width && stream.height == w.height) return stream;
  if (w.x0 < 0 || w.y0 < 0 || w.x0 + w.width > stream.width || w.y0 + w.height > stream.height) {
    throw ParamError("crop window does not fit the sensor");
  }
  EventStream out;
  out.width = w.width;
  out.height = w.height;
  out.events = crop_events(stream.events, w);
  return out;
}

std::vector<Subsample> slice_and_label(const EventStream& stream, std::span<const AngularDifference> theta,
                                       const LabelThresholds& thresholds, WindowStatistic statistic,
                                       std::uint64_t sample_id, const CropWindow& window) {
  thresholds.validate();
  if (theta.empty()) throw AlignmentError("empty theta series");
  const double covered = static_cast<double>(theta.size() - 1) / kFrameRate;
  if (!stream.events.empty() && stream.events.back().t > covered + 1e-9) {
    throw AlignmentError("event stream (" + std::to_string(stream.events.back().t) +
                         " s) outlasts the theta series (" + std::to_string(covered) + " s)");
  }
  const EventStream cropped = crop(stream, window);
  const auto& ev = cropped.events;

  std::vector<Subsample> out;
  const std::size_t n_windows = theta.size() / kFramesPerSubsample;
  for (std::size_t k = 0; k < n_windows; ++k) {
    const std::size_t f0 = k * kFramesPerSubsample;
    Subsample s;
    s.sample_id = sample_id;
    s.window = static_cast<int>(k);
    s.start_time = static_cast<double>(f0) / kFrameRate;
    double lo = theta[f0].theta, hi = lo;
    for (std::size_t f = f0; f < f0 + kFramesPerSubsample; ++f) {
      lo = std::min(lo, theta[f].theta);
      hi = std::max(hi, theta[f].theta);
    }
    const double change = statistic == WindowStatistic::max_minus_min
                              ? hi - lo
                              : std::abs(theta[f0 + kFramesPerSubsample - 1].theta - theta[f0].theta);
    s.delta_theta = change * 180.0 / 3.14159265358979323846;
    s.label = classify(s.delta_theta, thresholds);

    auto first = std::lower_bound(ev.begin(), ev.end(), s.start_time,
                                  [](const Event& e, double t) { return e.t < t; });
    for (auto it = first; it != ev.end(); ++it) {
      const double tau = it->t - s.start_time;
      if (tau > s.duration) break;
      if (tau >= 0.0) s.events.push_back(*it);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::uint32_t BinnedTensor::at(int channel, int bin_, int y, int x) const {
  const auto key = static_cast<std::uint32_t>(flat(channel, bin_, y, x));
  const auto it = std::lower_bound(index.begin(), index.end(), key);
  if (it == index.end() || *it != key) return 0;
  return count[static_cast<std::size_t>(it - index.begin())];
}

std::uint64_t BinnedTensor::sum() const {
  std::uint64_t s = 0;
  for (std::uint32_t c : count) s += c;
  return s;
}

int bin_index(double tau, int bins, double duration) {
  const int b = static_cast<int>(std::floor(tau * bins / duration));
  return std::min(b, bins - 1);
}

BinnedTensor bin(const Subsample& sub, int bins, const CropWindow& window) {
  if (bins < 1) throw ParamError("bins must be >= 1");
  BinnedTensor t;
  t.bins = bins;
  t.height = window.height;
  t.width = window.width;
  t.label = sub.label;
  if (static_cast<std::size_t>(2) * bins * window.height * window.width > 0xFFFFFFFFull) {
    throw ParamError("tensor too large for 32-bit indexing");
  }
  std::vector<std::uint32_t> flat;
  flat.reserve(sub.events.size());
  for (const Event& e : sub.events) {
    const double tau = e.t - sub.start_time;
    if (!(tau >= 0.0 && tau <= sub.duration) || e.x >= window.width || e.y >= window.height) {
      throw InternalError("event outside the subsample window");
    }
    const int channel = e.polarity > 0 ? 0 : 1;
    flat.push_back(static_cast<std::uint32_t>(
        t.flat(channel, bin_index(tau, bins, sub.duration), e.y, e.x)));
  }
  std::sort(flat.begin(), flat.end());
  for (std::size_t i = 0; i < flat.size();) {
    std::size_t j = i;
    while (j < flat.size() && flat[j] == flat[i]) ++j;
    t.index.push_back(flat[i]);
    t.count.push_back(static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return t;
}

std::vector<Subsample> balance(std::vector<Subsample> subs, std::uint64_t seed) {
  std::vector<std::size_t> slip, nonslip;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    switch (subs[i].label) {
      case Label::slip: slip.push_back(i); break;
      case Label::nonslip: nonslip.push_back(i); break;
      case Label::excluded: throw BalanceError("excluded subsample in balance input");
    }
  }
  if (slip.empty() || nonslip.empty()) {
    throw BalanceError("cannot balance: slip=" + std::to_string(slip.size()) +
                       " nonslip=" + std::to_string(nonslip.size()));
  }
  std::vector<std::size_t>& larger = slip.size() > nonslip.size() ? slip : nonslip;
  const std::size_t keep = std::min(slip.size(), nonslip.size());
  std::vector<bool> drop(subs.size(), false);
  Rng rng(seed);
  rng.shuffle(larger);
  for (std::size_t i = keep; i < larger.size(); ++i) drop[larger[i]] = true;
  std::vector<Subsample> out;
  out.reserve(2 * keep);
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!drop[i]) out.push_back(std::move(subs[i]));
  }
  return out;
}

DatasetSplit split(std::span<const Subsample> subs, std::uint64_t seed, double train_fraction) {
  if (subs.size() < 5) throw SplitError("need at least 5 subsamples, got " + std::to_string(subs.size()));
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw SplitError("train fraction must be in (0, 1)");
  DatasetSplit out;
  out.seed = seed;
  std::vector<bool> to_train(subs.size(), false);
  const Label classes[2] = {Label::slip, Label::nonslip};
  for (std::uint64_t c = 0; c < 2; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i].label == classes[c]) members.push_back(i);
    }
    Rng rng(derive_seed(seed, c));
    rng.shuffle(members);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < n_train; ++i) to_train[members[i]] = true;
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i].label == Label::excluded) throw SplitError("excluded subsample in split input");
    (to_train[i] ? out.train : out.validation).push_back(subs[i].id());
  }
  return out;
}

void write_subsample(const std::filesystem::path& path, const Subsample& sub, int bins, const CropWindow& w) {
  nlohmann::json h;
  h["sample_id"] = sub.sample_id;
  h["window"] = sub.window;
  h["start_time"] = sub.start_time;
  h["duration"] = sub.duration;
  h["label"] = to_string(sub.label);
  h["delta_theta"] = sub.delta_theta;
  h["bins"] = bins;
  h["crop"] = {{"x0", w.x0}, {"y0", w.y0}, {"width", w.width}, {"height", w.height}};
  h["event_count"] = sub.events.size();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << kSubMagic << '\n' << h.dump() << '\n';
  std::vector<unsigned char> buf(kBinaryEventSize * sub.events.size());
  for (std::size_t i = 0; i < sub.events.size(); ++i) pack_event(sub.events[i], buf.data() + i * kBinaryEventSize);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

SubsampleFile read_subsample(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic, header;
  std::getline(is, magic);
  if (magic != kSubMagic) throw ParseError("not a subsample file: " + path.string(), 1);
  std::getline(is, header);
  SubsampleFile f;
  std::size_t n = 0;
  try {
    const auto h = nlohmann::json::parse(header);
    f.sub.sample_id = h.at("sample_id").get<std::uint64_t>();
    f.sub.window = h.at("window").get<int>();
    f.sub.start_time = h.at("start_time").get<double>();
    f.sub.duration = h.at("duration").get<double>();
    f.sub.label = label_from_string(h.at("label").get<std::string>());
    f.sub.delta_theta = h.at("delta_theta").get<double>();
    f.bins = h.at("bins").get<int>();
    const auto& c = h.at("crop");
    f.window = {c.at("x0").get<int>(), c.at("y0").get<int>(), c.at("width").get<int>(), c.at("height").get<int>()};
    n = h.at("event_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad subsample header in " + path.string() + ": " + e.what(), 2);
  }
  std::vector<unsigned char> buf(n * kBinaryEventSize);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw ParseError("truncated subsample payload in " + path.string(), static_cast<long long>(is.gcount()));
  }
  f.sub.events.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.sub.events[i] = unpack_event(buf.data() + i * kBinaryEventSize);
  return f;
}

}  // namespace slipforge
