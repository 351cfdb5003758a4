#include "slipforge/evsim.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>

#include "slipforge/errors.hpp"

namespace slipforge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();
// An interval whose endpoints stay this far inside both thresholds cannot
// produce a crossing in any sub-step, whatever the sub-step rounding.
constexpr double kSkipMargin = 1e-9;

void check_spacing(double dt, double expected) {
  if (!(dt > 0.0)) throw InputError("frame timestamps must be strictly increasing");
  if (std::abs(dt - expected) > 1e-9 * std::max(1.0, expected)) {
    throw InputError("frames are not uniformly spaced");
  }
}

}  // namespace

void EventModelParams::validate() const {
  if (!(contrast_threshold > 0.0)) throw ParamError("contrast threshold must be positive");
  if (!(threshold_sigma >= 0.0)) throw ParamError("threshold sigma must be >= 0");
  if (!(refractory >= 0.0)) throw ParamError("refractory period must be >= 0");
  if (!(leak_rate >= 0.0) || !(shot_noise_rate >= 0.0)) throw ParamError("noise rates must be >= 0");
  if (upsample_factor < 1) throw ParamError("upsample factor must be >= 1");
  if (!(log_eps > 0.0)) throw ParamError("log_eps must be positive");
}

double pixel_threshold(const EventModelParams& params, std::uint64_t seed, std::size_t pixel) {
  const double c = params.contrast_threshold;
  if (params.threshold_sigma == 0.0) return c;
  SplitMix64 rng(derive_seed(seed, pixel, 1));
  return std::clamp(rng.normal(c, params.threshold_sigma), 0.25 * c, 4.0 * c);
}

PixelNoise::PixelNoise(const EventModelParams& params, std::uint64_t seed, std::size_t pixel, double t0)
    : leak_rate_(params.leak_rate),
      shot_rate_(params.shot_noise_rate),
      leak_(derive_seed(seed, pixel, 2)),
      shot_(derive_seed(seed, pixel, 3)),
      next_leak_(kInf),
      next_shot_(kInf) {
  if (leak_rate_ > 0.0) next_leak_ = t0 + leak_.exponential(leak_rate_);
  if (shot_rate_ > 0.0) next_shot_ = t0 + shot_.exponential(shot_rate_);
}

EventSimulator::EventSimulator(int width, int height, const EventModelParams& params, std::uint64_t seed)
    : width_(width), height_(height), params_(params), seed_(seed) {
  params_.validate();
  if (width <= 0 || height <= 0 || width > 65535 || height > 65535) {
    throw InputError("invalid sensor size");
  }
  row_events_.resize(static_cast<std::size_t>(height));
}

void EventSimulator::push(const Frame& frame) {
  if (frame.width != width_ || frame.height != height_ ||
      frame.pixels.size() != static_cast<std::size_t>(width_) * height_) {
    throw InputError("frame resolution does not match the sensor");
  }
  const double eps = params_.log_eps;
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  if (frames_ == 0) {
    state_.resize(n);
    noise_.clear();
    noise_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double l = std::log(static_cast<double>(frame.pixels[i]) + eps);
      state_[i] = {l, l, pixel_threshold(params_, seed_, i), kNegInf};
      noise_.emplace_back(params_, seed_, i, frame.timestamp);
    }
    t_prev_ = frame.timestamp;
    frames_ = 1;
    return;
  }
  const double dt = frame.timestamp - t_prev_;
  if (frames_ == 1) {
    if (!(dt > 0.0)) throw InputError("frame timestamps must be strictly increasing");
    dt_ = dt;
  } else {
    check_spacing(dt, dt_);
  }

  const int up = params_.upsample_factor;
  const double refractory = params_.refractory;
  const double t0 = t_prev_;
  const double t1 = frame.timestamp;

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < height_; ++y) {
    std::vector<Event>& out = row_events_[static_cast<std::size_t>(y)];
    out.clear();
    for (int x = 0; x < width_; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
      PixelState& px = state_[i];
      const double l0 = px.log_prev;
      const double l1 = std::log(static_cast<double>(frame.pixels[i]) + eps);
      const double c = px.threshold;
      const double lo = std::min(l0, l1), hi = std::max(l0, l1);
      const auto ux = static_cast<std::uint16_t>(x), uy = static_cast<std::uint16_t>(y);
      if (hi + kSkipMargin < px.log_ref + c && lo - kSkipMargin > px.log_ref - c) {
        px.log_prev = l1;
      } else {
        const double delta = l1 - l0;
        for (int s = 0; s < up; ++s) {
          const double fa = static_cast<double>(s) / up;
          const double fb = static_cast<double>(s + 1) / up;
          const double a = l0 + delta * fa;
          const double b = l0 + delta * fb;
          const double ta = t0 + (t1 - t0) * fa;
          const double tb = t0 + (t1 - t0) * fb;
          if (b > a) {
            while (b >= px.log_ref + c) {
              const double target = px.log_ref + c;
              const double f = std::clamp((target - a) / (b - a), 0.0, 1.0);
              const double t = ta + f * (tb - ta);
              if (!(t - px.last_event < refractory)) {
                out.push_back({t, ux, uy, 1});
                px.last_event = t;
              }
              px.log_ref = target;
            }
          } else if (b < a) {
            while (b <= px.log_ref - c) {
              const double target = px.log_ref - c;
              const double f = std::clamp((target - a) / (b - a), 0.0, 1.0);
              const double t = ta + f * (tb - ta);
              if (!(t - px.last_event < refractory)) {
                out.push_back({t, ux, uy, -1});
                px.last_event = t;
              }
              px.log_ref = target;
            }
          }
        }
        px.log_prev = l1;
      }
      noise_[i].emit_until(t1, ux, uy, [&out](const Event& e) { out.push_back(e); });
    }
  }

  std::size_t total = 0;
  for (const auto& r : row_events_) total += r.size();
  pending_.reserve(pending_.size() + total);
  for (const auto& r : row_events_) pending_.insert(pending_.end(), r.begin(), r.end());
  t_prev_ = t1;
  ++frames_;
}

EventStream EventSimulator::finish() {
  if (frames_ < 2) throw InputError("at least two frames are required");
  EventStream s;
  s.width = width_;
  s.height = height_;
  s.events = std::move(pending_);
  pending_.clear();
  std::sort(s.events.begin(), s.events.end(), event_less);
  frames_ = 0;
  return s;
}

EventStream frames_to_events(std::span<const Frame> frames, const EventModelParams& params,
                             std::uint64_t seed) {
  if (frames.size() < 2) throw InputError("at least two frames are required");
  EventSimulator sim(frames.front().width, frames.front().height, params, seed);
  for (const Frame& f : frames) sim.push(f);
  return sim.finish();
}

EventStream reference_frames_to_events(std::span<const Frame> frames, const EventModelParams& params,
                                       std::uint64_t seed) {
  params.validate();
  if (frames.size() < 2) throw InputError("at least two frames are required");
  const int w = frames.front().width;
  const int h = frames.front().height;
  for (const Frame& f : frames) {
    if (f.width != w || f.height != h || f.pixels.size() != static_cast<std::size_t>(w) * h) {
      throw InputError("frame resolutions differ");
    }
  }
  const double expected = frames[1].timestamp - frames[0].timestamp;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    check_spacing(frames[k].timestamp - frames[k - 1].timestamp, expected);
  }

  const std::size_t n = static_cast<std::size_t>(w) * h;
  const double eps = params.log_eps;
  std::vector<double> log_ref(n), threshold(n), last(n, kNegInf);
  for (std::size_t i = 0; i < n; ++i) {
    log_ref[i] = std::log(static_cast<double>(frames[0].pixels[i]) + eps);
    threshold[i] = pixel_threshold(params, seed, i);
  }

  std::vector<Event> events;
  const int up = params.upsample_factor;
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    const double t0 = frames[k].timestamp;
    const double t1 = frames[k + 1].timestamp;
    for (int s = 0; s < up; ++s) {
      const double fa = static_cast<double>(s) / up;
      const double fb = static_cast<double>(s + 1) / up;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double l0 = std::log(static_cast<double>(frames[k].pixels[i]) + eps);
          const double l1 = std::log(static_cast<double>(frames[k + 1].pixels[i]) + eps);
          const double a = l0 + (l1 - l0) * fa;
          const double b = l0 + (l1 - l0) * fb;
          const double ta = t0 + (t1 - t0) * fa;
          const double tb = t0 + (t1 - t0) * fb;
          const double c = threshold[i];
          int polarity = 0;
          if (b > a) polarity = 1;
          if (b < a) polarity = -1;
          while (polarity != 0) {
            const double target = log_ref[i] + polarity * c;
            const bool crossed = polarity > 0 ? b >= target : b <= target;
            if (!crossed) break;
            const double f = std::clamp((target - a) / (b - a), 0.0, 1.0);
            const double t = ta + f * (tb - ta);
            if (!(t - last[i] < params.refractory)) {
              events.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                static_cast<std::int8_t>(polarity)});
              last[i] = t;
            }
            log_ref[i] = target;
          }
        }
      }
    }
  }

  const double t_begin = frames.front().timestamp;
  const double t_end = frames.back().timestamp;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      PixelNoise noise(params, seed, i, t_begin);
      noise.emit_until(t_end, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                       [&events](const Event& e) { events.push_back(e); });
    }
  }

  std::stable_sort(events.begin(), events.end(), event_less);
  EventStream out;
  out.width = w;
  out.height = h;
  out.events = std::move(events);
  return out;
}

}  // namespace slipforge
