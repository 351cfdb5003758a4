#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "slipforge/render.hpp"
#include "slipforge/rng.hpp"

namespace slipforge {

struct EventModelParams {
  double contrast_threshold = 0.2;  // log-intensity units, ON and OFF
  double threshold_sigma = 0.0;     // per-pixel mismatch std dev
  double refractory = 0.5e-3;       // s
  double leak_rate = 0.0;           // Hz per pixel, ON events
  double shot_noise_rate = 0.0;     // Hz per pixel, balanced ON/OFF
  int upsample_factor = 10;
  double log_eps = 1e-3;

  void validate() const;
  bool operator==(const EventModelParams&) const = default;
};

struct Event {
  double t = 0.0;  // s
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  // +1 ON, -1 OFF

  bool operator==(const Event&) const = default;
};

/// Canonical stream order: time, then y, x, polarity.
inline bool event_less(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.polarity < b.polarity;
}

struct EventStream {
  int width = kSensorWidth;
  int height = kSensorHeight;
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  bool operator==(const EventStream&) const = default;
};

/// Per-pixel contrast threshold: the nominal value when sigma is zero,
/// otherwise a Normal(C, sigma^2) draw clamped to [C/4, 4C]. Part of the
/// noise contract shared with the reference implementation.
double pixel_threshold(const EventModelParams& params, std::uint64_t seed, std::size_t pixel);

/// Independent Poisson noise streams for one pixel (leak ON events and
/// balanced shot events). Shared between the parallel and reference paths so
/// both draw identical noise for a given seed.
class PixelNoise {
 public:
  PixelNoise(const EventModelParams& params, std::uint64_t seed, std::size_t pixel, double t0);

  /// Appends every noise event with time in [.., t_end) to `out`.
  template <class Sink>
  void emit_until(double t_end, std::uint16_t x, std::uint16_t y, Sink&& out);

 private:
  double leak_rate_;
  double shot_rate_;
  SplitMix64 leak_;
  SplitMix64 shot_;
  double next_leak_;
  double next_shot_;
};

/// Incremental, OpenMP-parallel contrast-threshold simulator. Push frames in
/// time order, then call finish().
class EventSimulator {
 public:
  EventSimulator(int width, int height, const EventModelParams& params, std::uint64_t seed);

  /// Throws InputError on a resolution mismatch or non-uniform spacing.
  void push(const Frame& frame);
  std::size_t frames_seen() const { return frames_; }
  /// Emits trailing noise, sorts, and returns the stream. Throws InputError
  /// if fewer than two frames were pushed.
  EventStream finish();

 private:
  struct PixelState {
    double log_prev;
    double log_ref;
    double threshold;
    double last_event;
  };

  int width_;
  int height_;
  EventModelParams params_;
  std::uint64_t seed_;
  std::size_t frames_ = 0;
  double t_prev_ = 0.0;
  double dt_ = 0.0;
  std::vector<PixelState> state_;
  std::vector<PixelNoise> noise_;
  std::vector<std::vector<Event>> row_events_;
  std::vector<Event> pending_;
};

/// Frame sequence to events with the parallel simulator.
EventStream frames_to_events(std::span<const Frame> frames, const EventModelParams& params,
                             std::uint64_t seed);

/// Literal frame-by-frame, pixel-by-pixel implementation of the same model.
/// Kept as the oracle for frames_to_events.
EventStream reference_frames_to_events(std::span<const Frame> frames, const EventModelParams& params,
                                       std::uint64_t seed);

enum class EventFormat { text, binary };

/// text: "t x y p" per line, t with 9 decimals, p in {1, -1}.
/// binary: packed little-endian records (f64 t, u16 x, u16 y, i8 p), 13 bytes.
void write_events(const EventStream& stream, const std::filesystem::path& path, EventFormat format);
void write_events(const EventStream& stream, std::ostream& os, EventFormat format);
/// Throws ParseError with a line number (text) or byte offset (binary).
EventStream read_events(const std::filesystem::path& path, EventFormat format,
                        int width = kSensorWidth, int height = kSensorHeight);
EventStream read_events(std::istream& is, EventFormat format, int width = kSensorWidth,
                        int height = kSensorHeight);

inline constexpr std::size_t kBinaryEventSize = 13;
void pack_event(const Event& e, unsigned char* out);
Event unpack_event(const unsigned char* in);

/// JSON sidecar recording every model parameter and the seed.
void write_event_params(const std::filesystem::path& path, const EventModelParams& params,
                        std::uint64_t seed);

// ---- inline ----

template <class Sink>
void PixelNoise::emit_until(double t_end, std::uint16_t x, std::uint16_t y, Sink&& out) {
  while (next_leak_ < t_end) {
    out(Event{next_leak_, x, y, 1});
    next_leak_ += leak_.exponential(leak_rate_);
  }
  while (next_shot_ < t_end) {
    const std::int8_t p = shot_.uniform() < 0.5 ? std::int8_t{1} : std::int8_t{-1};
    out(Event{next_shot_, x, y, p});
    next_shot_ += shot_.exponential(shot_rate_);
  }
}

}  // namespace slipforge
