#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slipforge/evsim.hpp"
#include "slipforge/geometry.hpp"

namespace slipforge {

inline constexpr double kSubsampleDuration = 0.16;  // s
inline constexpr int kFramesPerSubsample = 10;

struct LabelThresholds {
  double theta_slip = 1.0;     // degrees
  double theta_nonslip = 0.1;  // degrees

  void validate() const;
};

enum class Label : std::uint8_t { slip, nonslip, excluded };
std::string to_string(Label label);
/// File-name stem used in dataset directories: "rotation" or "stable".
std::string file_stem(Label label);
Label label_from_string(const std::string& s);

/// How a window's angular change is summarised.
enum class WindowStatistic { max_minus_min, end_minus_start };

/// Centered crop of the 346x260 sensor.
struct CropWindow {
  int x0 = 73;
  int y0 = 5;
  int width = 200;
  int height = 250;

  bool operator==(const CropWindow&) const = default;
};

struct Subsample {
  std::uint64_t sample_id = 0;
  int window = 0;           // index within the source run
  double start_time = 0.0;  // s, stream clock
  double duration = kSubsampleDuration;
  std::vector<Event> events;  // cropped coordinates, stream-clock times
  double delta_theta = 0.0;   // degrees
  Label label = Label::excluded;

  std::uint64_t id() const { return (sample_id << 16) | static_cast<std::uint64_t>(window); }
};

Label classify(double delta_theta, const LabelThresholds& thresholds);

/// Window k starts at frame 10k and covers 0.16 s, which holds frames
/// 10k..10k+9. Events with offset in [0, 0.16] belong to the window.
/// Throws AlignmentError when the stream outlasts the theta series.
std::vector<Subsample> slice_and_label(const EventStream& stream, std::span<const AngularDifference> theta,
                                       const LabelThresholds& thresholds,
                                       WindowStatistic statistic = WindowStatistic::max_minus_min,
                                       std::uint64_t sample_id = 0, const CropWindow& window = {});

/// Keeps events inside the crop window and re-origins them. A stream that
/// already has the crop's dimensions is returned unchanged.
EventStream crop(const EventStream& stream, const CropWindow& window = {});
std::vector<Event> crop_events(std::span<const Event> events, const CropWindow& window = {});

/// Sparse event-count tensor of shape [2][bins][height][width]; channel 0
/// holds ON events, channel 1 OFF events.
struct BinnedTensor {
  int bins = 150;
  int height = 250;
  int width = 200;
  Label label = Label::excluded;
  std::vector<std::uint32_t> index;  // flat index, strictly increasing
  std::vector<std::uint32_t> count;  // > 0, parallel to index

  std::size_t flat(int channel, int bin, int y, int x) const {
    return ((static_cast<std::size_t>(channel) * bins + bin) * height + y) * width + x;
  }
  std::uint32_t at(int channel, int bin, int y, int x) const;
  std::uint64_t sum() const;
};

/// Bin of an event at offset tau in a window of `duration` seconds.
int bin_index(double tau, int bins, double duration = kSubsampleDuration);

/// Throws InternalError for an event outside the window.
BinnedTensor bin(const Subsample& sub, int bins, const CropWindow& window = {});

/// Drops random members of the larger class until both have the same size.
/// Order of the survivors is preserved. Throws BalanceError if a class is
/// empty or an excluded subsample is present.
std::vector<Subsample> balance(std::vector<Subsample> subs, std::uint64_t seed);

struct DatasetSplit {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> validation;
  std::vector<std::uint64_t> test;
  std::uint64_t seed = 0;
};

/// Stratified seeded split; per class round(train_fraction * n) go to train.
/// Throws SplitError with fewer than 5 items.
DatasetSplit split(std::span<const Subsample> subs, std::uint64_t seed, double train_fraction = 0.8);

/// Subsample container: a magic line, one line of JSON metadata, then the
/// events as packed binary records.
void write_subsample(const std::filesystem::path& path, const Subsample& sub, int bins,
                     const CropWindow& window = {});
struct SubsampleFile {
  Subsample sub;
  int bins = 150;
  CropWindow window;
};
SubsampleFile read_subsample(const std::filesystem::path& path);

}  // namespace slipforge
