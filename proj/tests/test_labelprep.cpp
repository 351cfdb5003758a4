#include <gtest/gtest.h>

#include <set>

#include "slipforge/errors.hpp"
#include "slipforge/labelprep.hpp"
#include "slipforge/slipdyn.hpp"
#include "support.hpp"

using namespace slipforge;
using namespace slipforge::testing;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

std::vector<AngularDifference> theta_from_deg(const std::vector<double>& deg) {
  std::vector<AngularDifference> out;
  for (double d : deg) out.push_back({d * kDeg});
  return out;
}

EventStream random_stream(Rng& rng, std::size_t n, double duration) {
  EventStream s;
  for (std::size_t i = 0; i < n; ++i) {
    s.events.push_back({rng.uniform(0.0, duration), static_cast<std::uint16_t>(rng.index(346)),
                        static_cast<std::uint16_t>(rng.index(260)), rng.uniform() < 0.5 ? std::int8_t{1} : std::int8_t{-1}});
  }
  std::sort(s.events.begin(), s.events.end(), event_less);
  return s;
}

std::vector<Subsample> labelled(std::size_t n_slip, std::size_t n_non, std::uint64_t sample = 1) {
  std::vector<Subsample> out;
  for (std::size_t i = 0; i < n_slip + n_non; ++i) {
    Subsample s;
    s.sample_id = sample;
    s.window = static_cast<int>(i);
    s.label = i < n_slip ? Label::slip : Label::nonslip;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Classify, PaperThresholdExamples) {
  const LabelThresholds t;
  EXPECT_EQ(classify(2.0, t), Label::slip);
  EXPECT_EQ(classify(0.05, t), Label::nonslip);
  EXPECT_EQ(classify(0.5, t), Label::excluded);
  EXPECT_EQ(classify(1.0, t), Label::excluded);  // strictly greater is required
  EXPECT_EQ(classify(0.1, t), Label::excluded);
}

TEST(Classify, InvalidThresholdsRejected) {
  EXPECT_THROW((LabelThresholds{0.1, 1.0}.validate()), ParamError);
  EXPECT_THROW((LabelThresholds{1.0, 0.0}.validate()), ParamError);
}

TEST(Classify, EqualThresholdsNeverExclude) {
  const LabelThresholds t{0.5, 0.5};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_NE(classify(rng.uniform(0.0, 1.0), t), Label::excluded);
  EXPECT_EQ(classify(0.5, t), Label::nonslip);
}

// Raising theta_slip never turns a non-slip window into slip.
TEST(Classify, MonotoneInSlipThreshold) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const double d = rng.uniform(0.0, 3.0);
    const double lo = rng.uniform(0.1, 2.0);
    const LabelThresholds a{lo, 0.1}, b{lo + rng.uniform(0.0, 1.0), 0.1};
    if (classify(d, a) != Label::slip) {
      EXPECT_NE(classify(d, b), Label::slip);
    }
  }
}

TEST(Crop, CentreWindowArithmetic) {
  EXPECT_EQ(crop_events(std::vector<Event>{{0.0, 173, 130, 1}}), (std::vector<Event>{{0.0, 100, 125, 1}}));
  EXPECT_TRUE(crop_events(std::vector<Event>{{0.0, 0, 0, 1}}).empty());
  EXPECT_TRUE(crop_events(std::vector<Event>{}).empty());
  // Edges: x in [73, 273), y in [5, 255).
  const std::vector<Event> edges{{0, 73, 5, 1}, {0, 272, 254, 1}, {0, 273, 5, 1}, {0, 73, 255, 1}, {0, 72, 6, 1}};
  EXPECT_EQ(crop_events(edges).size(), 2u);
}

TEST(Crop, Idempotent) {
  Rng rng(3);
  const EventStream s = random_stream(rng, 5000, 1.0);
  const EventStream once = crop(s);
  EXPECT_EQ(once.width, 200);
  EXPECT_EQ(once.height, 250);
  EXPECT_EQ(crop(once), once);
}

TEST(Slice, WindowsSpanTenFramesAndPartitionEvents) {
  Rng rng(4);
  const auto theta = theta_from_deg(std::vector<double>(450, 0.0));
  const EventStream s = random_stream(rng, 20000, 449.0 / 60.0);
  const auto subs = slice_and_label(s, theta, {});
  ASSERT_EQ(subs.size(), 45u);
  std::set<std::uint64_t> ids;
  for (const auto& sub : subs) {
    EXPECT_EQ(sub.duration, kSubsampleDuration);
    EXPECT_EQ(sub.start_time, sub.window * 10 / 60.0);
    int frames = 0;
    for (int f = 0; f < 450; ++f) {
      const double t = f / 60.0;
      frames += t >= sub.start_time && t - sub.start_time <= sub.duration;
    }
    EXPECT_EQ(frames, 10) << "window " << sub.window;
    EXPECT_TRUE(ids.insert(sub.id()).second);
    for (const auto& e : sub.events) {
      EXPECT_LT(e.x, 200);
      EXPECT_LT(e.y, 250);
    }
  }
}

TEST(Slice, LabelsFollowWindowChange) {
  std::vector<double> deg(60, 0.0);
  for (int f = 10; f < 20; ++f) deg[f] = 0.3 * (f - 10);  // window 1 changes 2.7 degrees
  for (int f = 20; f < 60; ++f) deg[f] = 2.7;
  for (int f = 30; f < 40; ++f) deg[f] = 2.7 + 0.05 * (f - 30);  // window 3: 0.45 degrees
  for (int f = 40; f < 60; ++f) deg[f] = 3.15;
  const auto subs = slice_and_label(EventStream{}, theta_from_deg(deg), {});
  ASSERT_EQ(subs.size(), 6u);
  EXPECT_EQ(subs[0].label, Label::nonslip);
  EXPECT_EQ(subs[1].label, Label::slip);
  EXPECT_NEAR(subs[1].delta_theta, 2.7, 1e-9);
  EXPECT_EQ(subs[2].label, Label::nonslip);
  EXPECT_EQ(subs[3].label, Label::excluded);
  EXPECT_EQ(subs[4].label, Label::nonslip);
}

TEST(Slice, StatisticChoiceMatters) {
  // Up and back down inside one window: max-min sees it, end-start does not.
  std::vector<double> deg(10, 0.0);
  deg[4] = 3.0;
  deg[5] = 3.0;
  EXPECT_EQ(slice_and_label(EventStream{}, theta_from_deg(deg), {})[0].label, Label::slip);
  EXPECT_EQ(slice_and_label(EventStream{}, theta_from_deg(deg), {}, WindowStatistic::end_minus_start)[0].label,
            Label::nonslip);
}

TEST(Slice, StreamOutlastingThetaRejected) {
  EventStream s;
  s.events = {{2.0, 100, 100, 1}};
  EXPECT_THROW(slice_and_label(s, theta_from_deg(std::vector<double>(60, 0.0)), {}), AlignmentError);
  EXPECT_THROW(slice_and_label(EventStream{}, {}, {}), AlignmentError);
}

TEST(Slice, RealNonSlipRunHasNoSlipWindows) {
  ScenarioParams p;
  p.cuboid_mass = 0.05;
  const auto theta = theta_series(to_pose_pairs(simulate_slip(p, build_trajectory(p)).records));
  for (const auto& s : slice_and_label(EventStream{}, theta, {})) EXPECT_EQ(s.label, Label::nonslip);
  p.cuboid_mass = 1.0;
  p.grip_offset_horizontal = 0.03;
  const auto slip = theta_series(to_pose_pairs(simulate_slip(p, build_trajectory(p)).records));
  int n = 0;
  for (const auto& s : slice_and_label(EventStream{}, slip, {})) n += s.label == Label::slip;
  EXPECT_GE(n, 1);
}

TEST(Bin, WidthAndEdges) {
  EXPECT_DOUBLE_EQ(kSubsampleDuration / 150, 0.16 / 150);
  EXPECT_NEAR(kSubsampleDuration / 150, 1.0667e-3, 1e-7);
  EXPECT_EQ(bin_index(0.0, 150), 0);
  EXPECT_EQ(bin_index(0.16, 150), 149);
  EXPECT_EQ(bin_index(0.16 / 150 * 0.999, 150), 0);
  EXPECT_EQ(bin_index(0.16 / 150 * 1.001, 150), 1);
  EXPECT_EQ(bin_index(0.1599999, 350), 349);
}

TEST(Bin, SingleEvent) {
  Subsample s;
  s.start_time = 1.0;
  s.events = {{1.0, 5, 7, -1}};
  const BinnedTensor t = bin(s, 150);
  EXPECT_EQ(t.sum(), 1u);
  EXPECT_EQ(t.at(1, 0, 7, 5), 1u);
  EXPECT_EQ(t.at(0, 0, 7, 5), 0u);
}

TEST(Bin, OutOfWindowEventIsInternalError) {
  Subsample s;
  s.start_time = 1.0;
  s.events = {{1.2, 5, 7, 1}};
  EXPECT_THROW(bin(s, 150), InternalError);
  s.events = {{0.99, 5, 7, 1}};
  EXPECT_THROW(bin(s, 150), InternalError);
}

// Conservation against an independent count on the raw stream.
TEST(Bin, SumEqualsCroppedCountOnRandomWindows) {
  Rng rng(5);
  int checked = 0;
  while (checked < 1000) {
    const EventStream s = random_stream(rng, 3000, 449.0 / 60.0);
    const auto subs = slice_and_label(s, theta_from_deg(std::vector<double>(450, 0.0)), {});
    for (const auto& sub : subs) {
      std::size_t want = 0;
      for (const auto& e : s.events) {
        const double tau = e.t - sub.start_time;
        want += tau >= 0 && tau <= 0.16 && e.x >= 73 && e.x < 273 && e.y >= 5 && e.y < 255;
      }
      const int bins = checked % 2 ? 150 : 350;
      ASSERT_EQ(bin(sub, bins).sum(), want);
      ++checked;
    }
  }
}

TEST(Balance, DropsFromTheLargerClass) {
  const auto out = balance(labelled(10, 6), 1);
  ASSERT_EQ(out.size(), 12u);
  EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& s) { return s.label == Label::slip; }), 6);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LT(out[i - 1].window, out[i].window);  // order kept
}

TEST(Balance, IdentityWhenBalancedAndDeterministic) {
  const auto out = balance(labelled(5, 5), 3);
  ASSERT_EQ(out.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out[i].window, i);
  const auto a = balance(labelled(40, 7), 9), b = balance(labelled(40, 7), 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id(), b[i].id());
}

TEST(Balance, EmptyClassOrExcludedRejected) {
  EXPECT_THROW(balance(labelled(0, 5), 1), BalanceError);
  auto subs = labelled(3, 3);
  subs[0].label = Label::excluded;
  EXPECT_THROW(balance(subs, 1), BalanceError);
}

TEST(Split, EightyTwenty) {
  const auto subs = labelled(50, 50);
  const DatasetSplit s = split(subs, 4);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.validation.size(), 20u);
  std::set<std::uint64_t> all(s.train.begin(), s.train.end());
  for (auto id : s.validation) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(split(subs, 4).train, s.train);
  EXPECT_NE(split(subs, 5).train, s.train);
}

TEST(Split, SizesWithinOneAndStratified) {
  for (std::size_t n = 5; n < 80; n += 3) {
    const auto subs = labelled(n / 2, n - n / 2);
    const DatasetSplit s = split(subs, n);
    EXPECT_EQ(s.train.size() + s.validation.size(), n);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.8 * n), 1.0) << n;
  }
  EXPECT_THROW(split(labelled(2, 2), 1), SplitError);
}

TEST(SubsampleFile, RoundTrip) {
  TempDir dir("sub");
  Subsample s;
  s.sample_id = 12;
  s.window = 7;
  s.start_time = 7 / 6.0;
  s.delta_theta = 1.25;
  s.label = Label::slip;
  s.events = {{7 / 6.0, 1, 2, 1}, {7 / 6.0 + 0.1, 199, 249, -1}};
  write_subsample(dir / "rotation_000000.sub", s, 150);
  const SubsampleFile f = read_subsample(dir / "rotation_000000.sub");
  EXPECT_EQ(f.bins, 150);
  EXPECT_EQ(f.window, CropWindow{});
  EXPECT_EQ(f.sub.id(), s.id());
  EXPECT_EQ(f.sub.start_time, s.start_time);
  EXPECT_EQ(f.sub.delta_theta, s.delta_theta);
  EXPECT_EQ(f.sub.label, s.label);
  EXPECT_EQ(f.sub.events, s.events);
  EXPECT_EQ(file_stem(Label::slip), "rotation");
  EXPECT_EQ(file_stem(Label::nonslip), "stable");
}
