#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "everbot/sensing.hpp"
#include "test_support.hpp"

using namespace everbot;

namespace {

const ThermistorLayout kLayout = ThermistorLayout::top_half();

ShapeEstimate straight_shape(std::size_t bands) {
  return reconstruct_shape(std::vector<UnitOrientation>(bands), RobotGeometry(0.066, 0.076, bands));
}

std::vector<double> times(std::size_t n, double dt = 0.02) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = dt * static_cast<double>(i);
  return t;
}

// 5 s at 50 Hz: value(band, channel, time)
std::vector<ScalarSeries> make_grid(std::size_t bands, const std::function<double(std::size_t, int, double)>& f,
                                    std::size_t n = 250) {
  std::vector<ScalarSeries> grid;
  const auto t = times(n);
  for (std::size_t b = 0; b < bands; ++b) {
    for (int c = 0; c < 4; ++c) {
      ScalarSeries s;
      s.band_id = b;
      s.channel = c;
      s.timestamps = t;
      for (double x : t) s.values.push_back(f(b, c, x));
      grid.push_back(std::move(s));
    }
  }
  return grid;
}

// A bump of `amp` on one cell that switches on at t = 2 s.
auto spot(std::size_t band, int channel, double amp) {
  return [=](std::size_t b, int c, double t) {
    double v = 20.0;
    if (t >= 2.0) {
      if (b == band && c == channel) v += amp;
      else if ((b + 1 == band || b == band + 1) && c == channel) v += 0.3 * amp;
      else if (b == band) v += 0.2 * amp;
    }
    return v;
  };
}

}  // namespace

TEST(Layout, TopHalfAngles) {
  ASSERT_EQ(kLayout.count_per_band(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(kLayout.angular_positions_rad[k], (2.0 * k + 1.0) * std::numbers::pi / 8.0, 1e-15);
  }
  EXPECT_NEAR(radial_direction(std::numbers::pi / 2).z(), 1.0, 1e-15);
  ThermistorLayout bad;
  bad.angular_positions_rad = {1.0, 0.5};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(BaselineSubtract, FlatSeriesBecomesZero) {
  ScalarSeries s;
  s.timestamps = times(100);
  s.values.assign(100, 21.5);
  const ScalarSeries d = baseline_subtract(s, 0.5);
  for (double v : d.values) EXPECT_EQ(v, 0.0);
}

TEST(BaselineSubtract, RampMatchesBruteForceMean) {
  ScalarSeries s;
  s.timestamps = times(200);
  for (double t : s.timestamps) s.values.push_back(3.0 * t + 1.0);
  const double window = 1.0;
  const ScalarSeries d = baseline_subtract(s, window);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    if (s.timestamps[i] - s.timestamps[0] <= window + 1e-12) sum += s.values[i], ++n;
  }
  EXPECT_EQ(n, 51);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_NEAR(d.values[i], s.values[i] - sum / n, 1e-12);
}

TEST(BaselineSubtract, WindowTooLong) {
  ScalarSeries s;
  s.timestamps = times(10);
  s.values.assign(10, 0.0);
  try {
    baseline_subtract(s, 0.18);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WindowTooLong);
  }
  EXPECT_NO_THROW(baseline_subtract(s, 0.1));
}

TEST(DetectHeatEvents, SingleHotSpot) {
  const auto grid = make_grid(15, spot(7, 2, 8.0));
  const auto ev = detect_heat_events(grid, kLayout, straight_shape(15), 1.0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].band_id, 7u);
  EXPECT_EQ(ev[0].thermistor_index, 2u);
  EXPECT_NEAR(ev[0].onset_time_s, 2.0, 1e-12);
  EXPECT_NEAR(ev[0].peak_delta, 8.0, 1e-9);
  // straight, unrolled robot: world direction is the band-frame radial
  const Vec3 r = radial_direction(5.0 * std::numbers::pi / 8.0);
  EXPECT_NEAR((ev[0].world_direction - r).norm(), 0.0, 1e-12);
}

TEST(DetectHeatEvents, UniformWarmingIsNotALeak) {
  const auto grid = make_grid(15, [](std::size_t, int, double t) { return t < 2.0 ? 20.0 : 26.0; });
  EXPECT_TRUE(detect_heat_events(grid, kLayout, straight_shape(15), 1.0).empty());
}

TEST(DetectHeatEvents, TwoSeparatedSpots) {
  const auto a = spot(2, 0, 6.0), b = spot(12, 3, 9.0);
  const auto grid = make_grid(15, [&](std::size_t band, int c, double t) { return a(band, c, t) + b(band, c, t) - 20.0; });
  const auto ev = detect_heat_events(grid, kLayout, straight_shape(15), 1.0);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].band_id, 2u);
  EXPECT_EQ(ev[0].thermistor_index, 0u);
  EXPECT_EQ(ev[1].band_id, 12u);
  EXPECT_EQ(ev[1].thermistor_index, 3u);
}

TEST(DetectHeatEvents, BandReversalMirrorsEvents) {
  const auto f = spot(4, 1, 5.0);
  const auto forward = detect_heat_events(make_grid(15, f), kLayout, straight_shape(15), 1.0);
  const auto reversed = detect_heat_events(
      make_grid(15, [&](std::size_t b, int c, double t) { return f(14 - b, c, t); }), kLayout, straight_shape(15), 1.0);
  ASSERT_EQ(forward.size(), 1u);
  ASSERT_EQ(reversed.size(), 1u);
  EXPECT_EQ(reversed[0].band_id, 14u - forward[0].band_id);
  EXPECT_EQ(reversed[0].thermistor_index, forward[0].thermistor_index);
}

TEST(DetectHeatEvents, ConstantOffsetInvariance) {
  const auto f = spot(9, 3, 4.0);
  const auto base = detect_heat_events(make_grid(15, f), kLayout, straight_shape(15), 1.0);
  const auto shifted = detect_heat_events(
      make_grid(15, [&](std::size_t b, int c, double t) { return f(b, c, t) + 13.0 + 0.5 * c; }), kLayout,
      straight_shape(15), 1.0);
  ASSERT_EQ(base.size(), shifted.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].band_id, shifted[i].band_id);
    EXPECT_NEAR(base[i].peak_delta, shifted[i].peak_delta, 1e-9);
  }
}

TEST(DetectHeatEvents, RaisingThresholdNeverAddsEvents) {
  const auto a = spot(3, 0, 2.0), b = spot(10, 2, 7.0);
  const auto grid = make_grid(15, [&](std::size_t band, int c, double t) { return a(band, c, t) + b(band, c, t) - 20.0; });
  std::size_t prev = 1000;
  for (double th : {0.5, 1.0, 3.0, 8.0}) {
    const auto n = detect_heat_events(grid, kLayout, straight_shape(15), th).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
  EXPECT_EQ(detect_heat_events(grid, kLayout, straight_shape(15), 3.0).size(), 1u);
  EXPECT_EQ(prev, 0u);
}

TEST(DetectHeatEvents, DirectionFollowsBandOrientation) {
  // Band yawed 90 degrees about z: band +y maps to world -x.
  std::vector<UnitOrientation> q(3, UnitOrientation::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2));
  const ShapeEstimate shape = reconstruct_shape(q, RobotGeometry(0.066, 0.076, 3));
  const auto ev = detect_heat_events(make_grid(3, spot(1, 0, 5.0)), kLayout, shape, 1.0);
  ASSERT_EQ(ev.size(), 1u);
  const double a = std::numbers::pi / 8;
  EXPECT_NEAR((ev[0].world_direction - Vec3(-std::cos(a), 0.0, std::sin(a))).norm(), 0.0, 1e-12);
  // perpendicular to the heading
  EXPECT_NEAR(ev[0].world_direction.dot(heading_from_orientation(q[1])), 0.0, 1e-12);
}

TEST(DetectHeatEvents, StructuralErrors) {
  auto grid = make_grid(15, spot(7, 2, 8.0));
  grid.pop_back();
  try {
    detect_heat_events(grid, kLayout, straight_shape(15), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  grid = make_grid(15, spot(7, 2, 8.0));
  for (double& t : grid[21].timestamps) t += 0.05;
  try {
    detect_heat_events(grid, kLayout, straight_shape(15), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MisalignedSeries);
    EXPECT_EQ(e.index(), 5u);
  }
}

TEST(DetectHumidityRise, FlatHasNone) {
  ScalarSeries s;
  s.channel = kHumidityChannel;
  s.timestamps = times(500);
  s.values.assign(500, 40.0);
  EXPECT_TRUE(detect_humidity_rise(s, 5.0, 1.0).empty());
}

TEST(DetectHumidityRise, StepOfTen) {
  ScalarSeries s;
  s.timestamps = times(500);
  for (double t : s.timestamps) s.values.push_back(t < 4.0 ? 40.0 : 50.0);
  const auto r = detect_humidity_rise(s, 5.0, 1.0);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NEAR(r[0].onset_time_s, 4.0, 1e-12);
  EXPECT_NEAR(r[0].magnitude, 10.0, 1e-12);
}

TEST(DetectHumidityRise, NoisyRampMatchesLinearScan) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> noise(-0.2, 0.2);
  ScalarSeries s;
  s.timestamps = times(600);
  for (double t : s.timestamps) s.values.push_back(40.0 + (t > 3.0 ? 4.0 * (t - 3.0) : 0.0) + noise(rng));
  const auto r = detect_humidity_rise(s, 5.0, 1.0);
  ASSERT_EQ(r.size(), 1u);
  // oracle: first sample whose baseline-subtracted value exceeds 5
  double base = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 600 && s.timestamps[i] <= 1.0 + 1e-12; ++i) base += s.values[i], ++n;
  base /= n;
  std::size_t i = 0;
  while (s.values[i] - base <= 5.0) ++i;
  EXPECT_DOUBLE_EQ(r[0].onset_time_s, s.timestamps[i]);
  EXPECT_GT(r[0].magnitude, 5.0);
  EXPECT_NEAR(r[0].onset_time_s, 3.0 + 5.0 / 4.0, 0.1);
}

TEST(DetectHumidityRise, TwoPulsesNeedRearm) {
  ScalarSeries s;
  s.timestamps = times(500);
  for (double t : s.timestamps) {
    const bool on = (t >= 2.0 && t < 3.0) || (t >= 6.0 && t < 7.0);
    s.values.push_back(on ? 48.0 : 40.0);
  }
  const auto r = detect_humidity_rise(s, 5.0, 1.0);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[1].onset_time_s, 6.0, 1e-12);
}

TEST(SteinhartHart, ReproducesCalibrationPoints) {
  // Fit A, B, C through three (R, T) pairs by solving the 3x3 system.
  const double r[3] = {32650.0, 10000.0, 3603.0};
  const double t[3] = {0.0, 25.0, 50.0};
  Eigen::Matrix3d m;
  Eigen::Vector3d y;
  for (int i = 0; i < 3; ++i) {
    const double l = std::log(r[i]);
    m.row(i) << 1.0, l, l * l * l;
    y(i) = 1.0 / (t[i] + 273.15);
  }
  const Eigen::Vector3d c = m.colPivHouseholderQr().solve(y);
  const SteinhartHart sh{c(0), c(1), c(2)};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sh.celsius(r[i]), t[i], 1e-6);
  EXPECT_GT(sh.celsius(5000.0), sh.celsius(10000.0));
  EXPECT_THROW(sh.celsius(0.0), Error);
}
