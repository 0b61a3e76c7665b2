#pragma once

// Directional heat-source localization from the circumferential thermistor
// grid, and humidity-rise detection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "everbot/error.hpp"
#include "everbot/geometry.hpp"

namespace everbot {

inline constexpr int kHumidityChannel = -1;

/// Outward radial direction in band frame for an angle around the body.
/// Angle 0 points along band +y and pi/2 along band +z ("up").
inline Vec3 radial_direction(double angle_rad) {
  return {0.0, std::cos(angle_rad), std::sin(angle_rad)};
}

struct ThermistorLayout {
  std::vector<double> angular_positions_rad;
  double humidity_angle_rad = 7.0 * std::numbers::pi / 8.0;

  /// Four thermistors at the centers of four equal intervals covering the
  /// upper half of the circumference; humidity sensor next to thermistor 3.
  static ThermistorLayout top_half(std::size_t count = 4) {
    ThermistorLayout layout;
    for (std::size_t k = 0; k < count; ++k) {
      layout.angular_positions_rad.push_back(std::numbers::pi * (2.0 * static_cast<double>(k) + 1.0) /
                                             (2.0 * static_cast<double>(count)));
    }
    layout.humidity_angle_rad = layout.angular_positions_rad.back();
    return layout;
  }

  std::size_t count_per_band() const { return angular_positions_rad.size(); }

  void validate() const {
    if (angular_positions_rad.empty()) {
      throw Error(ErrorCode::InvalidArgument, "layout needs at least one thermistor");
    }
    for (std::size_t k = 0; k < angular_positions_rad.size(); ++k) {
      const double a = angular_positions_rad[k];
      if (!(a >= 0.0 && a < 2.0 * std::numbers::pi)) {
        throw Error(ErrorCode::InvalidArgument, "thermistor angles must lie in [0, 2pi)");
      }
      if (k > 0 && !(a > angular_positions_rad[k - 1])) {
        throw Error(ErrorCode::InvalidArgument, "thermistor angles must be strictly increasing");
      }
    }
  }
};

struct ScalarSeries {
  std::vector<double> timestamps;
  std::vector<double> values;
  std::size_t band_id = 0;
  int channel = 0;  // thermistor index, or kHumidityChannel

  void validate() const {
    if (timestamps.size() != values.size()) {
      throw Error(ErrorCode::LengthMismatch, "timestamps and values differ in length");
    }
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (!(timestamps[i] > timestamps[i - 1])) {
        throw Error(ErrorCode::InvalidArgument, "timestamps must be strictly increasing", {i});
      }
    }
  }
};

struct HeatEvent {
  std::size_t band_id = 0;
  std::size_t thermistor_index = 0;
  double onset_time_s = 0.0;
  double peak_delta = 0.0;
  Vec3 world_direction = Vec3::Zero();
};

struct HumidityRise {
  double onset_time_s = 0.0;
  double magnitude = 0.0;
};

/// Subtracts the mean of all samples within `window_s` of the first one.
inline ScalarSeries baseline_subtract(const ScalarSeries& series, double window_s) {
  series.validate();
  if (series.timestamps.empty() || !(window_s >= 0.0) ||
      window_s >= series.timestamps.back() - series.timestamps.front()) {
    throw Error(ErrorCode::WindowTooLong, "baseline window must be shorter than the series span");
  }
  const double t_end = series.timestamps.front() + window_s;
  double sum = 0.0;
  std::size_t n = 0;
  while (n < series.timestamps.size() && series.timestamps[n] <= t_end) sum += series.values[n++];
  const double baseline = sum / static_cast<double>(n);
  ScalarSeries out = series;
  for (double& v : out.values) v -= baseline;
  return out;
}

struct HeatDetectionOptions {
  double baseline_window_s = 1.0;
  /// A peak must exceed both neighbouring bands by this fraction of itself.
  double neighbor_contrast = 0.1;
  /// Series count as aligned when matching samples differ by at most this.
  double poll_period_s = 1.0 / 50.0;
};

/// Finds bands whose strongest thermistor channel rises above `threshold`
/// and is a local maximum over the band index at its peak time.
inline std::vector<HeatEvent> detect_heat_events(std::span<const ScalarSeries> grid,
                                                 const ThermistorLayout& layout,
                                                 const ShapeEstimate& shape, double threshold,
                                                 const HeatDetectionOptions& opts = {}) {
  layout.validate();
  const std::size_t bands = shape.band_poses.size();
  const std::size_t channels = layout.count_per_band();
  if (grid.size() != bands * channels) {
    throw Error(ErrorCode::LengthMismatch,
                "expected " + std::to_string(bands * channels) + " thermistor series, got " +
                    std::to_string(grid.size()));
  }

  std::vector<const ScalarSeries*> cell(bands * channels, nullptr);
  for (const ScalarSeries& s : grid) {
    if (s.band_id >= bands || s.channel < 0 || static_cast<std::size_t>(s.channel) >= channels) {
      throw Error(ErrorCode::LengthMismatch, "series for band " + std::to_string(s.band_id) +
                                                 " channel " + std::to_string(s.channel) +
                                                 " does not fit the shape and layout");
    }
    auto& slot = cell[s.band_id * channels + static_cast<std::size_t>(s.channel)];
    if (slot) throw Error(ErrorCode::LengthMismatch, "duplicate series for one band and channel");
    slot = &s;
  }

  const ScalarSeries& ref = *cell.front();
  for (const ScalarSeries* s : cell) {
    if (s->timestamps.size() != ref.timestamps.size()) {
      throw Error(ErrorCode::MisalignedSeries, "series differ in sample count", {s->band_id});
    }
    for (std::size_t i = 0; i < ref.timestamps.size(); ++i) {
      if (std::abs(s->timestamps[i] - ref.timestamps[i]) > opts.poll_period_s) {
        throw Error(ErrorCode::MisalignedSeries,
                    "band " + std::to_string(s->band_id) + " drifts by more than one poll period",
                    {s->band_id});
      }
    }
  }

  std::vector<std::vector<double>> delta(bands * channels);
  for (std::size_t i = 0; i < cell.size(); ++i) {
    delta[i] = baseline_subtract(*cell[i], opts.baseline_window_s).values;
  }
  auto at = [&](std::size_t b, std::size_t c) -> const std::vector<double>& {
    return delta[b * channels + c];
  };

  std::vector<HeatEvent> events;
  for (std::size_t b = 0; b < bands; ++b) {
    std::size_t best_c = 0, best_t = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < channels; ++c) {
      const auto& d = at(b, c);
      const auto it = std::max_element(d.begin(), d.end());
      if (*it > best) {
        best = *it;
        best_c = c;
        best_t = static_cast<std::size_t>(it - d.begin());
      }
    }
    if (!(best > threshold)) continue;

    const double need = best - opts.neighbor_contrast * best;
    bool local_max = true;
    if (b > 0 && !(at(b - 1, best_c)[best_t] <= need)) local_max = false;
    if (b + 1 < bands && !(at(b + 1, best_c)[best_t] <= need)) local_max = false;
    if (!local_max) continue;

    const auto& d = at(b, best_c);
    std::size_t onset = 0;
    while (d[onset] < 0.5 * best) ++onset;

    HeatEvent ev;
    ev.band_id = b;
    ev.thermistor_index = best_c;
    ev.onset_time_s = ref.timestamps[onset];
    ev.peak_delta = best;
    ev.world_direction =
        shape.band_poses[b].orientation.rotate(radial_direction(layout.angular_positions_rad[best_c]))
            .normalized();
    events.push_back(ev);
  }
  return events;
}

/// Onsets where the baseline-subtracted value rises above `threshold`. A
/// new onset needs the value to fall back to half the threshold first. The
/// magnitude is the maximum over `window_s` starting at the onset.
inline std::vector<HumidityRise> detect_humidity_rise(const ScalarSeries& series, double threshold,
                                                      double window_s) {
  const ScalarSeries d = baseline_subtract(series, window_s);
  std::vector<HumidityRise> rises;
  bool armed = true;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (armed && d.values[i] > threshold) {
      HumidityRise r;
      r.onset_time_s = d.timestamps[i];
      r.magnitude = d.values[i];
      for (std::size_t j = i; j < d.values.size() && d.timestamps[j] <= r.onset_time_s + window_s; ++j) {
        r.magnitude = std::max(r.magnitude, d.values[j]);
      }
      rises.push_back(r);
      armed = false;
    } else if (!armed && d.values[i] <= 0.5 * threshold) {
      armed = true;
    }
  }
  return rises;
}

/// Steinhart-Hart thermistor model: 1/T = A + B ln R + C (ln R)^3, T in kelvin.
struct SteinhartHart {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double celsius(double resistance_ohm) const {
    if (!(resistance_ohm > 0.0)) throw Error(ErrorCode::InvalidArgument, "resistance must be positive");
    const double l = std::log(resistance_ohm);
    return 1.0 / (a + b * l + c * l * l * l) - 273.15;
  }
};

}  // namespace everbot
