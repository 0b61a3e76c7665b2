#pragma once

// Per-band telemetry records as produced by the aggregator, and helpers that
// slice a log into the views the analysis stages consume.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "everbot/error.hpp"
#include "everbot/geometry.hpp"
#include "everbot/sensing.hpp"

namespace everbot {

inline constexpr std::size_t kThermistorsPerBand = 4;

struct SensorState {
  UnitOrientation orientation;
  std::array<double, kThermistorsPerBand> thermistors{};
  double humidity = 0.0;

  friend bool operator==(const SensorState&, const SensorState&) = default;
};

enum class RecordStatus { Ok, Missing };

struct TelemetryRecord {
  std::uint64_t tick = 0;
  double time_s = 0.0;
  std::size_t band_id = 0;
  std::optional<SensorState> reading;  // empty when the band did not answer

  RecordStatus status() const { return reading ? RecordStatus::Ok : RecordStatus::Missing; }

  friend bool operator==(const TelemetryRecord&, const TelemetryRecord&) = default;
};

struct LogMetadata {
  std::optional<RobotGeometry> geometry;
  double tick_hz = 50.0;
  std::string thermistor_unit = "degC";

  friend bool operator==(const LogMetadata& a, const LogMetadata& b) {
    const bool geom_eq =
        a.geometry.has_value() == b.geometry.has_value() &&
        (!a.geometry || (a.geometry->diameter_m == b.geometry->diameter_m &&
                         a.geometry->band_spacing_m == b.geometry->band_spacing_m &&
                         a.geometry->band_count == b.geometry->band_count));
    return geom_eq && a.tick_hz == b.tick_hz && a.thermistor_unit == b.thermistor_unit;
  }
};

struct TelemetryLog {
  LogMetadata meta;
  std::vector<TelemetryRecord> records;

  friend bool operator==(const TelemetryLog&, const TelemetryLog&) = default;

  std::vector<std::uint64_t> ticks() const {
    std::set<std::uint64_t> s;
    for (const auto& r : records) s.insert(r.tick);
    return {s.begin(), s.end()};
  }

  /// First tick whose time is at or after `time_s`.
  std::optional<std::uint64_t> tick_at_time(double time_s) const {
    std::optional<std::uint64_t> best;
    double best_t = 0.0;
    for (const auto& r : records) {
      if (r.time_s >= time_s && (!best || r.time_s < best_t)) {
        best = r.tick;
        best_t = r.time_s;
      }
    }
    return best;
  }

  /// Orientations of every band at `tick`, ordered by band. Throws
  /// MissingBands listing each band without an ok record.
  std::vector<UnitOrientation> orientations_at(std::uint64_t tick, std::size_t band_count) const {
    std::vector<std::optional<UnitOrientation>> found(band_count);
    for (const auto& r : records) {
      if (r.tick == tick && r.band_id < band_count && r.reading) found[r.band_id] = r.reading->orientation;
    }
    std::vector<std::size_t> gaps;
    std::vector<UnitOrientation> out;
    for (std::size_t b = 0; b < band_count; ++b) {
      if (found[b]) out.push_back(*found[b]);
      else gaps.push_back(b);
    }
    if (!gaps.empty()) {
      std::string list;
      for (std::size_t g : gaps) list += (list.empty() ? "" : ",") + std::to_string(g);
      throw Error(ErrorCode::MissingBands,
                  "tick " + std::to_string(tick) + " has no reading for bands [" + list + "]", gaps);
    }
    return out;
  }

  /// Thermistor series for every band and channel, restricted to ticks at
  /// which every band answered so that all series share one time base.
  std::vector<ScalarSeries> thermistor_grid(std::size_t band_count) const {
    auto complete = complete_ticks(band_count);
    std::vector<ScalarSeries> grid;
    for (std::size_t b = 0; b < band_count; ++b) {
      for (std::size_t c = 0; c < kThermistorsPerBand; ++c) {
        ScalarSeries s;
        s.band_id = b;
        s.channel = static_cast<int>(c);
        grid.push_back(std::move(s));
      }
    }
    for (const auto& r : records) {
      if (!r.reading || r.band_id >= band_count || !complete.contains(r.tick)) continue;
      for (std::size_t c = 0; c < kThermistorsPerBand; ++c) {
        auto& s = grid[r.band_id * kThermistorsPerBand + c];
        s.timestamps.push_back(r.time_s);
        s.values.push_back(r.reading->thermistors[c]);
      }
    }
    return grid;
  }

  ScalarSeries humidity_series(std::size_t band) const {
    ScalarSeries s;
    s.band_id = band;
    s.channel = kHumidityChannel;
    for (const auto& r : records) {
      if (r.band_id == band && r.reading) {
        s.timestamps.push_back(r.time_s);
        s.values.push_back(r.reading->humidity);
      }
    }
    return s;
  }

 private:
  std::set<std::uint64_t> complete_ticks(std::size_t band_count) const {
    std::vector<std::pair<std::uint64_t, std::size_t>> seen;
    for (const auto& r : records) {
      if (r.reading && r.band_id < band_count) seen.emplace_back(r.tick, r.band_id);
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    std::set<std::uint64_t> out;
    std::size_t i = 0;
    while (i < seen.size()) {
      std::size_t j = i;
      while (j < seen.size() && seen[j].first == seen[i].first) ++j;
      if (j - i == band_count) out.insert(seen[i].first);
      i = j;
    }
    return out;
  }
};

}  // namespace everbot
