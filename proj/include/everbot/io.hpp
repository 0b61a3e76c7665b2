#pragma once

// File formats: telemetry logs, ground-truth shapes, scenario configs, shape
// and cloud exports, event and error reports.
//
// Every text format starts with "# everbot-<kind> v<version>", followed by
// "# key: value" metadata lines and a fixed column header. Numbers are
// written with the shortest representation that reads back to the same
// double, independent of locale.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "everbot/bus.hpp"
#include "everbot/error.hpp"
#include "everbot/geometry.hpp"
#include "everbot/registration.hpp"
#include "everbot/sensing.hpp"
#include "everbot/telemetry.hpp"
#include "everbot/uncertainty.hpp"

namespace everbot::io {

inline constexpr int kSchemaVersion = 1;

// Number formatting ----------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error(ErrorCode::InvalidArgument, "cannot format number");
  return {buf, end};
}

inline std::string format_vec(const Vec3& v) {
  return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what, {line});
}

inline double parse_double(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    parse_fail(line, "expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line) {
  s = trim(s);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    parse_fail(line, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

/// Reads lines while tracking 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::size_t number() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

struct Header {
  std::vector<std::pair<std::string, std::string>> meta;
  std::string columns;

  std::optional<std::string> get(std::string_view key) const {
    for (const auto& [k, v] : meta) {
      if (k == key) return v;
    }
    return std::nullopt;
  }
};

/// Consumes the version line, metadata lines and the column header.
inline Header read_header(LineReader& r, std::string_view kind, std::string_view expected_columns) {
  std::string line;
  const std::string prefix = "# everbot-" + std::string(kind) + " v";
  if (!r.next(line) || line.rfind(prefix, 0) != 0) {
    parse_fail(r.number() == 0 ? 1 : r.number(), "missing '" + prefix + "N' header");
  }
  const int version = parse_int<int>(std::string_view(line).substr(prefix.size()), r.number());
  if (version != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                std::string(kind) + " schema v" + std::to_string(version) +
                    " is not supported (expected v" + std::to_string(kSchemaVersion) + ")");
  }
  Header h;
  while (r.next(line)) {
    if (line.rfind("#", 0) == 0) {
      const std::string_view body = trim(std::string_view(line).substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) parse_fail(r.number(), "metadata lines need 'key: value'");
      h.meta.emplace_back(std::string(trim(body.substr(0, colon))),
                          std::string(trim(body.substr(colon + 1))));
      continue;
    }
    if (line != expected_columns) {
      parse_fail(r.number(), "expected column header '" + std::string(expected_columns) + "'");
    }
    h.columns = line;
    return h;
  }
  parse_fail(r.number() + 1, "missing column header");
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

}  // namespace detail

// Telemetry log ----------------------------------------------------------------

inline constexpr std::string_view kLogColumns =
    "tick,time_s,band_id,status,qw,qx,qy,qz,t0,t1,t2,t3,humidity";

inline void write_log(std::ostream& out, const TelemetryLog& log) {
  out << "# everbot-telemetry v" << kSchemaVersion << "\n";
  out << "# units: time=s orientation=unit-quaternion humidity=%RH\n";
  out << "# thermistor_unit: " << log.meta.thermistor_unit << "\n";
  out << "# tick_hz: " << format_double(log.meta.tick_hz) << "\n";
  if (log.meta.geometry) {
    const RobotGeometry& g = *log.meta.geometry;
    out << "# geometry: " << format_double(g.diameter_m) << "," << format_double(g.band_spacing_m)
        << "," << g.band_count << "\n";
  }
  out << kLogColumns << "\n";
  for (const TelemetryRecord& r : log.records) {
    out << r.tick << "," << format_double(r.time_s) << "," << r.band_id << ",";
    if (r.reading) {
      const SensorState& s = *r.reading;
      out << "ok," << format_double(s.orientation.w()) << "," << format_double(s.orientation.x()) << ","
          << format_double(s.orientation.y()) << "," << format_double(s.orientation.z());
      for (double t : s.thermistors) out << "," << format_double(t);
      out << "," << format_double(s.humidity) << "\n";
    } else {
      out << "missing,,,,,,,,,\n";
    }
  }
}

inline RobotGeometry parse_geometry(std::string_view text, std::size_t line = 0) {
  const auto f = detail::split(text);
  if (f.size() != 3) detail::parse_fail(line, "geometry needs D,L,N");
  const double d = detail::parse_double(f[0], line);
  const double l = detail::parse_double(f[1], line);
  const auto n = detail::parse_int<std::size_t>(f[2], line);
  return RobotGeometry(d, l, n);
}

inline TelemetryLog read_log(std::istream& in) {
  detail::LineReader r(in);
  const detail::Header h = detail::read_header(r, "telemetry", kLogColumns);
  TelemetryLog log;
  if (auto u = h.get("thermistor_unit")) log.meta.thermistor_unit = *u;
  if (auto hz = h.get("tick_hz")) log.meta.tick_hz = detail::parse_double(*hz, 0);
  if (auto g = h.get("geometry")) log.meta.geometry = parse_geometry(*g);

  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const std::size_t n = r.number();
    const auto f = detail::split(line);
    if (f.size() != 13) detail::parse_fail(n, "expected 13 fields, got " + std::to_string(f.size()));
    TelemetryRecord rec;
    rec.tick = detail::parse_int<std::uint64_t>(f[0], n);
    rec.time_s = detail::parse_double(f[1], n);
    rec.band_id = detail::parse_int<std::size_t>(f[2], n);
    if (f[3] == "ok") {
      SensorState s;
      const double qw = detail::parse_double(f[4], n), qx = detail::parse_double(f[5], n);
      const double qy = detail::parse_double(f[6], n), qz = detail::parse_double(f[7], n);
      try {
        s.orientation = UnitOrientation(qw, qx, qy, qz);
      } catch (const Error&) {
        detail::parse_fail(n, "orientation is not a valid quaternion");
      }
      for (std::size_t k = 0; k < kThermistorsPerBand; ++k) s.thermistors[k] = detail::parse_double(f[8 + k], n);
      s.humidity = detail::parse_double(f[12], n);
      rec.reading = s;
    } else if (f[3] == "missing") {
      for (std::size_t k = 4; k < 13; ++k) {
        if (!detail::trim(f[k]).empty()) detail::parse_fail(n, "missing records carry no values");
      }
    } else {
      detail::parse_fail(n, "status must be 'ok' or 'missing'");
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

inline void write_log(const std::string& path, const TelemetryLog& log) {
  auto out = detail::open_out(path);
  write_log(out, log);
  detail::finish(out, path);
}

inline TelemetryLog read_log(const std::string& path) {
  auto in = detail::open_in(path);
  return read_log(in);
}

/// Converts thermistor columns recorded as resistance into degrees Celsius.
inline TelemetryLog thermistors_to_celsius(TelemetryLog log, const SteinhartHart& model) {
  if (log.meta.thermistor_unit == "degC") return log;
  if (log.meta.thermistor_unit != "ohm") {
    throw Error(ErrorCode::InvalidArgument, "unknown thermistor unit '" + log.meta.thermistor_unit + "'");
  }
  for (auto& r : log.records) {
    if (!r.reading) continue;
    for (double& t : r.reading->thermistors) t = model.celsius(t);
  }
  log.meta.thermistor_unit = "degC";
  return log;
}

// Ground truth -------------------------------------------------------------

inline constexpr std::string_view kGroundTruthColumns = "kind,x,y,z";

inline double unit_scale(std::string_view unit, std::size_t line = 0) {
  if (unit == "m") return 1.0;
  if (unit == "cm") return 0.01;
  if (unit == "mm") return 0.001;
  detail::parse_fail(line, "unknown length unit '" + std::string(unit) + "'");
}

inline GroundTruthShape read_ground_truth(std::istream& in) {
  detail::LineReader r(in);
  const detail::Header h = detail::read_header(r, "groundtruth", kGroundTruthColumns);
  const double scale = unit_scale(h.get("units").value_or("m"));
  GroundTruthShape gt;
  gt.frame_note = h.get("frame").value_or("");

  Polyline3 mids;
  std::optional<bool> has_z;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const std::size_t n = r.number();
    const auto f = detail::split(line);
    if (f.size() != 4 && f.size() != 3) detail::parse_fail(n, "expected kind,x,y[,z]");
    const bool z_here = f.size() == 4 && !detail::trim(f[3]).empty();
    if (has_z && *has_z != z_here) detail::parse_fail(n, "mixed 2D and 3D points");
    has_z = z_here;
    Vec3 p(detail::parse_double(f[1], n), detail::parse_double(f[2], n),
           z_here ? detail::parse_double(f[3], n) : 0.0);
    p *= scale;
    if (f[0] == "band") gt.band_points.push_back(p);
    else if (f[0] == "mid") mids.push_back(p);
    else detail::parse_fail(n, "kind must be 'band' or 'mid'");
  }
  gt.dimension = has_z.value_or(false) ? 3 : 2;
  if (!mids.empty()) gt.midpoints = std::move(mids);
  gt.validate();
  return gt;
}

inline GroundTruthShape read_ground_truth(const std::string& path) {
  auto in = detail::open_in(path);
  return read_ground_truth(in);
}

/// Writes in meters.
inline void write_ground_truth(std::ostream& out, const GroundTruthShape& gt) {
  out << "# everbot-groundtruth v" << kSchemaVersion << "\n# units: m\n";
  if (!gt.frame_note.empty()) out << "# frame: " << gt.frame_note << "\n";
  out << kGroundTruthColumns << "\n";
  auto row = [&](const char* kind, const Vec3& p) {
    out << kind << "," << format_double(p.x()) << "," << format_double(p.y()) << ",";
    if (gt.dimension == 3) out << format_double(p.z());
    out << "\n";
  };
  for (const Vec3& p : gt.band_points) row("band", p);
  if (gt.midpoints) {
    for (const Vec3& p : *gt.midpoints) row("mid", p);
  }
}

inline void write_ground_truth(const std::string& path, const GroundTruthShape& gt) {
  auto out = detail::open_out(path);
  write_ground_truth(out, gt);
  detail::finish(out, path);
}

// Shape export ---------------------------------------------------------------

struct ShapePoint {
  PointKind kind = PointKind::Band;
  std::size_t index = 0;
  Vec3 position = Vec3::Zero();
  std::optional<UnitOrientation> orientation;  // bands only

  friend bool operator==(const ShapePoint& a, const ShapePoint& b) {
    return a.kind == b.kind && a.index == b.index && a.position == b.position &&
           a.orientation == b.orientation;
  }
};

struct ShapeExport {
  std::vector<ShapePoint> points;

  static ShapeExport from_shape(const ShapeEstimate& shape) {
    ShapeExport e;
    std::size_t band = 0, kink = 0;
    for (std::size_t i = 0; i < shape.centerline.size(); ++i) {
      ShapePoint p;
      p.kind = shape.centerline_kinds[i];
      p.position = shape.centerline[i];
      if (p.kind == PointKind::Band) {
        p.index = band;
        p.orientation = shape.band_poses[band].orientation;
        ++band;
      } else {
        p.index = kink++;
      }
      e.points.push_back(p);
    }
    return e;
  }

  Polyline3 band_positions() const {
    Polyline3 out;
    for (const auto& p : points) {
      if (p.kind == PointKind::Band) out.push_back(p.position);
    }
    return out;
  }

  std::vector<UnitOrientation> band_orientations() const {
    std::vector<UnitOrientation> out;
    for (const auto& p : points) {
      if (p.kind == PointKind::Band && p.orientation) out.push_back(*p.orientation);
    }
    return out;
  }

  std::size_t count(PointKind kind) const {
    std::size_t n = 0;
    for (const auto& p : points) n += p.kind == kind;
    return n;
  }

  /// Bands and kinks follow band (kink) band (kink) ... band, with running
  /// indices per kind.
  void validate() const {
    if (points.empty() || points.front().kind != PointKind::Band || points.back().kind != PointKind::Band) {
      throw Error(ErrorCode::ParseError, "a shape must start and end with a band point");
    }
    std::size_t band = 0, kink = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (i > 0 && p.kind == PointKind::Kink && points[i - 1].kind == PointKind::Kink) {
        throw Error(ErrorCode::ParseError, "two kinks without a band between them", {i});
      }
      const std::size_t expected = p.kind == PointKind::Band ? band++ : kink++;
      if (p.index != expected) throw Error(ErrorCode::ParseError, "point indices out of order", {i});
    }
  }
};

inline constexpr std::string_view kShapeColumns = "kind,index,x,y,z,qw,qx,qy,qz";

inline void write_shape(std::ostream& out, const ShapeExport& shape) {
  out << "# everbot-shape v" << kSchemaVersion << "\n";
  out << "# units: length=m\n";
  out << "# bands: " << shape.count(PointKind::Band) << "\n";
  out << "# kinks: " << shape.count(PointKind::Kink) << "\n";
  out << kShapeColumns << "\n";
  for (const auto& p : shape.points) {
    out << (p.kind == PointKind::Band ? "band" : "kink") << "," << p.index << "," << format_vec(p.position);
    if (p.orientation) {
      out << "," << format_double(p.orientation->w()) << "," << format_double(p.orientation->x()) << ","
          << format_double(p.orientation->y()) << "," << format_double(p.orientation->z()) << "\n";
    } else {
      out << ",,,,\n";
    }
  }
}

inline ShapeExport read_shape(std::istream& in) {
  detail::LineReader r(in);
  const detail::Header h = detail::read_header(r, "shape", kShapeColumns);
  ShapeExport shape;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const std::size_t n = r.number();
    const auto f = detail::split(line);
    if (f.size() != 9) detail::parse_fail(n, "expected 9 fields");
    ShapePoint p;
    if (f[0] == "band") p.kind = PointKind::Band;
    else if (f[0] == "kink") p.kind = PointKind::Kink;
    else detail::parse_fail(n, "kind must be 'band' or 'kink'");
    p.index = detail::parse_int<std::size_t>(f[1], n);
    p.position = Vec3(detail::parse_double(f[2], n), detail::parse_double(f[3], n), detail::parse_double(f[4], n));
    if (!detail::trim(f[5]).empty()) {
      try {
        p.orientation = UnitOrientation(detail::parse_double(f[5], n), detail::parse_double(f[6], n),
                                        detail::parse_double(f[7], n), detail::parse_double(f[8], n));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) throw;
        detail::parse_fail(n, "orientation is not a valid quaternion");
      }
    }
    shape.points.push_back(p);
  }
  shape.validate();
  const auto bands = h.get("bands");
  const auto kinks = h.get("kinks");
  if ((bands && detail::parse_int<std::size_t>(*bands, 0) != shape.count(PointKind::Band)) ||
      (kinks && detail::parse_int<std::size_t>(*kinks, 0) != shape.count(PointKind::Kink))) {
    throw Error(ErrorCode::ParseError, "point counts disagree with the header");
  }
  return shape;
}

inline void write_shape(const std::string& path, const ShapeExport& shape) {
  auto out = detail::open_out(path);
  write_shape(out, shape);
  detail::finish(out, path);
}

inline ShapeExport read_shape(const std::string& path) {
  auto in = detail::open_in(path);
  return read_shape(in);
}

// Cloud export ---------------------------------------------------------------

struct CloudExport {
  std::vector<BandStats> stats;
  std::vector<std::vector<ShapePoint>> samples;  // centerline points per sample
  double percentile = 0.95;
  std::size_t clamped_bends = 0;

  static CloudExport from_cloud(const ShapeCloud& cloud, std::size_t max_samples = std::numeric_limits<std::size_t>::max()) {
    CloudExport e;
    e.stats = cloud.per_band_stats;
    e.percentile = cloud.percentile;
    e.clamped_bends = cloud.clamped_bends;
    const std::size_t n = cloud.samples.size();
    const std::size_t keep = std::min(n, max_samples);
    for (std::size_t j = 0; j < keep; ++j) {
      // Evenly spaced decimation keeps the first sample and spreads the rest.
      const std::size_t i = keep == n ? j : j * n / keep;
      auto pts = ShapeExport::from_shape(cloud.samples[i]).points;
      for (auto& p : pts) p.orientation.reset();
      e.samples.push_back(std::move(pts));
    }
    return e;
  }

  friend bool operator==(const CloudExport& a, const CloudExport& b) {
    if (a.stats.size() != b.stats.size() || a.samples != b.samples || a.percentile != b.percentile ||
        a.clamped_bends != b.clamped_bends) {
      return false;
    }
    for (std::size_t i = 0; i < a.stats.size(); ++i) {
      if (a.stats[i].mean_position != b.stats[i].mean_position ||
          a.stats[i].max_radius_m != b.stats[i].max_radius_m ||
          a.stats[i].percentile_radius_m != b.stats[i].percentile_radius_m) {
        return false;
      }
    }
    return true;
  }
};

inline constexpr std::string_view kCloudColumns =
    "record,sample,kind,index,x,y,z,max_radius_m,percentile_radius_m";

inline void write_cloud(std::ostream& out, const CloudExport& cloud) {
  out << "# everbot-cloud v" << kSchemaVersion << "\n";
  out << "# units: length=m\n";
  out << "# bands: " << cloud.stats.size() << "\n";
  out << "# samples: " << cloud.samples.size() << "\n";
  out << "# percentile: " << format_double(cloud.percentile) << "\n";
  out << "# clamped_bends: " << cloud.clamped_bends << "\n";
  out << kCloudColumns << "\n";
  for (std::size_t b = 0; b < cloud.stats.size(); ++b) {
    const BandStats& s = cloud.stats[b];
    out << "stats,,band," << b << "," << format_vec(s.mean_position) << "," << format_double(s.max_radius_m)
        << "," << format_double(s.percentile_radius_m) << "\n";
  }
  for (std::size_t i = 0; i < cloud.samples.size(); ++i) {
    for (const ShapePoint& p : cloud.samples[i]) {
      out << "point," << i << "," << (p.kind == PointKind::Band ? "band" : "kink") << "," << p.index << ","
          << format_vec(p.position) << ",,\n";
    }
  }
}

inline CloudExport read_cloud(std::istream& in) {
  detail::LineReader r(in);
  const detail::Header h = detail::read_header(r, "cloud", kCloudColumns);
  CloudExport cloud;
  if (auto p = h.get("percentile")) cloud.percentile = detail::parse_double(*p, 0);
  if (auto c = h.get("clamped_bends")) cloud.clamped_bends = detail::parse_int<std::size_t>(*c, 0);
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const std::size_t n = r.number();
    const auto f = detail::split(line);
    if (f.size() != 9) detail::parse_fail(n, "expected 9 fields");
    const Vec3 pos(detail::parse_double(f[4], n), detail::parse_double(f[5], n), detail::parse_double(f[6], n));
    if (f[0] == "stats") {
      if (detail::parse_int<std::size_t>(f[3], n) != cloud.stats.size()) detail::parse_fail(n, "stats out of order");
      cloud.stats.push_back({pos, detail::parse_double(f[7], n), detail::parse_double(f[8], n)});
    } else if (f[0] == "point") {
      const auto sample = detail::parse_int<std::size_t>(f[1], n);
      if (sample == cloud.samples.size()) cloud.samples.emplace_back();
      if (sample + 1 != cloud.samples.size()) detail::parse_fail(n, "samples out of order");
      ShapePoint p;
      if (f[2] == "band") p.kind = PointKind::Band;
      else if (f[2] == "kink") p.kind = PointKind::Kink;
      else detail::parse_fail(n, "kind must be 'band' or 'kink'");
      p.index = detail::parse_int<std::size_t>(f[3], n);
      p.position = pos;
      cloud.samples.back().push_back(p);
    } else {
      detail::parse_fail(n, "record must be 'stats' or 'point'");
    }
  }
  if (auto s = h.get("samples"); s && detail::parse_int<std::size_t>(*s, 0) != cloud.samples.size()) {
    throw Error(ErrorCode::ParseError, "sample count disagrees with the header");
  }
  if (auto b = h.get("bands"); b && detail::parse_int<std::size_t>(*b, 0) != cloud.stats.size()) {
    throw Error(ErrorCode::ParseError, "band count disagrees with the header");
  }
  return cloud;
}

inline void write_cloud(const std::string& path, const CloudExport& cloud) {
  auto out = detail::open_out(path);
  write_cloud(out, cloud);
  detail::finish(out, path);
}

inline CloudExport read_cloud(const std::string& path) {
  auto in = detail::open_in(path);
  return read_cloud(in);
}

// Event report ---------------------------------------------------------------

struct EventReport {
  std::vector<HeatEvent> heat;
  std::vector<std::pair<std::size_t, HumidityRise>> humidity;  // (band, rise)
};

inline constexpr std::string_view kEventColumns = "kind,band_id,channel,onset_time_s,magnitude,dx,dy,dz";

inline void write_events(std::ostream& out, const EventReport& report) {
  out << "# everbot-events v" << kSchemaVersion << "\n";
  out << "# units: time=s heat=thermistor-unit humidity=%RH\n";
  out << kEventColumns << "\n";
  for (const HeatEvent& e : report.heat) {
    out << "heat," << e.band_id << "," << e.thermistor_index << "," << format_double(e.onset_time_s) << ","
        << format_double(e.peak_delta) << "," << format_vec(e.world_direction) << "\n";
  }
  for (const auto& [band, rise] : report.humidity) {
    out << "humidity," << band << "," << kHumidityChannel << "," << format_double(rise.onset_time_s) << ","
        << format_double(rise.magnitude) << ",,,\n";
  }
}

inline EventReport read_events(std::istream& in) {
  detail::LineReader r(in);
  detail::read_header(r, "events", kEventColumns);
  EventReport report;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const std::size_t n = r.number();
    const auto f = detail::split(line);
    if (f.size() != 8) detail::parse_fail(n, "expected 8 fields");
    if (f[0] == "heat") {
      HeatEvent e;
      e.band_id = detail::parse_int<std::size_t>(f[1], n);
      e.thermistor_index = detail::parse_int<std::size_t>(f[2], n);
      e.onset_time_s = detail::parse_double(f[3], n);
      e.peak_delta = detail::parse_double(f[4], n);
      e.world_direction = Vec3(detail::parse_double(f[5], n), detail::parse_double(f[6], n),
                               detail::parse_double(f[7], n));
      report.heat.push_back(e);
    } else if (f[0] == "humidity") {
      HumidityRise rise{detail::parse_double(f[3], n), detail::parse_double(f[4], n)};
      report.humidity.emplace_back(detail::parse_int<std::size_t>(f[1], n), rise);
    } else {
      detail::parse_fail(n, "kind must be 'heat' or 'humidity'");
    }
  }
  return report;
}

inline void write_events(const std::string& path, const EventReport& report) {
  auto out = detail::open_out(path);
  write_events(out, report);
  detail::finish(out, path);
}

// Error report -----------------------------------------------------------

inline void write_error_report(std::ostream& out, const ErrorReport& report) {
  out << "# everbot-errors v" << kSchemaVersion << "\n";
  out << "# units: length=m\n";
  out << "# max_error_m: " << format_double(report.max_error_m) << "\n";
  out << "# argmax_band: " << report.argmax_band << "\n";
  out << "band,error_m\n";
  for (std::size_t b = 0; b < report.per_band_error_m.size(); ++b) {
    out << b << "," << format_double(report.per_band_error_m[b]) << "\n";
  }
}

inline ErrorReport read_error_report(std::istream& in) {
  detail::LineReader r(in);
  const detail::Header h = detail::read_header(r, "errors", "band,error_m");
  ErrorReport report;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 2) detail::parse_fail(r.number(), "expected band,error_m");
    if (detail::parse_int<std::size_t>(f[0], r.number()) != report.per_band_error_m.size()) {
      detail::parse_fail(r.number(), "bands out of order");
    }
    report.per_band_error_m.push_back(detail::parse_double(f[1], r.number()));
  }
  report.max_error_m = detail::parse_double(h.get("max_error_m").value_or("0"), 0);
  report.argmax_band = detail::parse_int<std::size_t>(h.get("argmax_band").value_or("0"), 0);
  return report;
}

// Scenario config (JSON) ---------------------------------------------------

namespace detail {

inline Vec3 json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline UnitOrientation json_quat(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::ParseError, "expected [w, x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline std::vector<PointSource> json_sources(const nlohmann::json& arr) {
  std::vector<PointSource> out;
  for (const auto& s : arr) {
    PointSource p;
    p.position = json_vec3(s.at("position"));
    p.strength = s.at("strength").get<double>();
    p.falloff_m = s.value("falloff_m", p.falloff_m);
    if (s.contains("on_s")) p.on_s = s["on_s"].get<double>();
    if (s.contains("off_s")) p.off_s = s["off_s"].get<double>();
    if (!(p.falloff_m > 0.0)) throw Error(ErrorCode::ParseError, "falloff_m must be positive");
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

/// Scenario schema (version 1). Keyframes list either explicit
/// "orientations" ([w,x,y,z] per band) or "bends" in band body frames with
/// optional "bend_fractions" placing each kink within its feasible range
/// (default 0.5). "positions" may be given explicitly; otherwise they are
/// built from "base" (default origin).
inline Scenario parse_scenario(const nlohmann::json& j) {
  try {
    const int version = j.value("version", kSchemaVersion);
    if (version != kSchemaVersion) {
      throw Error(ErrorCode::SchemaVersionMismatch,
                  "scenario schema v" + std::to_string(version) + " is not supported");
    }
    Scenario sc;
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      sc.geometry = RobotGeometry(g.value("diameter_m", 0.066), g.value("band_spacing_m", 0.076),
                                  g.value("band_count", std::size_t{15}));
    }
    sc.tick_hz = j.value("tick_hz", sc.tick_hz);
    sc.duration_s = j.value("duration_s", sc.duration_s);
    sc.seed = j.value("seed", sc.seed);
    sc.heading_noise_rad = j.value("heading_noise_rad", sc.heading_noise_rad);
    sc.ambient_c = j.value("ambient_c", sc.ambient_c);
    sc.ambient_rh = j.value("ambient_rh", sc.ambient_rh);
    sc.link_corruption_rate = j.value("link_corruption_rate", sc.link_corruption_rate);
    if (j.contains("layout")) {
      const auto& l = j["layout"];
      if (l.contains("thermistor_angles_rad")) {
        sc.layout.angular_positions_rad = l["thermistor_angles_rad"].get<std::vector<double>>();
      }
      sc.layout.humidity_angle_rad = l.value("humidity_angle_rad", sc.layout.humidity_angle_rad);
    }
    if (j.contains("addresses")) sc.addresses = j["addresses"].get<std::vector<std::uint8_t>>();

    const std::size_t bands = sc.geometry.band_count;
    for (const auto& k : j.at("trajectory")) {
      Keyframe kf;
      kf.time_s = k.value("time_s", 0.0);
      if (k.contains("orientations")) {
        for (const auto& q : k["orientations"]) kf.orientations.push_back(detail::json_quat(q));
      } else {
        std::vector<BodyBend> bends;
        for (const auto& b : k.value("bends", nlohmann::json::array())) {
          bends.push_back({b.at("segment").get<std::size_t>(), b.at("angle_rad").get<double>(),
                           b.contains("axis") ? detail::json_vec3(b["axis"]) : Vec3::UnitZ()});
        }
        const UnitOrientation first =
            k.contains("first_orientation") ? detail::json_quat(k["first_orientation"]) : UnitOrientation();
        kf.orientations = chain_orientations(first, bands, bends);
      }
      if (k.contains("positions")) {
        for (const auto& p : k["positions"]) kf.positions.push_back(detail::json_vec3(p));
      } else if (kf.orientations.size() == bands) {
        Pose base;
        if (k.contains("base")) base.position = detail::json_vec3(k["base"]);
        std::vector<double> fractions(bands - 1, 0.5);
        if (k.contains("bend_fractions")) fractions = k["bend_fractions"].get<std::vector<double>>();
        if (fractions.size() != bands - 1) throw Error(ErrorCode::ParseError, "need one bend fraction per segment");
        std::vector<double> locations(bands - 1);
        for (std::size_t s = 0; s + 1 < bands; ++s) {
          locations[s] = fractions[s] *
                         bend_between(kf.orientations[s], kf.orientations[s + 1], sc.geometry).free_length(sc.geometry);
        }
        kf.positions = reconstruct_shape(kf.orientations, sc.geometry, base, locations).band_positions();
      }
      sc.trajectory.push_back(std::move(kf));
    }
    sc.heat_sources = detail::json_sources(j.value("heat_sources", nlohmann::json::array()));
    sc.humidity_sources = detail::json_sources(j.value("humidity_sources", nlohmann::json::array()));
    for (const auto& e : j.value("failures", nlohmann::json::array())) {
      const std::string action = e.value("action", std::string("fail"));
      if (action != "fail" && action != "recover") throw Error(ErrorCode::ParseError, "action must be fail or recover");
      sc.failure_schedule.push_back({e.at("time_s").get<double>(), e.at("address").get<std::uint8_t>(), action == "fail"});
    }
    sc.validate();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scenario: ") + e.what());
  }
}

inline Scenario read_scenario(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scenario: ") + e.what());
  }
  return parse_scenario(j);
}

inline Scenario read_scenario(const std::string& path) {
  auto in = detail::open_in(path);
  return read_scenario(in);
}

}  // namespace everbot::io
