#pragma once

// Discrete-tick simulation of the aggregator and the band nodes sharing one
// bus. Frames are modeled at the byte level (address, kind, payload,
// checksum); the electrical layer is not.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "everbot/error.hpp"
#include "everbot/geometry.hpp"
#include "everbot/random.hpp"
#include "everbot/sensing.hpp"
#include "everbot/telemetry.hpp"

namespace everbot {

inline constexpr std::uint8_t kMinNodeAddress = 8;
inline constexpr std::uint8_t kMaxNodeAddress = 119;

enum class FrameKind : std::uint8_t { Poll = 0x01, Reading = 0x02, Error = 0x03 };

/// Payload sizes are fixed per kind: a poll carries the tick (u32), a
/// reading carries nine little-endian doubles (quaternion w x y z, four
/// thermistors, humidity), an error carries one code byte.
constexpr std::size_t payload_size(FrameKind kind) {
  switch (kind) {
    case FrameKind::Poll: return 4;
    case FrameKind::Reading: return 9 * sizeof(double);
    case FrameKind::Error: return 1;
  }
  return 0;
}

struct Frame {
  std::uint8_t address = 0;
  FrameKind kind = FrameKind::Poll;
  std::vector<std::uint8_t> payload;
  std::uint8_t checksum = 0;

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Sum of all bytes modulo 256.
inline std::uint8_t checksum8(std::span<const std::uint8_t> bytes) {
  unsigned sum = 0;
  for (std::uint8_t b : bytes) sum += b;
  return static_cast<std::uint8_t>(sum & 0xffu);
}

inline Frame make_frame(std::uint8_t address, FrameKind kind, std::vector<std::uint8_t> payload) {
  if (address > 0x7f) throw Error(ErrorCode::InvalidArgument, "bus addresses are 7 bits");
  if (payload.size() != payload_size(kind)) {
    throw Error(ErrorCode::InvalidArgument, "payload size does not match the frame kind");
  }
  Frame f{address, kind, std::move(payload), 0};
  std::vector<std::uint8_t> head{f.address, static_cast<std::uint8_t>(f.kind)};
  f.checksum = static_cast<std::uint8_t>((checksum8(head) + checksum8(f.payload)) & 0xffu);
  return f;
}

/// Wire layout: address, kind, payload..., checksum.
inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(f.payload.size() + 3);
  out.push_back(f.address);
  out.push_back(static_cast<std::uint8_t>(f.kind));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  out.push_back(f.checksum);
  return out;
}

/// Returns nothing for any byte string that is not a valid frame.
inline std::optional<Frame> try_decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 3) return std::nullopt;
  const std::uint8_t address = bytes[0];
  if (address > 0x7f) return std::nullopt;
  const std::uint8_t kind_byte = bytes[1];
  if (kind_byte < 0x01 || kind_byte > 0x03) return std::nullopt;
  const auto kind = static_cast<FrameKind>(kind_byte);
  if (bytes.size() != payload_size(kind) + 3) return std::nullopt;
  if (checksum8(bytes.first(bytes.size() - 1)) != bytes.back()) return std::nullopt;
  Frame f;
  f.address = address;
  f.kind = kind;
  f.payload.assign(bytes.begin() + 2, bytes.end() - 1);
  f.checksum = bytes.back();
  return f;
}

inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  auto f = try_decode_frame(bytes);
  if (!f) throw Error(ErrorCode::ParseError, "invalid frame");
  return *f;
}

namespace detail {

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_poll(std::uint64_t tick) {
  const auto t = static_cast<std::uint32_t>(tick);
  return {static_cast<std::uint8_t>(t), static_cast<std::uint8_t>(t >> 8),
          static_cast<std::uint8_t>(t >> 16), static_cast<std::uint8_t>(t >> 24)};
}

inline std::vector<std::uint8_t> encode_reading(const SensorState& s) {
  std::vector<std::uint8_t> out;
  out.reserve(payload_size(FrameKind::Reading));
  detail::put_f64(out, s.orientation.w());
  detail::put_f64(out, s.orientation.x());
  detail::put_f64(out, s.orientation.y());
  detail::put_f64(out, s.orientation.z());
  for (double t : s.thermistors) detail::put_f64(out, t);
  detail::put_f64(out, s.humidity);
  return out;
}

inline std::optional<SensorState> decode_reading(std::span<const std::uint8_t> payload) {
  if (payload.size() != payload_size(FrameKind::Reading)) return std::nullopt;
  double v[9];
  for (std::size_t i = 0; i < 9; ++i) {
    v[i] = detail::get_f64(payload, 8 * i);
    if (!std::isfinite(v[i])) return std::nullopt;
  }
  const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
  if (std::abs(norm - 1.0) > 1e-9) return std::nullopt;
  SensorState s;
  s.orientation = UnitOrientation(v[0], v[1], v[2], v[3]);
  for (std::size_t k = 0; k < kThermistorsPerBand; ++k) s.thermistors[k] = v[4 + k];
  s.humidity = v[8];
  return s;
}

struct BandNode {
  std::uint8_t address = kMinNodeAddress;
  std::size_t band_index = 0;
  bool failed = false;
  SensorState sensor_state;
};

/// Throws AddressCollision on duplicate addresses and InvalidArgument on
/// addresses outside the usable 7-bit range.
inline void validate_nodes(std::span<const BandNode> nodes) {
  std::vector<std::uint8_t> seen;
  for (const BandNode& n : nodes) {
    if (n.address < kMinNodeAddress || n.address > kMaxNodeAddress) {
      throw Error(ErrorCode::InvalidArgument,
                  "address " + std::to_string(n.address) + " is reserved", {n.band_index});
    }
    if (std::find(seen.begin(), seen.end(), n.address) != seen.end()) {
      throw Error(ErrorCode::AddressCollision,
                  "address " + std::to_string(n.address) + " used twice", {n.band_index});
    }
    seen.push_back(n.address);
  }
}

/// Optional link faults: each reading frame is corrupted with this
/// probability, using the stream keyed by (seed, tick, address).
struct LinkFaults {
  double corruption_rate = 0.0;
  std::uint64_t seed = 0;
};

struct PollResult {
  std::vector<Frame> frames;  // in bus order: poll, then the reply if any
  std::vector<TelemetryRecord> records;
};

/// One aggregator cycle. Nodes are polled in address order; a failed node or
/// a reply that does not decode yields a missing record for that band.
inline PollResult poll_cycle(std::span<const BandNode> nodes, std::uint64_t tick, double time_s,
                             const LinkFaults& faults = {}) {
  std::vector<const BandNode*> order;
  order.reserve(nodes.size());
  for (const BandNode& n : nodes) order.push_back(&n);
  std::sort(order.begin(), order.end(),
            [](const BandNode* a, const BandNode* b) { return a->address < b->address; });

  PollResult out;
  for (const BandNode* node : order) {
    out.frames.push_back(make_frame(node->address, FrameKind::Poll, encode_poll(tick)));
    TelemetryRecord rec{tick, time_s, node->band_index, std::nullopt};
    if (!node->failed) {
      const Frame reply = make_frame(node->address, FrameKind::Reading, encode_reading(node->sensor_state));
      std::vector<std::uint8_t> wire = encode_frame(reply);
      if (faults.corruption_rate > 0.0) {
        RandomStream link(mix_key({faults.seed, 0x11c0ULL, tick, node->address}));
        if (link.next_unit() < faults.corruption_rate) {
          const auto pos = static_cast<std::size_t>(link.next_u64() % wire.size());
          wire[pos] ^= static_cast<std::uint8_t>(1u + link.next_u64() % 255u);
        }
      }
      if (auto decoded = try_decode_frame(wire);
          decoded && decoded->address == node->address && decoded->kind == FrameKind::Reading) {
        if (auto state = decode_reading(decoded->payload)) {
          rec.reading = *state;
          out.frames.push_back(*decoded);
        }
      }
    }
    out.records.push_back(rec);
  }
  return out;
}

// Scenario description ------------------------------------------------------

/// A bend applied at one segment, expressed in the body frame of the band
/// that starts the segment.
struct BodyBend {
  std::size_t segment = 0;
  double angle_rad = 0.0;
  Vec3 axis = Vec3::UnitZ();
};

/// Orientations of `band_count` bands starting from `first`, where band k+1
/// is band k rotated by the bends listed for segment k.
inline std::vector<UnitOrientation> chain_orientations(const UnitOrientation& first,
                                                       std::size_t band_count,
                                                       std::span<const BodyBend> bends) {
  std::vector<UnitOrientation> out{first};
  for (std::size_t k = 0; k + 1 < band_count; ++k) {
    UnitOrientation next = out.back();
    for (const BodyBend& b : bends) {
      if (b.segment >= band_count - 1) {
        throw Error(ErrorCode::InvalidArgument, "bend segment out of range", {b.segment});
      }
      if (b.segment == k) next = next * UnitOrientation::from_axis_angle(b.axis, b.angle_rad);
    }
    out.push_back(next);
  }
  return out;
}

struct Keyframe {
  double time_s = 0.0;
  std::vector<UnitOrientation> orientations;  // one per band, true values
  std::vector<Vec3> positions;                // one per band
};

struct PointSource {
  Vec3 position = Vec3::Zero();
  double strength = 0.0;
  double falloff_m = 0.05;
  double on_s = -std::numeric_limits<double>::infinity();
  double off_s = std::numeric_limits<double>::infinity();

  bool active(double t) const { return t >= on_s && t < off_s; }
};

struct FailureEvent {
  double time_s = 0.0;
  std::uint8_t address = 0;
  bool fail = true;  // false recovers the node
};

struct Scenario {
  RobotGeometry geometry;
  std::vector<Keyframe> trajectory;
  std::vector<PointSource> heat_sources;
  std::vector<PointSource> humidity_sources;
  double heading_noise_rad = deg_to_rad(2.5);
  std::vector<FailureEvent> failure_schedule;
  double tick_hz = 50.0;
  double duration_s = 1.0;
  std::uint64_t seed = 0;
  double ambient_c = 20.0;
  double ambient_rh = 40.0;
  ThermistorLayout layout = ThermistorLayout::top_half(kThermistorsPerBand);
  std::vector<std::uint8_t> addresses;  // empty: 8 + band index
  double link_corruption_rate = 0.0;

  double start_s() const { return trajectory.empty() ? 0.0 : trajectory.front().time_s; }
  double end_s() const { return start_s() + duration_s; }

  std::uint64_t tick_count() const {
    return static_cast<std::uint64_t>(std::ceil(duration_s * tick_hz - 1e-9));
  }

  std::uint8_t address_of(std::size_t band) const {
    return addresses.empty() ? static_cast<std::uint8_t>(kMinNodeAddress + band) : addresses[band];
  }

  /// Fills in missing keyframe positions by midpoint reconstruction from
  /// the first keyframe's base position (or the origin).
  void resolve_positions() {
    for (Keyframe& k : trajectory) {
      if (k.positions.empty() && k.orientations.size() == geometry.band_count) {
        k.positions = reconstruct_shape(k.orientations, geometry).band_positions();
      }
    }
  }

  void validate() const {
    geometry.validate();
    layout.validate();
    if (layout.count_per_band() != kThermistorsPerBand) {
      throw Error(ErrorCode::InvalidArgument, "the bus schema carries exactly four thermistors");
    }
    if (!(tick_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "tick_hz must be positive");
    if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
    if (!(heading_noise_rad >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise bound must be >= 0");
    if (!(link_corruption_rate >= 0.0 && link_corruption_rate <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "link corruption rate must lie in [0, 1]");
    }
    if (trajectory.empty()) throw Error(ErrorCode::InvalidArgument, "trajectory needs a keyframe");
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
      const Keyframe& k = trajectory[i];
      if (i > 0 && !(k.time_s > trajectory[i - 1].time_s)) {
        throw Error(ErrorCode::InvalidArgument, "trajectory timestamps must increase", {i});
      }
      if (k.orientations.size() != geometry.band_count || k.positions.size() != geometry.band_count) {
        throw Error(ErrorCode::LengthMismatch, "keyframe does not cover every band", {i});
      }
    }
    if (!addresses.empty() && addresses.size() != geometry.band_count) {
      throw Error(ErrorCode::LengthMismatch, "need one address per band");
    }
    for (const FailureEvent& e : failure_schedule) {
      bool known = false;
      for (std::size_t b = 0; b < geometry.band_count; ++b) known = known || address_of(b) == e.address;
      if (!known) {
        throw Error(ErrorCode::InvalidArgument,
                    "failure schedule names unknown address " + std::to_string(e.address));
      }
    }
  }
};

/// True pose of a band at time t: orientations slerped and positions
/// interpolated linearly between keyframes, held after the last keyframe.
inline Pose true_pose(const Scenario& sc, double time_s, std::size_t band) {
  const auto& traj = sc.trajectory;
  if (time_s < sc.start_s() - 1e-12 || time_s > sc.end_s() + 1e-12) {
    throw Error(ErrorCode::TimeOutOfRange, "time " + std::to_string(time_s) + " outside [" +
                                               std::to_string(sc.start_s()) + ", " +
                                               std::to_string(sc.end_s()) + "]");
  }
  if (band >= sc.geometry.band_count) throw Error(ErrorCode::InvalidArgument, "band out of range", {band});
  std::size_t i = 0;
  while (i + 1 < traj.size() && traj[i + 1].time_s <= time_s) ++i;
  if (i + 1 >= traj.size() || time_s <= traj[i].time_s) {
    return {traj[i].positions[band], traj[i].orientations[band]};
  }
  const Keyframe& a = traj[i];
  const Keyframe& b = traj[i + 1];
  const double u = (time_s - a.time_s) / (b.time_s - a.time_s);
  Pose p;
  p.position = (1.0 - u) * a.positions[band] + u * b.positions[band];
  p.orientation = UnitOrientation(
      a.orientations[band].quaternion().slerp(u, b.orientations[band].quaternion()));
  return p;
}

/// Exponential falloff with distance, gated by the cosine between the
/// sensor's outward normal and the direction to the source. A source at
/// the sensor itself counts as fully facing it.
inline double directional_response(const PointSource& src, const Vec3& sensor, const Vec3& normal) {
  const Vec3 v = src.position - sensor;
  const double d = v.norm();
  const double facing = d < 1e-12 ? 1.0 : std::max(0.0, normal.dot(v) / d);
  return src.strength * std::exp(-d / src.falloff_m) * facing;
}

inline double isotropic_response(const PointSource& src, const Vec3& sensor) {
  return src.strength * std::exp(-(src.position - sensor).norm() / src.falloff_m);
}

/// Sensor readings of one band. The reported orientation carries a heading
/// error drawn uniformly from the noise bound, applied about world +z.
inline SensorState synthesize_sensor_state(const Scenario& sc, double time_s, std::size_t band,
                                           RandomStream& rng) {
  const Pose truth = true_pose(sc, time_s, band);
  SensorState s;
  s.orientation = truth.orientation;
  if (sc.heading_noise_rad > 0.0) {
    const double err = rng.uniform(-sc.heading_noise_rad, sc.heading_noise_rad);
    s.orientation = UnitOrientation::from_axis_angle(Vec3::UnitZ(), err) * truth.orientation;
  }
  const double radius = 0.5 * sc.geometry.diameter_m;
  for (std::size_t k = 0; k < kThermistorsPerBand; ++k) {
    const Vec3 normal = truth.orientation.rotate(radial_direction(sc.layout.angular_positions_rad[k]));
    const Vec3 at = truth.position + radius * normal;
    double t = sc.ambient_c;
    for (const PointSource& src : sc.heat_sources) {
      if (src.active(time_s)) t += directional_response(src, at, normal);
    }
    s.thermistors[k] = t;
  }
  const Vec3 hum_at =
      truth.position + radius * truth.orientation.rotate(radial_direction(sc.layout.humidity_angle_rad));
  s.humidity = sc.ambient_rh;
  for (const PointSource& src : sc.humidity_sources) {
    if (src.active(time_s)) s.humidity += isotropic_response(src, hum_at);
  }
  return s;
}

inline std::vector<BandNode> make_nodes(const Scenario& sc) {
  std::vector<BandNode> nodes(sc.geometry.band_count);
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    nodes[b].band_index = b;
    nodes[b].address = sc.address_of(b);
  }
  validate_nodes(nodes);
  return nodes;
}

/// Runs the whole scenario: ceil(duration * tick_hz) ticks, one poll cycle
/// each. Failure events take effect at the first tick at or after their time.
inline TelemetryLog run_scenario(const Scenario& sc) {
  sc.validate();
  std::vector<BandNode> nodes = make_nodes(sc);

  std::vector<FailureEvent> schedule = sc.failure_schedule;
  std::stable_sort(schedule.begin(), schedule.end(),
                   [](const FailureEvent& a, const FailureEvent& b) { return a.time_s < b.time_s; });
  std::size_t next_event = 0;

  TelemetryLog log;
  log.meta.geometry = sc.geometry;
  log.meta.tick_hz = sc.tick_hz;
  const std::uint64_t ticks = sc.tick_count();
  log.records.reserve(ticks * nodes.size());
  for (std::uint64_t tick = 0; tick < ticks; ++tick) {
    const double t = sc.start_s() + static_cast<double>(tick) / sc.tick_hz;
    while (next_event < schedule.size()) {
      const FailureEvent& e = schedule[next_event];
      const double effective = std::ceil((e.time_s - sc.start_s()) * sc.tick_hz - 1e-9);
      if (effective > static_cast<double>(tick)) break;
      for (BandNode& n : nodes) {
        if (n.address == e.address) n.failed = e.fail;
      }
      ++next_event;
    }
    for (BandNode& n : nodes) {
      RandomStream rng(mix_key({sc.seed, 0x5e45ULL, tick, static_cast<std::uint64_t>(n.band_index)}));
      n.sensor_state = synthesize_sensor_state(sc, t, n.band_index, rng);
    }
    PollResult cycle = poll_cycle(nodes, tick, t, LinkFaults{sc.link_corruption_rate, sc.seed});
    for (auto& r : cycle.records) log.records.push_back(std::move(r));
  }
  return log;
}

}  // namespace everbot
