#pragma once

// Centerline kinematics between sensor bands and shape reconstruction from
// per-band absolute orientations.
//
// Model: the outer edge of the body keeps its length. Between two bands the
// centerline is straight, kinks once, and is straight again. Over the kink
// the outer edge follows an arc of radius D/2 about the kink point, which
// consumes L_arc = (D/2) * theta of the band spacing, so the two straight
// centerline pieces of a segment sum to L_spacing - L_arc.

#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "everbot/error.hpp"

namespace everbot {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Polyline2 = std::vector<Vec2>;
using Polyline3 = std::vector<Vec3>;

/// Body-frame axis that points along the robot. Headings are this axis
/// rotated into the world frame.
inline const Vec3 kForwardAxis = Vec3::UnitX();

/// Bends at or below this angle are treated as straight segments.
inline constexpr double kStraightTolerance = 1e-8;

/// Bends within this distance of pi have an undefined axis.
inline constexpr double kAntiparallelTolerance = 1e-8;

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Absolute orientation of a band. Stored normalized with a canonical sign
/// (first non-zero component of w, x, y, z positive), so q and -q are the
/// same value.
class UnitOrientation {
 public:
  UnitOrientation() : q_(Eigen::Quaterniond::Identity()) {}

  UnitOrientation(double w, double x, double y, double z) : q_(w, x, y, z) { canonicalize(); }

  explicit UnitOrientation(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }

  static UnitOrientation identity() { return {}; }

  static UnitOrientation from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidArgument, "rotation axis must be a finite non-zero vector");
    }
    return UnitOrientation(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis / n)));
  }

  /// Minimal rotation taking direction `from` onto direction `to`.
  static UnitOrientation between(const Vec3& from, const Vec3& to) {
    return UnitOrientation(Eigen::Quaterniond::FromTwoVectors(from, to));
  }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  const Eigen::Quaterniond& quaternion() const { return q_; }

  Vec3 rotate(const Vec3& v) const { return q_ * v; }

  UnitOrientation inverse() const { return UnitOrientation(q_.conjugate()); }

  /// Composition: (a * b) applies b first, then a.
  friend UnitOrientation operator*(const UnitOrientation& a, const UnitOrientation& b) {
    return UnitOrientation(a.q_ * b.q_);
  }

  /// Exact equality of the canonical components.
  friend bool operator==(const UnitOrientation& a, const UnitOrientation& b) {
    return a.q_.coeffs() == b.q_.coeffs();
  }

  /// Rotation angle separating two orientations, in [0, pi].
  double angle_to(const UnitOrientation& other) const {
    const double d = std::abs(q_.dot(other.q_));
    return 2.0 * std::acos(std::min(1.0, d));
  }

  bool approx_equal(const UnitOrientation& other, double tol = 1e-9) const {
    const double same = (q_.coeffs() - other.q_.coeffs()).cwiseAbs().maxCoeff();
    const double flipped = (q_.coeffs() + other.q_.coeffs()).cwiseAbs().maxCoeff();
    return std::min(same, flipped) <= tol;
  }

 private:
  void canonicalize() {
    const double n = q_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidArgument, "orientation must be a finite non-zero quaternion");
    }
    // Components that are already unit length are kept bit-exact so that
    // serialized orientations read back unchanged.
    if (std::abs(n - 1.0) > 1e-14) q_.coeffs() /= n;
    const double comps[4] = {q_.w(), q_.x(), q_.y(), q_.z()};
    for (double c : comps) {
      if (c > 0.0) return;
      if (c < 0.0) {
        q_.coeffs() = -q_.coeffs();
        return;
      }
    }
  }

  Eigen::Quaterniond q_;
};

/// A world-frame direction along the robot axis at a band.
inline Vec3 heading_from_orientation(const UnitOrientation& q) { return q.rotate(kForwardAxis); }

struct RobotGeometry {
  double diameter_m = 0.066;
  double band_spacing_m = 0.076;
  std::size_t band_count = 15;

  RobotGeometry() = default;
  RobotGeometry(double diameter, double spacing, std::size_t count)
      : diameter_m(diameter), band_spacing_m(spacing), band_count(count) {
    validate();
  }

  void validate() const {
    if (!(diameter_m > 0.0) || !std::isfinite(diameter_m)) {
      throw Error(ErrorCode::InvalidArgument, "diameter must be positive");
    }
    if (!(band_spacing_m > 0.0) || !std::isfinite(band_spacing_m)) {
      throw Error(ErrorCode::InvalidArgument, "band spacing must be positive");
    }
    if (band_count < 2) throw Error(ErrorCode::InvalidArgument, "at least two bands are required");
  }

  /// Largest bend whose outer-edge arc still fits between two bands.
  double max_bend_angle() const { return 2.0 * band_spacing_m / diameter_m; }

  /// Below a spacing/diameter ratio of 1.5 more than one bend per segment
  /// becomes likely; reconstructions still run but are less trustworthy.
  bool single_bend_valid() const { return band_spacing_m / diameter_m >= 1.5; }
};

struct Pose {
  Vec3 position = Vec3::Zero();
  UnitOrientation orientation;
};

struct SegmentBend {
  double theta_rad = 0.0;
  Vec3 axis = Vec3::Zero();  // zero for straight segments
  double arc_length_m = 0.0;
  double bend_location_m = 0.0;

  bool straight() const { return theta_rad <= kStraightTolerance; }
  /// Straight centerline length available for placing the kink.
  double free_length(const RobotGeometry& geom) const {
    return std::max(0.0, geom.band_spacing_m - arc_length_m);
  }
};

enum class PointKind { Band, Kink };

struct ShapeEstimate {
  std::vector<Pose> band_poses;
  Polyline3 centerline;
  std::vector<PointKind> centerline_kinds;  // parallel to centerline
  std::vector<SegmentBend> segment_bends;

  Polyline3 band_positions() const {
    Polyline3 out;
    out.reserve(band_poses.size());
    for (const auto& p : band_poses) out.push_back(p.position);
    return out;
  }

  double max_bend_angle() const {
    double m = 0.0;
    for (const auto& b : segment_bends) m = std::max(m, b.theta_rad);
    return m;
  }
};

inline double arc_length(double theta_rad, double diameter_m) {
  if (!(theta_rad >= 0.0)) throw Error(ErrorCode::InvalidArgument, "bend angle must be non-negative");
  if (!(diameter_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "diameter must be positive");
  return 0.5 * diameter_m * theta_rad;
}

namespace detail {

inline double angle_between_unit(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline double midpoint_location(double theta, const RobotGeometry& geom) {
  return 0.5 * std::max(0.0, geom.band_spacing_m - arc_length(theta, geom.diameter_m));
}

inline bool bend_fits(double theta, const RobotGeometry& geom) {
  // A relative slack of a few ulps admits theta == 2L/D computed in floating point.
  return arc_length(theta, geom.diameter_m) <= geom.band_spacing_m * (1.0 + 4e-16);
}

}  // namespace detail

/// Bend between two consecutive headings, with the kink at the midpoint of
/// the feasible straight length.
inline SegmentBend bend_from_headings(const Vec3& h_i, const Vec3& h_j, const RobotGeometry& geom,
                                      std::size_t segment = 0) {
  SegmentBend bend;
  bend.theta_rad = detail::angle_between_unit(h_i, h_j);
  if (std::numbers::pi - bend.theta_rad <= kAntiparallelTolerance) {
    throw Error(ErrorCode::AntiparallelHeadings,
                "segment " + std::to_string(segment) + ": headings are antiparallel", {segment});
  }
  if (!detail::bend_fits(bend.theta_rad, geom)) {
    throw Error(ErrorCode::InfeasibleBend,
                "segment " + std::to_string(segment) + ": bend of " +
                    std::to_string(rad_to_deg(bend.theta_rad)) + " deg exceeds the limit of " +
                    std::to_string(rad_to_deg(geom.max_bend_angle())) + " deg",
                {segment});
  }
  bend.arc_length_m = arc_length(bend.theta_rad, geom.diameter_m);
  if (!bend.straight()) bend.axis = h_i.cross(h_j).normalized();
  bend.bend_location_m = detail::midpoint_location(bend.theta_rad, geom);
  return bend;
}

inline SegmentBend bend_between(const UnitOrientation& q_i, const UnitOrientation& q_j,
                                const RobotGeometry& geom) {
  return bend_from_headings(heading_from_orientation(q_i), heading_from_orientation(q_j), geom);
}

struct SegmentStep {
  Pose end;
  std::vector<Vec3> kinks;  // empty for straight segments, otherwise one point
  SegmentBend bend;
};

/// Advances one segment: straight for `bend_location_m` along the start
/// heading, kink, then straight along the next heading for the remainder.
inline SegmentStep segment_forward(const Pose& start, const UnitOrientation& q_next,
                                   const RobotGeometry& geom, double bend_location_m,
                                   std::size_t segment = 0) {
  const Vec3 h_i = heading_from_orientation(start.orientation);
  const Vec3 h_j = heading_from_orientation(q_next);
  SegmentStep step;
  step.bend = bend_from_headings(h_i, h_j, geom, segment);
  const double free = step.bend.free_length(geom);
  if (!(bend_location_m >= -1e-12 && bend_location_m <= free + 1e-12)) {
    throw Error(ErrorCode::InvalidArgument,
                "segment " + std::to_string(segment) + ": bend location " +
                    std::to_string(bend_location_m) + " outside [0, " + std::to_string(free) + "]",
                {segment});
  }
  const double s = std::clamp(bend_location_m, 0.0, free);
  step.bend.bend_location_m = s;
  const Vec3 kink = start.position + s * h_i;
  step.end.position = kink + (free - s) * h_j;
  step.end.orientation = q_next;
  if (!step.bend.straight()) step.kinks.push_back(kink);
  return step;
}

/// Reconstruction with caller-chosen bend locations, one per segment.
inline ShapeEstimate reconstruct_shape(std::span<const UnitOrientation> orientations,
                                       const RobotGeometry& geom, const Pose& base,
                                       std::span<const double> bend_locations) {
  if (orientations.size() < 2) {
    throw Error(ErrorCode::EmptyInput, "at least two orientations are required");
  }
  if (orientations.size() != geom.band_count) {
    throw Error(ErrorCode::LengthMismatch,
                "got " + std::to_string(orientations.size()) + " orientations for " +
                    std::to_string(geom.band_count) + " bands");
  }
  if (bend_locations.size() != orientations.size() - 1) {
    throw Error(ErrorCode::LengthMismatch, "need one bend location per segment");
  }
  ShapeEstimate shape;
  shape.band_poses.reserve(orientations.size());
  shape.segment_bends.reserve(orientations.size() - 1);
  shape.centerline.reserve(2 * orientations.size());

  Pose current{base.position, orientations[0]};
  shape.band_poses.push_back(current);
  shape.centerline.push_back(current.position);
  shape.centerline_kinds.push_back(PointKind::Band);
  for (std::size_t k = 0; k + 1 < orientations.size(); ++k) {
    SegmentStep step = segment_forward(current, orientations[k + 1], geom, bend_locations[k], k);
    for (const Vec3& p : step.kinks) {
      shape.centerline.push_back(p);
      shape.centerline_kinds.push_back(PointKind::Kink);
    }
    shape.centerline.push_back(step.end.position);
    shape.centerline_kinds.push_back(PointKind::Band);
    shape.band_poses.push_back(step.end);
    shape.segment_bends.push_back(step.bend);
    current = step.end;
  }
  return shape;
}

/// Midpoint reconstruction: every kink sits in the middle of its feasible range.
inline ShapeEstimate reconstruct_shape(std::span<const UnitOrientation> orientations,
                                       const RobotGeometry& geom, const Pose& base = {}) {
  if (orientations.size() < 2) {
    throw Error(ErrorCode::EmptyInput, "at least two orientations are required");
  }
  std::vector<double> locations(orientations.size() - 1);
  for (std::size_t k = 0; k + 1 < orientations.size(); ++k) {
    locations[k] = bend_from_headings(heading_from_orientation(orientations[k]),
                                      heading_from_orientation(orientations[k + 1]), geom, k)
                       .bend_location_m;
  }
  return reconstruct_shape(orientations, geom, base, locations);
}

/// Splits `q` into swing * twist, where twist rotates about `axis` (unit)
/// and swing rotates about an axis perpendicular to it. Returns the signed
/// twist angle in (-pi, pi]; throws when the swing is a half turn.
inline double twist_angle(const UnitOrientation& q, const Vec3& axis) {
  const Vec3 v(q.x(), q.y(), q.z());
  const double p = v.dot(axis);
  if (std::hypot(q.w(), p) < 1e-12) {
    throw Error(ErrorCode::AntiparallelHeadings, "twist undefined for a half-turn swing");
  }
  double angle = 2.0 * std::atan2(p, q.w());
  if (angle <= -std::numbers::pi) angle += 2.0 * std::numbers::pi;
  if (angle > std::numbers::pi) angle -= 2.0 * std::numbers::pi;
  return angle;
}

/// Twist about the robot axis between two consecutive bands.
inline double relative_roll(const UnitOrientation& q_i, const UnitOrientation& q_j) {
  const Vec3 h_i = heading_from_orientation(q_i);
  const Vec3 h_j = heading_from_orientation(q_j);
  if (std::numbers::pi - detail::angle_between_unit(h_i, h_j) <= kAntiparallelTolerance) {
    throw Error(ErrorCode::AntiparallelHeadings, "relative roll undefined for antiparallel headings");
  }
  return twist_angle(q_i.inverse() * q_j, kForwardAxis);
}

}  // namespace everbot
