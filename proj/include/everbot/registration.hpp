#pragma once

// Planar projection, first-segment registration and band position errors.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "everbot/error.hpp"
#include "everbot/geometry.hpp"

namespace everbot {

struct GroundTruthShape {
  Polyline3 band_points;
  std::optional<Polyline3> midpoints;
  int dimension = 2;  // 2 when the source carried no z column
  std::string frame_note;

  void validate() const {
    if (band_points.size() < 2) {
      throw Error(ErrorCode::TooFewPoints, "ground truth needs at least two band points");
    }
    if (midpoints && midpoints->size() != band_points.size() - 1) {
      throw Error(ErrorCode::LengthMismatch,
                  "expected " + std::to_string(band_points.size() - 1) + " midpoints, got " +
                      std::to_string(midpoints->size()));
    }
  }

  Polyline2 band_points_2d() const {
    Polyline2 out;
    out.reserve(band_points.size());
    for (const Vec3& p : band_points) out.emplace_back(p.x(), p.y());
    return out;
  }
};

struct ErrorReport {
  std::vector<double> per_band_error_m;
  double max_error_m = 0.0;
  std::size_t argmax_band = 0;
};

/// Orthonormal basis (u, v) of the plane with normal n, with u x v = n.
/// u is the world x axis projected into the plane, or the world y axis when
/// n is within about 25 degrees of x. For n = z this gives u = x, v = y.
struct PlaneBasis {
  Vec3 u;
  Vec3 v;
  Vec3 n;

  explicit PlaneBasis(const Vec3& normal) {
    const double len = normal.norm();
    if (!(len > 0.0)) throw Error(ErrorCode::InvalidArgument, "plane normal must be non-zero");
    n = normal / len;
    const Vec3 ref = std::abs(n.x()) > 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    u = (ref - ref.dot(n) * n).normalized();
    v = n.cross(u);
  }
};

inline Polyline2 project_to_plane(std::span<const Vec3> points, const Vec3& plane_normal) {
  const PlaneBasis basis(plane_normal);
  Polyline2 out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.emplace_back(p.dot(basis.u), p.dot(basis.v));
  return out;
}

inline Polyline2 project_to_plane(const ShapeEstimate& shape, const Vec3& plane_normal) {
  const Polyline3 bands = shape.band_positions();
  return project_to_plane(bands, plane_normal);
}

/// Orthogonal projection that stays in world coordinates.
inline Polyline3 project_onto_plane(std::span<const Vec3> points, const Vec3& plane_normal) {
  const PlaneBasis basis(plane_normal);
  Polyline3 out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(p - p.dot(basis.n) * basis.n);
  return out;
}

/// Translates `estimate` so its first point lands on truth[0], then rotates
/// it about that point until estimate[0]->estimate[1] points along
/// truth[0]->truth[1]. Rotation and translation only.
inline Polyline2 register_first_segment(std::span<const Vec2> estimate, std::span<const Vec2> truth) {
  if (estimate.size() < 2 || truth.size() < 2) {
    throw Error(ErrorCode::TooFewPoints, "registration needs at least two points on each shape");
  }
  const Vec2 de = estimate[1] - estimate[0];
  const Vec2 dt = truth[1] - truth[0];
  if (de.norm() <= 1e-9) throw Error(ErrorCode::DegenerateSegment, "first estimate segment has zero length");
  if (dt.norm() <= 1e-9) throw Error(ErrorCode::DegenerateSegment, "first truth segment has zero length");
  const double angle = std::atan2(dt.y(), dt.x()) - std::atan2(de.y(), de.x());
  const Eigen::Rotation2Dd rot(angle);
  Polyline2 out;
  out.reserve(estimate.size());
  for (const Vec2& p : estimate) out.push_back(truth[0] + rot * (p - estimate[0]));
  return out;
}

/// 3D counterpart: minimal rotation aligning the first segments, then, when
/// `fit_roll` is set, the roll about the aligned segment that minimizes the
/// squared distances of the remaining points.
inline Polyline3 register_first_segment(std::span<const Vec3> estimate, std::span<const Vec3> truth,
                                        bool fit_roll = true) {
  if (estimate.size() < 2 || truth.size() < 2) {
    throw Error(ErrorCode::TooFewPoints, "registration needs at least two points on each shape");
  }
  const Vec3 de = estimate[1] - estimate[0];
  const Vec3 dt = truth[1] - truth[0];
  if (de.norm() <= 1e-9) throw Error(ErrorCode::DegenerateSegment, "first estimate segment has zero length");
  if (dt.norm() <= 1e-9) throw Error(ErrorCode::DegenerateSegment, "first truth segment has zero length");
  const Eigen::Quaterniond align = Eigen::Quaterniond::FromTwoVectors(de, dt);
  Polyline3 out;
  out.reserve(estimate.size());
  for (const Vec3& p : estimate) out.push_back(truth[0] + align * (p - estimate[0]));

  if (fit_roll && estimate.size() > 2 && truth.size() == estimate.size()) {
    const Vec3 axis = dt.normalized();
    double s = 0.0, c = 0.0;
    for (std::size_t i = 2; i < out.size(); ++i) {
      Vec3 a = out[i] - truth[0];
      Vec3 b = truth[i] - truth[0];
      a -= a.dot(axis) * axis;
      b -= b.dot(axis) * axis;
      c += a.dot(b);
      s += axis.dot(a.cross(b));
    }
    if (std::hypot(s, c) > 0.0) {
      const Eigen::AngleAxisd roll(std::atan2(s, c), axis);
      for (Vec3& p : out) p = truth[0] + roll * (p - truth[0]);
    }
  }
  return out;
}

/// Per-point distances between two already aligned point lists.
template <class Point>
ErrorReport band_errors(std::span<const Point> a, std::span<const Point> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch, "shapes have " + std::to_string(a.size()) + " and " +
                                               std::to_string(b.size()) + " band points");
  }
  ErrorReport report;
  report.per_band_error_m.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = (a[i] - b[i]).norm();
    report.per_band_error_m.push_back(e);
    if (e > report.max_error_m || i == 0) {
      report.max_error_m = e;
      report.argmax_band = i;
    }
  }
  return report;
}

/// Registers `estimate` to `truth` by the first segment, then reports
/// per-band distances.
inline ErrorReport position_errors(std::span<const Vec2> estimate, std::span<const Vec2> truth) {
  if (estimate.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch, "shapes have " + std::to_string(estimate.size()) +
                                               " and " + std::to_string(truth.size()) +
                                               " band points");
  }
  const Polyline2 registered = register_first_segment(estimate, truth);
  return band_errors<Vec2>(registered, truth);
}

inline ErrorReport position_errors(std::span<const Vec3> estimate, std::span<const Vec3> truth,
                                   bool fit_roll = true) {
  if (estimate.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch, "shapes have " + std::to_string(estimate.size()) +
                                               " and " + std::to_string(truth.size()) +
                                               " band points");
  }
  const Polyline3 registered = register_first_segment(estimate, truth, fit_roll);
  return band_errors<Vec3>(registered, truth);
}

/// Planar evaluation: both shapes projected onto the x-y plane.
inline ErrorReport position_errors(std::span<const Vec3> estimate, const GroundTruthShape& truth) {
  truth.validate();
  const Vec3 z = Vec3::UnitZ();
  return position_errors(std::span<const Vec2>(project_to_plane(estimate, z)),
                         std::span<const Vec2>(project_to_plane(truth.band_points, z)));
}

}  // namespace everbot
