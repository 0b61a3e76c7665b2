#pragma once

// Monte Carlo propagation of bend-location and bend-angle uncertainty into
// band-position uncertainty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "everbot/error.hpp"
#include "everbot/geometry.hpp"
#include "everbot/random.hpp"

namespace everbot {

struct McConfig {
  std::size_t n_samples = 2000;
  double angle_error_bound_rad = deg_to_rad(3.0);
  bool vary_bend_location = true;
  std::uint64_t seed = 0;
  double percentile = 0.95;
  unsigned threads = 1;  // 0 picks the hardware concurrency

  void validate() const {
    if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be at least 1");
    if (!(angle_error_bound_rad >= 0.0) || !(angle_error_bound_rad < std::numbers::pi / 6.0)) {
      throw Error(ErrorCode::InvalidArgument, "angle error bound must lie in [0, pi/6)");
    }
    if (!(percentile > 0.0 && percentile <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "percentile must lie in (0, 1]");
    }
  }
};

struct BandStats {
  Vec3 mean_position = Vec3::Zero();
  double max_radius_m = 0.0;
  double percentile_radius_m = 0.0;
};

struct ShapeCloud {
  ShapeEstimate nominal;
  std::vector<ShapeEstimate> samples;
  std::vector<BandStats> per_band_stats;
  double percentile = 0.95;
  /// Perturbed bend angles that had to be clamped into [0, 2L/D].
  std::size_t clamped_bends = 0;
};

/// Relative rotations between consecutive bands split into a swing, which
/// tilts the heading by the bend angle, and a twist about the body axis.
struct BendChain {
  UnitOrientation first;
  std::vector<double> theta;
  std::vector<Vec3> swing_axis;  // body frame of the earlier band; zero when straight
  std::vector<UnitOrientation> twist;

  static BendChain decompose(std::span<const UnitOrientation> orientations) {
    BendChain chain;
    if (orientations.empty()) return chain;
    chain.first = orientations[0];
    for (std::size_t k = 0; k + 1 < orientations.size(); ++k) {
      const UnitOrientation rel = orientations[k].inverse() * orientations[k + 1];
      const Vec3 h = rel.rotate(kForwardAxis);
      const double theta = std::atan2(kForwardAxis.cross(h).norm(), kForwardAxis.dot(h));
      Vec3 axis = Vec3::Zero();
      UnitOrientation swing;
      if (theta > kStraightTolerance) {
        axis = kForwardAxis.cross(h).normalized();
        swing = UnitOrientation::from_axis_angle(axis, theta);
      }
      chain.theta.push_back(theta);
      chain.swing_axis.push_back(axis);
      chain.twist.push_back(swing.inverse() * rel);
    }
    return chain;
  }

  std::vector<UnitOrientation> compose(std::span<const double> thetas,
                                       std::span<const Vec3> axes) const {
    std::vector<UnitOrientation> out;
    out.reserve(thetas.size() + 1);
    out.push_back(first);
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      UnitOrientation swing;
      if (thetas[k] > 0.0 && axes[k].squaredNorm() > 0.0) {
        swing = UnitOrientation::from_axis_angle(axes[k], thetas[k]);
      }
      out.push_back(out.back() * swing * twist[k]);
    }
    return out;
  }
};

struct PerturbedOrientations {
  std::vector<UnitOrientation> orientations;
  std::size_t clamped = 0;
};

/// Adds `deltas[k]` to the bend angle of segment k about its own bend axis,
/// keeping every twist. The result is clamped into [0, 2L/D]. A straight
/// segment has no axis; it bends by |delta| about the body-frame axis
/// perpendicular to the heading at angle `straight_phase[k]`.
inline PerturbedOrientations perturb_bend_angles(std::span<const UnitOrientation> orientations,
                                                 const RobotGeometry& geom,
                                                 std::span<const double> deltas,
                                                 std::span<const double> straight_phase) {
  const BendChain chain = BendChain::decompose(orientations);
  if (deltas.size() != chain.theta.size() || straight_phase.size() != chain.theta.size()) {
    throw Error(ErrorCode::LengthMismatch, "need one angle error per segment");
  }
  // Kept a hair inside the feasible range so recomputed angles never round past it.
  const double limit =
      std::min(geom.max_bend_angle() * (1.0 - 1e-12), std::numbers::pi - 1e-6);
  PerturbedOrientations out;
  std::vector<double> thetas(chain.theta.size());
  std::vector<Vec3> axes(chain.theta.size());
  for (std::size_t k = 0; k < chain.theta.size(); ++k) {
    if (!detail::bend_fits(chain.theta[k], geom)) {
      throw Error(ErrorCode::InfeasibleBend, "segment " + std::to_string(k) + " is infeasible", {k});
    }
    if (chain.swing_axis[k].squaredNorm() > 0.0) {
      double t = chain.theta[k] + deltas[k];
      if (t < 0.0 || t > limit) ++out.clamped;
      thetas[k] = std::clamp(t, 0.0, limit);
      axes[k] = chain.swing_axis[k];
    } else {
      double t = std::abs(deltas[k]);
      if (t > limit) ++out.clamped;
      thetas[k] = std::min(t, limit);
      axes[k] = Vec3(0.0, std::cos(straight_phase[k]), std::sin(straight_phase[k]));
    }
  }
  out.orientations = chain.compose(thetas, axes);
  return out;
}

/// Per-band mean, maximum radius and percentile radius about the mean.
/// The percentile radius is the smallest radius that contains
/// ceil(percentile * n) samples.
inline std::vector<BandStats> cloud_stats(std::span<const ShapeEstimate> samples, double percentile) {
  if (samples.empty()) throw Error(ErrorCode::EmptyCloud, "cloud has no samples");
  if (!(percentile > 0.0 && percentile <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "percentile must lie in (0, 1]");
  }
  const std::size_t bands = samples.front().band_poses.size();
  for (const auto& s : samples) {
    if (s.band_poses.size() != bands) {
      throw Error(ErrorCode::LengthMismatch, "samples disagree on band count");
    }
  }
  const std::size_t n = samples.size();
  const auto keep = static_cast<std::size_t>(
      std::max(1.0, std::ceil(percentile * static_cast<double>(n) - 1e-9)));

  std::vector<BandStats> stats(bands);
  std::vector<double> radii(n);
  for (std::size_t b = 0; b < bands; ++b) {
    Vec3 sum = Vec3::Zero();
    for (const auto& s : samples) sum += s.band_poses[b].position;
    const Vec3 mean = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) radii[i] = (samples[i].band_poses[b].position - mean).norm();
    std::sort(radii.begin(), radii.end());
    stats[b].mean_position = mean;
    stats[b].max_radius_m = radii.back();
    stats[b].percentile_radius_m = radii[std::min(keep, n) - 1];
  }
  return stats;
}

namespace detail {

inline ShapeEstimate draw_sample(std::span<const UnitOrientation> orientations,
                                 const RobotGeometry& geom, const Pose& base, const McConfig& cfg,
                                 std::uint64_t sample_index, std::size_t& clamped) {
  const std::size_t segments = orientations.size() - 1;
  std::vector<double> deltas(segments), phases(segments), uniforms(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    RandomStream stream(mix_key({cfg.seed, sample_index, static_cast<std::uint64_t>(k)}));
    deltas[k] = stream.uniform(-cfg.angle_error_bound_rad, cfg.angle_error_bound_rad);
    phases[k] = stream.uniform(0.0, 2.0 * std::numbers::pi);
    uniforms[k] = stream.next_unit();
  }

  std::vector<UnitOrientation> perturbed;
  std::span<const UnitOrientation> used = orientations;
  if (cfg.angle_error_bound_rad > 0.0) {
    auto p = perturb_bend_angles(orientations, geom, deltas, phases);
    clamped = p.clamped;
    perturbed = std::move(p.orientations);
    used = perturbed;
  }

  std::vector<double> locations(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    const SegmentBend bend = bend_between(used[k], used[k + 1], geom);
    locations[k] = cfg.vary_bend_location ? uniforms[k] * bend.free_length(geom)
                                          : bend.bend_location_m;
  }
  return reconstruct_shape(used, geom, base, locations);
}

}  // namespace detail

/// Draws `cfg.n_samples` shapes. Sample i, segment k uses a random stream
/// keyed by (seed, i, k), so the cloud is identical for any thread count.
inline ShapeCloud sample_shapes(std::span<const UnitOrientation> orientations,
                                const RobotGeometry& geom, const McConfig& cfg,
                                const Pose& base = {}) {
  cfg.validate();
  ShapeCloud cloud;
  cloud.percentile = cfg.percentile;
  cloud.nominal = reconstruct_shape(orientations, geom, base);
  cloud.samples.resize(cfg.n_samples);

  const bool degenerate = cfg.angle_error_bound_rad == 0.0 && !cfg.vary_bend_location;
  std::vector<std::size_t> clamped(cfg.n_samples, 0);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      cloud.samples[i] = degenerate
                             ? cloud.nominal
                             : detail::draw_sample(orientations, geom, base, cfg, i, clamped[i]);
    }
  };

  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.n_samples));
  if (threads <= 1) {
    work(0, cfg.n_samples);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (cfg.n_samples + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(cfg.n_samples, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
  }
  for (std::size_t c : clamped) cloud.clamped_bends += c;
  cloud.per_band_stats = cloud_stats(cloud.samples, cfg.percentile);
  return cloud;
}

/// Band b is contained when it lies within the cloud's maximum radius
/// (plus slack) of the cloud mean at band b.
inline std::vector<bool> envelope_contains(const ShapeCloud& cloud, std::span<const Vec3> shape,
                                           double slack_m = 0.0) {
  if (shape.size() != cloud.per_band_stats.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "shape has " + std::to_string(shape.size()) + " points, cloud has " +
                    std::to_string(cloud.per_band_stats.size()) + " bands");
  }
  std::vector<bool> inside(shape.size());
  for (std::size_t b = 0; b < shape.size(); ++b) {
    const BandStats& s = cloud.per_band_stats[b];
    inside[b] = (shape[b] - s.mean_position).norm() <= s.max_radius_m + slack_m;
  }
  return inside;
}

}  // namespace everbot
