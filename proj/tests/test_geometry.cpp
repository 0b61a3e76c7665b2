#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "everbot/geometry.hpp"
#include "test_support.hpp"

using namespace everbot;
using everbot::testing::oracle_heading;
using everbot::testing::oracle_positions;

namespace {

constexpr double kD = 0.066;
constexpr double kL = 0.076;

RobotGeometry two_bands() { return RobotGeometry(kD, kL, 2); }

UnitOrientation rot_z(double deg) { return UnitOrientation::from_axis_angle(Vec3::UnitZ(), deg_to_rad(deg)); }

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

}  // namespace

TEST(UnitOrientation, NormalizesAndCanonicalizesSign) {
  const UnitOrientation q(-2.0, 0.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(q.w(), 1.0);
  const UnitOrientation a(0.3, -0.1, 0.5, 0.2);
  const UnitOrientation b(-0.3, 0.1, -0.5, -0.2);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.quaternion().norm(), 1.0, 1e-9);
  EXPECT_THROW(UnitOrientation(0, 0, 0, 0), Error);
}

TEST(UnitOrientation, ZeroScalarPartCanonicalizes) {
  const UnitOrientation a(0.0, -1.0, 0.0, 0.0);
  const UnitOrientation b(0.0, 1.0, 0.0, 0.0);
  EXPECT_EQ(a, b);
  EXPECT_GT(a.x(), 0.0);
}

TEST(Heading, IdentityAndAxisAligned) {
  expect_vec_near(heading_from_orientation(UnitOrientation()), Vec3(1, 0, 0), 1e-15);
  expect_vec_near(heading_from_orientation(rot_z(90)), Vec3(0, 1, 0), 1e-15);
}

TEST(Heading, FortyFiveDegreesMatchesRotationMatrix) {
  const UnitOrientation q = rot_z(45);
  // oracle: first column of the hand-written rotation matrix
  expect_vec_near(heading_from_orientation(q), oracle_heading(q), 1e-15);
  expect_vec_near(heading_from_orientation(q), Vec3(std::sqrt(0.5), std::sqrt(0.5), 0), 1e-15);
}

TEST(Heading, RandomOrientationsAgreeWithOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const UnitOrientation q = everbot::testing::random_orientation(rng);
    const Vec3 h = heading_from_orientation(q);
    EXPECT_NEAR(h.norm(), 1.0, 1e-12);
    expect_vec_near(h, oracle_heading(q), 1e-12);
  }
}

TEST(ArcLength, Examples) {
  EXPECT_EQ(arc_length(0.0, kD), 0.0);
  EXPECT_NEAR(arc_length(std::numbers::pi / 2, kD), 0.051836, 5e-7);
  EXPECT_NEAR(arc_length(std::numbers::pi / 4, kD), 0.025918, 5e-7);
  EXPECT_THROW(arc_length(-0.1, kD), Error);
  EXPECT_THROW(arc_length(0.1, 0.0), Error);
}

TEST(ArcLength, LinearInAngleAndDiameter) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double t = u(rng), d = 0.01 + u(rng), k = u(rng);
    EXPECT_NEAR(arc_length(k * t, d), k * arc_length(t, d), 1e-14);
    EXPECT_NEAR(arc_length(t, k * d + 0.01), arc_length(t, 0.01) + k * arc_length(t, d), 1e-13);
  }
}

TEST(RobotGeometry, ValidatesAndFlagsSingleBendRatio) {
  EXPECT_THROW(RobotGeometry(0.0, kL, 3), Error);
  EXPECT_THROW(RobotGeometry(kD, -1.0, 3), Error);
  EXPECT_THROW(RobotGeometry(kD, kL, 1), Error);
  EXPECT_FALSE(RobotGeometry(kD, kL, 15).single_bend_valid());  // 7.6/6.6 = 1.15
  EXPECT_TRUE(RobotGeometry(0.05, 0.08, 15).single_bend_valid());
  EXPECT_NEAR(RobotGeometry(kD, kL, 15).max_bend_angle(), 2.3030303, 1e-7);
}

TEST(BendBetween, IdenticalOrientationsAreStraight) {
  const SegmentBend b = bend_between(rot_z(10), rot_z(10), two_bands());
  EXPECT_EQ(b.theta_rad, 0.0);
  EXPECT_EQ(b.axis, Vec3::Zero());
  EXPECT_DOUBLE_EQ(b.bend_location_m, kL / 2);
}

TEST(BendBetween, DoubleCoverIsStraight) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const UnitOrientation q = everbot::testing::random_orientation(rng);
    const UnitOrientation neg(-q.w(), -q.x(), -q.y(), -q.z());
    EXPECT_LE(bend_between(q, neg, two_bands()).theta_rad, kStraightTolerance);
  }
}

TEST(BendBetween, NinetyDegrees) {
  const SegmentBend b = bend_between(UnitOrientation(), rot_z(90), two_bands());
  EXPECT_NEAR(b.theta_rad, std::numbers::pi / 2, 1e-15);
  expect_vec_near(b.axis, Vec3(0, 0, 1), 1e-15);
  EXPECT_NEAR(b.arc_length_m, 0.051836, 5e-7);
  EXPECT_NEAR(b.bend_location_m, 0.012082, 5e-7);
  EXPECT_NEAR(b.bend_location_m, (kL - kD / 2 * std::numbers::pi / 2) / 2, 1e-15);
}

TEST(BendBetween, BeyondFeasibilityIsRejected) {
  try {
    bend_between(UnitOrientation(), rot_z(135), two_bands());
    FAIL() << "expected InfeasibleBend";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleBend);
  }
}

TEST(BendBetween, AntiparallelIsRejected) {
  const RobotGeometry wide(0.01, 1.0, 2);  // limit well above pi
  try {
    bend_between(UnitOrientation(), rot_z(180), wide);
    FAIL() << "expected AntiparallelHeadings";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AntiparallelHeadings);
  }
}

TEST(SegmentForward, Straight) {
  const SegmentStep s = segment_forward(Pose{}, UnitOrientation(), two_bands(), kL / 2);
  expect_vec_near(s.end.position, Vec3(kL, 0, 0), 1e-15);
  EXPECT_TRUE(s.kinks.empty());
}

TEST(SegmentForward, NinetyDegreesAtMidpoint) {
  const double free = kL - kD / 2 * std::numbers::pi / 2;
  const SegmentStep s = segment_forward(Pose{}, rot_z(90), two_bands(), free / 2);
  ASSERT_EQ(s.kinks.size(), 1u);
  expect_vec_near(s.kinks[0], Vec3(0.012082, 0, 0), 5e-7);
  expect_vec_near(s.end.position, Vec3(0.012082, 0.012082, 0), 5e-7);
  EXPECT_EQ(s.end.orientation, rot_z(90));
}

TEST(SegmentForward, NinetyDegreesAtStart) {
  const SegmentStep s = segment_forward(Pose{}, rot_z(90), two_bands(), 0.0);
  ASSERT_EQ(s.kinks.size(), 1u);
  expect_vec_near(s.kinks[0], Vec3::Zero(), 1e-15);
  expect_vec_near(s.end.position, Vec3(0, 0.024164, 0), 5e-7);
}

TEST(SegmentForward, LocationOutsideFreeLengthIsRejected) {
  EXPECT_THROW(segment_forward(Pose{}, rot_z(90), two_bands(), 0.03), Error);
  EXPECT_THROW(segment_forward(Pose{}, rot_z(90), two_bands(), -0.001), Error);
}

TEST(Reconstruct, StraightFifteenBands) {
  const RobotGeometry g(kD, kL, 15);
  const std::vector<UnitOrientation> q(15);
  const ShapeEstimate s = reconstruct_shape(q, g);
  ASSERT_EQ(s.band_poses.size(), 15u);
  EXPECT_NEAR((s.band_poses.back().position - s.band_poses.front().position).norm(), 1.064, 1e-12);
  for (std::size_t b = 1; b < 15; ++b) {
    EXPECT_NEAR((s.band_poses[b].position - s.band_poses[b - 1].position).norm(), kL, 1e-12);
    EXPECT_NEAR(s.band_poses[b].position.y(), 0.0, 1e-15);
    EXPECT_NEAR(s.band_poses[b].position.z(), 0.0, 1e-15);
  }
  EXPECT_EQ(s.centerline.size(), 15u);
}

TEST(Reconstruct, TwoBandsMatchSegmentForward) {
  const std::vector<UnitOrientation> q{UnitOrientation(), rot_z(90)};
  const ShapeEstimate s = reconstruct_shape(q, two_bands());
  const SegmentStep step = segment_forward(Pose{}, q[1], two_bands(), s.segment_bends[0].bend_location_m);
  EXPECT_EQ(s.band_poses[1].position, step.end.position);
  ASSERT_EQ(s.centerline.size(), 3u);
  EXPECT_EQ(s.centerline_kinds[1], PointKind::Kink);
  EXPECT_EQ(s.centerline[1], step.kinks[0]);
}

TEST(Reconstruct, BaseOrientationIsOverridden) {
  Pose base;
  base.position = Vec3(1, 2, 3);
  base.orientation = rot_z(30);
  const std::vector<UnitOrientation> q{rot_z(5), rot_z(5)};
  const ShapeEstimate s = reconstruct_shape(q, two_bands(), base);
  EXPECT_EQ(s.band_poses[0].position, Vec3(1, 2, 3));
  EXPECT_EQ(s.band_poses[0].orientation, rot_z(5));
}

TEST(Reconstruct, ErrorPaths) {
  const std::vector<UnitOrientation> one(1);
  try {
    reconstruct_shape(one, two_bands());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  const RobotGeometry g(kD, kL, 4);
  const std::vector<UnitOrientation> q{UnitOrientation(), UnitOrientation(), rot_z(140), rot_z(140)};
  try {
    reconstruct_shape(q, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleBend);
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(ReconstructProperty, InvariantsOnRandomChains) {
  std::mt19937_64 rng(17);
  const RobotGeometry g(kD, kL, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = everbot::testing::random_feasible_chain(rng, g);
    const ShapeEstimate s = reconstruct_shape(q, g);
    ASSERT_EQ(s.band_poses.size(), g.band_count);
    ASSERT_EQ(s.segment_bends.size(), g.band_count - 1);
    for (std::size_t i = 1; i < s.centerline.size(); ++i) {
      EXPECT_LE((s.centerline[i] - s.centerline[i - 1]).norm(), kL + 1e-12);
    }
    // straight length per segment: walk the centerline between band points
    std::size_t seg = 0;
    double run = 0.0;
    for (std::size_t i = 1; i < s.centerline.size(); ++i) {
      run += (s.centerline[i] - s.centerline[i - 1]).norm();
      if (s.centerline_kinds[i] == PointKind::Band) {
        const double theta = s.segment_bends[seg].theta_rad;
        EXPECT_NEAR(run, kL - kD / 2 * theta, 1e-9);
        run = 0.0;
        ++seg;
      }
    }
  }
}

TEST(ReconstructProperty, RoundTripAgainstOracleGenerator) {
  std::mt19937_64 rng(23);
  const RobotGeometry g(kD, kL, 15);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = everbot::testing::random_feasible_chain(rng, g);
    const Polyline3 truth = oracle_positions(q, kD, kL, std::vector<double>(14, 0.5));
    const Polyline3 got = reconstruct_shape(q, g).band_positions();
    for (std::size_t b = 0; b < truth.size(); ++b) EXPECT_LT((truth[b] - got[b]).norm(), 1e-9);
  }
}

TEST(ReconstructProperty, RigidMotionEquivariance) {
  std::mt19937_64 rng(29);
  const RobotGeometry g(kD, kL, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = everbot::testing::random_feasible_chain(rng, g);
    const UnitOrientation r = everbot::testing::random_orientation(rng);
    const Vec3 t(0.3, -1.2, 0.7);
    std::vector<UnitOrientation> qr;
    for (const auto& x : q) qr.push_back(r * x);
    Pose base;
    base.position = t;
    const Polyline3 a = reconstruct_shape(q, g).band_positions();
    const Polyline3 b = reconstruct_shape(qr, g, base).band_positions();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((r.rotate(a[i]) + t - b[i]).norm(), 1e-9);
  }
}

TEST(RelativeRoll, Examples) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const UnitOrientation q = everbot::testing::random_orientation(rng);
    EXPECT_NEAR(relative_roll(q, q), 0.0, 1e-12);
    // twist about q's own heading by 30 degrees
    const UnitOrientation twisted = q * UnitOrientation::from_axis_angle(Vec3::UnitX(), deg_to_rad(30));
    EXPECT_NEAR(relative_roll(q, twisted), deg_to_rad(30), 1e-9);
    const UnitOrientation back = q * UnitOrientation::from_axis_angle(Vec3::UnitX(), deg_to_rad(-100));
    EXPECT_NEAR(relative_roll(q, back), deg_to_rad(-100), 1e-9);
    // pure swing: 90 degrees about an axis perpendicular to the heading
    const UnitOrientation swung = q * UnitOrientation::from_axis_angle(Vec3(0, std::cos(i), std::sin(i)), deg_to_rad(90));
    EXPECT_NEAR(relative_roll(q, swung), 0.0, 1e-9);
  }
}

TEST(RelativeRoll, SwingThenTwistRecoversTwist) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const UnitOrientation q = everbot::testing::random_orientation(rng);
    const double twist = u(rng);
    const UnitOrientation swing = UnitOrientation::from_axis_angle(Vec3(0, 1, u(rng)), 0.4 * std::abs(u(rng)));
    const UnitOrientation qj = q * swing * UnitOrientation::from_axis_angle(Vec3::UnitX(), twist);
    EXPECT_NEAR(relative_roll(q, qj), twist, 1e-9);
  }
}

TEST(RelativeRoll, AntiparallelThrows) {
  const UnitOrientation flipped = UnitOrientation::from_axis_angle(Vec3::UnitZ(), std::numbers::pi);
  EXPECT_THROW(relative_roll(UnitOrientation(), flipped), Error);
}
