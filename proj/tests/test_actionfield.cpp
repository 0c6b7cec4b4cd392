#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/actionfield.hpp"
#include "core/rng.hpp"

using namespace afw;

TEST_CASE("distance law fixed points") {
  DistanceLaw law;
  CHECK(decode_distance(0.0, law) == doctest::Approx(16.25).epsilon(1e-12));
  CHECK(law.min_px() == doctest::Approx(2.5));
  CHECK(law.max_px() == doctest::Approx(30.0));
  // Saturation pins to the bounds (sigmoid rounds to 0/1 in double there).
  CHECK(decode_distance(-40.0, law) >= 2.5);
  CHECK(decode_distance(-40.0, law) == doctest::Approx(2.5).epsilon(1e-9));
  CHECK(decode_distance(40.0, law) <= 30.0);
  CHECK(decode_distance(40.0, law) == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("distance law bounds over 1e5 raw draws") {
  DistanceLaw law;
  Rng rng(7, 1);
  for (int i = 0; i < 100000; ++i) {
    double raw = rng.uniform(-50.0, 50.0);
    double d = decode_distance(raw, law);
    CHECK(d >= law.min_px());
    CHECK(d <= law.max_px());
  }
}

TEST_CASE("distance law strict monotonicity") {
  DistanceLaw law;
  Rng rng(8, 1);
  for (int i = 0; i < 2000; ++i) {
    double a = rng.uniform(-30.0, 30.0);
    double b = a + rng.uniform(1e-6, 1.0);
    CHECK(decode_distance(a, law) < decode_distance(b, law));
  }
}

TEST_CASE("distance law validation") {
  DistanceLaw bad;
  bad.d_b = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = DistanceLaw{};
  bad.d_scale = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = DistanceLaw{};
  bad.d_offset = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("angle codec round trip") {
  Rng rng(9, 1);
  for (int i = 0; i < 500; ++i) {
    double theta = rng.uniform(-M_PI, M_PI);
    double r = rng.uniform(0.05, 1.0);  // decode ignores magnitude
    double got = decode_angle(r * std::sin(theta), r * std::cos(theta));
    double diff = std::abs(wrap_angle(got - theta));
    CHECK(diff < 1e-9);
  }
}

TEST_CASE("angle codec degenerate pair") {
  CHECK(angle_pair_degenerate(0.0, 0.0));
  CHECK(angle_pair_degenerate(1e-7, -1e-7));
  CHECK_FALSE(angle_pair_degenerate(1e-5, 0.0));
  CHECK_THROWS_AS(decode_angle(0.0, 0.0), DegenerateAngleError);
}

TEST_CASE("angle codec folds +pi onto -pi") {
  // sin=0, cos=-1 is the boundary direction; the convention is [-pi, pi).
  CHECK(decode_angle(0.0, -1.0) == doctest::Approx(-M_PI));
  CHECK(decode_angle(0.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("build_field composes distance and direction without normalizing") {
  DistanceLaw law;
  ActionMaps maps;
  maps.score = RealPlane(2, 2, 0.0);
  maps.sin_theta = RealPlane(2, 2, 0.0);
  maps.cos_theta = RealPlane(2, 2, 0.0);
  maps.dist_raw = RealPlane(2, 2, 0.0);
  maps.sin_theta.at(0, 0) = 0.6;
  maps.cos_theta.at(0, 0) = 0.8;  // unit pair
  maps.sin_theta.at(0, 1) = 0.3;
  maps.cos_theta.at(0, 1) = 0.4;  // same direction, half magnitude
  maps.dist_raw.at(0, 0) = 0.0;
  maps.dist_raw.at(0, 1) = 0.0;

  DisplacementField f = build_field(maps, law);
  CHECK(f.dx.at(0, 0) == doctest::Approx(16.25 * 0.8).epsilon(1e-12));
  CHECK(f.dy.at(0, 0) == doctest::Approx(16.25 * 0.6).epsilon(1e-12));
  // Off-unit pairs shrink the displacement; nothing renormalizes them.
  CHECK(f.dx.at(0, 1) == doctest::Approx(16.25 * 0.4).epsilon(1e-12));
  CHECK(f.dy.at(0, 1) == doctest::Approx(16.25 * 0.3).epsilon(1e-12));
}

namespace {

ActionMaps uniform_maps(int rows, int cols, double score, double s, double c, double raw) {
  ActionMaps maps;
  maps.score = RealPlane(rows, cols, score);
  maps.sin_theta = RealPlane(rows, cols, s);
  maps.cos_theta = RealPlane(rows, cols, c);
  maps.dist_raw = RealPlane(rows, cols, raw);
  return maps;
}

}  // namespace

TEST_CASE("select_action picks the masked argmax") {
  DistanceLaw law;
  ActionMaps maps = uniform_maps(4, 4, 0.0, 0.6, 0.8, 0.0);
  maps.score.at(1, 2) = 2.0;
  maps.score.at(3, 3) = 5.0;  // higher but outside the mask
  MaskPlane mask(4, 4, 0);
  mask.at(1, 2) = 1;
  mask.at(2, 1) = 1;

  PullAction a = select_action(maps, mask, law);
  CHECK(a.x == 2.0);
  CHECK(a.y == 1.0);
  CHECK(a.theta == doctest::Approx(std::atan2(0.6, 0.8)));
  CHECK(a.d == doctest::Approx(16.25));
}

TEST_CASE("select_action breaks ties at the smallest row-major index") {
  DistanceLaw law;
  ActionMaps maps = uniform_maps(3, 3, 1.0, 0.0, 1.0, 0.0);
  MaskPlane mask(3, 3, 1);
  PullAction a = select_action(maps, mask, law);
  CHECK(a.x == 0.0);
  CHECK(a.y == 0.0);
}

TEST_CASE("select_action skips degenerate direction pixels") {
  DistanceLaw law;
  ActionMaps maps = uniform_maps(3, 3, 0.0, 0.0, 0.0, 0.0);  // all degenerate
  maps.score.at(0, 0) = 9.0;
  maps.score.at(2, 2) = 1.0;
  maps.sin_theta.at(2, 2) = 1.0;  // only usable pixel
  MaskPlane mask(3, 3, 1);

  PullAction a = select_action(maps, mask, law);
  CHECK(a.x == 2.0);
  CHECK(a.y == 2.0);

  MaskPlane only_degenerate(3, 3, 0);
  only_degenerate.at(0, 0) = 1;
  CHECK_THROWS_AS(select_action(maps, only_degenerate, law), NoActionError);
}

TEST_CASE("select_action on an empty mask") {
  DistanceLaw law;
  ActionMaps maps = uniform_maps(3, 3, 1.0, 0.6, 0.8, 0.0);
  MaskPlane mask(3, 3, 0);
  CHECK_THROWS_AS(select_action(maps, mask, law), NoActionError);
}

TEST_CASE("select_action rejects mismatched shapes") {
  DistanceLaw law;
  ActionMaps maps = uniform_maps(3, 3, 1.0, 0.6, 0.8, 0.0);
  MaskPlane mask(4, 3, 1);
  CHECK_THROWS_AS(select_action(maps, mask, law), ContractError);
}
