#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vmc/environment.hpp"

using namespace vmc;
using namespace vmc::env;
using vmc::test::Gen;

namespace {

// RPN1 with its leaves 1 m apart along x.
Scene bench() {
  Scene s;
  s.softening = 0.5;
  s.poses["RPN1-1"] = {Point(-0.5, 0, 1), Point::UnitZ()};
  s.poses["RPN1-2"] = {Point(0.5, 0, 1), Point::UnitZ()};
  s.lamps.push_back({"lamp", Point(-1.2, 0, 1), 0.0});
  return s;
}

double falloff(const Point& lamp, const Point& leaf, double intensity, double soft) {
  const double dx = lamp.x() - leaf.x(), dy = lamp.y() - leaf.y(), dz = lamp.z() - leaf.z();
  const double d2 = (dx * dx + dy * dy + dz * dz) / (soft * soft);
  return intensity / (1.0 + d2);
}

}  // namespace

TEST_CASE("darkness") {
  const Scene s = bench();
  Jitter jitter(42, kSensorJitterSigma);
  for (const char* leaf : {"RPN1-1", "RPN1-2"}) {
    CHECK(sample_sensors(s, leaf).light == 0.0);
    CHECK(sample_sensors(s, leaf, &jitter).light <= 0.05);
  }
}

TEST_CASE("uprightness mapping") {
  CHECK(uprightness(0) == 1.0);
  CHECK(uprightness(90) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(uprightness(150) == 0.0);
  CHECK(uprightness(60) == doctest::Approx(0.5));
  for (double a = 0; a < 180; a += 0.5) CHECK(uprightness(a + 0.5) <= uprightness(a));

  Scene s = bench();
  s = apply_event(s, SetTilt{"RPN1", 90});
  CHECK(sample_sensors(s, "RPN1-2").uprightness == doctest::Approx(0.0).epsilon(1e-12));
  s = apply_event(s, SetTilt{"RPN1", 150});
  CHECK(sample_sensors(s, "RPN1-1").uprightness == 0.0);
  CHECK(sample_sensors(s, "RPN1-2").uprightness == 0.0);
  // a leaf tilt overrides its module's
  s = apply_event(s, SetTilt{"RPN1-1", 0});
  CHECK(sample_sensors(s, "RPN1-1").uprightness == 1.0);
}

TEST_CASE("lamp left and shade right") {
  Scene s = bench();
  s = apply_event(s, MoveLamp{"lamp", std::nullopt, 1.5});
  s = apply_event(s, SetShade{"RPN1-2", 0.8});
  const auto left = sample_sensors(s, "RPN1-1");
  const auto right = sample_sensors(s, "RPN1-2");
  CHECK(left.light > right.light);
  const Point lamp(-1.2, 0, 1);
  CHECK(left.light == doctest::Approx(std::min(1.0, falloff(lamp, {-0.5, 0, 1}, 1.5, 0.5))));
  CHECK(right.light == doctest::Approx(0.2 * falloff(lamp, {0.5, 0, 1}, 1.5, 0.5)));
}

TEST_CASE("moving the lamp to the right flips the brighter leaf") {
  Scene s = bench();
  s.ambient = 0.3;
  s = apply_event(s, MoveLamp{"lamp", std::nullopt, 0.5});
  CHECK(sample_sensors(s, "RPN1-1").light > sample_sensors(s, "RPN1-2").light);
  s = apply_event(s, MoveLamp{"lamp", Point(1.2, 0, 1), std::nullopt});
  CHECK(sample_sensors(s, "RPN1-2").light > sample_sensors(s, "RPN1-1").light);
  CHECK(s.find_lamp("lamp")->intensity == 0.5);
}

TEST_CASE("events return a new scene and reject unknown entities") {
  Scene s = bench();
  s.ambient = 0.3;
  const Scene same = apply_event(s, SetAmbient{0.3});
  CHECK(same.ambient == s.ambient);
  CHECK(same.shades == s.shades);
  CHECK(same.tilts == s.tilts);
  CHECK(same.lamps.size() == s.lamps.size());

  const Scene shaded = apply_event(s, SetShade{"RPN1-1", 1.0});
  CHECK(s.shades.empty());
  CHECK(apply_event(shaded, RemoveShade{"RPN1-1"}).shades.empty());

  CHECK_THROWS_AS(apply_event(s, MoveLamp{"torch", Point(0, 0, 0), 1.0}), UnknownEntity);
  CHECK_THROWS_AS(apply_event(s, SetShade{"RPN7-1", 0.5}), UnknownEntity);
  CHECK_THROWS_AS(apply_event(s, SetTilt{"RPN7", 10}), UnknownEntity);
  CHECK_THROWS_AS(apply_event(s, SetTilt{"RPN1", 200}), std::invalid_argument);
  CHECK_THROWS_AS(apply_event(s, SetAmbient{1.5}), std::invalid_argument);
  CHECK_THROWS_AS(apply_event(s, SetShade{"RPN1-1", -0.2}), std::invalid_argument);
  CHECK_THROWS_AS(sample_sensors(s, "RPN9-1"), std::out_of_range);
  CHECK(describe(SceneEvent{SetTilt{"RPN5", 75}}).find("RPN5") != std::string::npos);
}

TEST_CASE("random scenes: intensity monotonicity, shade locality, purity") {
  Gen gen(31);
  for (int trial = 0; trial < 500; ++trial) {
    Scene s;
    s.ambient = gen.unit() * 0.5;
    s.softening = gen.range(0.2, 2.0);
    const int leaves = gen.integer(2, 8);
    for (int i = 0; i < leaves; ++i) {
      const Point dir = Point(gen.range(-1, 1), gen.range(-1, 1), gen.range(0.1, 1)).normalized();
      s.poses["M" + std::to_string(i / 2) + "-" + std::to_string(1 + i % 2)] = {
          Point(gen.range(-2, 2), gen.range(-2, 2), gen.range(0, 2)), dir};
    }
    for (int l = 0; l < gen.integer(1, 3); ++l) {
      s.lamps.push_back({"L" + std::to_string(l),
                         Point(gen.range(-2, 2), gen.range(-2, 2), gen.range(0, 3)),
                         gen.unit()});
    }
    s.validate();

    const auto& lamp = s.lamps[static_cast<std::size_t>(gen.integer(0, int(s.lamps.size()) - 1))];
    const Scene brighter =
        apply_event(s, MoveLamp{lamp.lamp_id, std::nullopt, lamp.intensity + gen.unit()});
    const auto target = std::next(s.poses.begin(), gen.integer(0, leaves - 1))->first;
    const Scene shaded = apply_event(s, SetShade{target, gen.unit()});

    for (const auto& [leaf, pose] : s.poses) {
      const auto base = sample_sensors(s, leaf);
      CHECK(sample_sensors(brighter, leaf).light >= base.light);
      if (leaf != target) {
        CHECK(sample_sensors(shaded, leaf) == base);
      } else {
        CHECK(sample_sensors(shaded, leaf).light <= base.light);
      }
      CHECK(sample_sensors(s, leaf) == sample_sensors(s, pose, leaf));
      Jitter off;
      CHECK(sample_sensors(s, leaf, &off) == base);
    }
  }
}

TEST_CASE("seeded jitter is reproducible and stays in range") {
  Scene s = bench();
  s.ambient = 0.999;
  Jitter a(7, 0.05), b(7, 0.05);
  for (int i = 0; i < 200; ++i) {
    const auto fa = sample_sensors(s, "RPN1-1", &a);
    const auto fb = sample_sensors(s, "RPN1-1", &b);
    CHECK(fa == fb);
    CHECK(fa.light <= 1.0);
    CHECK(fa.uprightness <= 1.0);
    CHECK(fa.uprightness >= 0.0);
  }
}

TEST_CASE("scene validation") {
  Scene s = bench();
  CHECK_NOTHROW(s.validate());
  s.softening = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = bench();
  s.poses["RPN1-1"].orientation = Point(0, 0, 2);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(bench().knows_target("RPN1"));
  CHECK(bench().knows_target("RPN1-2"));
  CHECK_FALSE(bench().knows_target("RPN2"));
}
