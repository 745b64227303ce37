#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "overtake/errors.hpp"
#include "overtake/race_env.hpp"
#include "overtake/rng.hpp"
#include "test_support.hpp"

namespace overtake {
namespace {

std::shared_ptr<const TrackGeometry> oval() { return test::shared(bundled_track("oval")); }

TEST(RaceEnvLayout, NoOpponentsIsSingleCar) {
  EnvConfig cfg;
  RaceEnv env(cfg, oval());
  env.reset(1);
  EXPECT_EQ(env.cars().size(), 1u);
  EXPECT_TRUE(env.reset(1).info.opponent_delta.empty());
}

TEST(RaceEnvLayout, SettingAOffsets) {
  EnvConfig cfg;
  cfg.n_opponents = 5;
  cfg.initial_separation = 50.0;
  RaceEnv env(cfg, oval());
  const StepResult r = env.reset(17);
  ASSERT_EQ(r.info.opponent_delta.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(r.info.opponent_delta[k], 50.0 * (k + 1), 1e-6);
    EXPECT_EQ(env.unwrapped_progress()[k + 1], 50.0 * (k + 1));
  }
}

TEST(RaceEnvLayout, StageTwoOffset) {
  EnvConfig cfg;
  cfg.n_opponents = 1;
  cfg.initial_separation = 200.0;
  RaceEnv env(cfg, oval());
  EXPECT_NEAR(env.reset(3).info.opponent_delta.at(0), 200.0, 1e-6);
}

TEST(RaceEnvLayout, LayoutLongerThanTrackIsRejected) {
  EnvConfig cfg;
  cfg.n_opponents = 5;
  cfg.initial_separation = 400.0;
  RaceEnv env(cfg, oval());
  EXPECT_THROW(env.reset(0), ConfigError);
}

TEST(RaceEnvStep, FullThrottleTelescopes) {
  EnvConfig cfg;
  RaceEnv env(cfg, oval());
  env.reset(5);
  double sum = 0.0;
  const double start = env.unwrapped_progress()[0];
  for (int i = 0; i < 100; ++i) {
    // Steering from the built-in controller keeps the car off the walls.
    Action a = builtin_ai_action(env.ego(), env.track(), cfg.car, 0.8);
    a.pedal = std::min(a.pedal, 1.0);
    const StepResult r = env.step(a);
    ASSERT_EQ(r.info.cars[0].wall_flag, 0);
    sum += r.reward;
  }
  EXPECT_NEAR(sum, env.unwrapped_progress()[0] - start, 1e-9);
}

TEST(RaceEnvStep, WallContactSetsFlagAndPenalty) {
  EnvConfig cfg;
  cfg.weights.wall = 0.005;
  RaceEnv env(cfg, oval());
  env.reset(2);
  bool hit = false;
  for (int i = 0; i < 60 && !hit; ++i) {
    const StepResult r = env.step({kMaxSteering, 1.0});
    if (r.info.cars[0].wall_flag == 1) {
      hit = true;
      EXPECT_EQ(r.raw[obs::kWallFlag], 1.0);
      const double v = r.info.impact_speed;
      EXPECT_NEAR(r.reward, r.info.progress - 0.005 * v * v, 1e-12);
    }
  }
  EXPECT_TRUE(hit);
}

TEST(RaceEnvStep, ZeroActionFromRest) {
  EnvConfig cfg;
  cfg.ego_spawn_speed_fraction = 0.0;
  RaceEnv env(cfg, oval());
  env.reset(8);
  double total = 0.0;
  int contacts = 0;
  while (!env.done()) {
    const StepResult r = env.step({0.0, 0.0});
    total += r.reward;
    contacts += r.info.cars[0].wall_flag + r.info.cars[0].car_flag;
  }
  EXPECT_EQ(total, 0.0);
  EXPECT_EQ(contacts, 0);
}

TEST(RaceEnvStep, EpisodeLengthAndStepAfterDone) {
  EnvConfig cfg;
  RaceEnv env(cfg, oval());
  env.reset(4);
  int steps = 0;
  StepResult r;
  do {
    r = env.step({0.0, 0.2});
    ++steps;
  } while (!r.done);
  EXPECT_EQ(steps, 1000);
  EXPECT_FALSE(r.terminated);
  EXPECT_THROW(env.step({0.0, 0.0}), ContractViolation);
}

TEST(RaceEnvStep, DeterministicStreams) {
  EnvConfig cfg;
  cfg.n_opponents = 3;
  cfg.initial_separation = 30.0;
  cfg.reward_kind = RewardKind::overtaking;
  RaceEnv a(cfg, oval()), b(cfg, oval());
  Rng ra(1), rb(1);
  a.reset(77);
  b.reset(77);
  for (int i = 0; i < 300; ++i) {
    const Action act{ra.uniform(-0.5, 0.5), ra.uniform(-1, 1)};
    const Action act_b{rb.uniform(-0.5, 0.5), rb.uniform(-1, 1)};
    const StepResult x = a.step(act), y = b.step(act_b);
    ASSERT_EQ(std::memcmp(x.raw.data(), y.raw.data(), sizeof(double) * x.raw.size()), 0);
    ASSERT_EQ(x.reward, y.reward);
  }
}

TEST(RaceEnvStep, ObservationNormalizedWhenStatsAttached) {
  EnvConfig cfg;
  RaceEnv env(cfg, oval());
  std::vector<double> mean(kZScoredCount, 0.0), sd(kZScoredCount, 2.0);
  const NormStats stats = NormStats::from_moments(mean, sd, 1);
  EXPECT_FALSE(env.reset(1).normalized);
  env.set_stats(&stats);
  const StepResult r = env.step({0.0, 0.5});
  EXPECT_TRUE(r.normalized);
  EXPECT_EQ(r.observation.size(), kObservationSize);
  EXPECT_FLOAT_EQ(r.observation[obs::kVelocity], static_cast<float>(r.raw[obs::kVelocity] / 2.0));
}

TEST(Collisions, FarApartAndIdentical) {
  const auto track = bundled_track("oval");
  CarParams p;
  const VehicleState a = spawn_on_track(track, 50.0, 10.0);
  const VehicleState b = spawn_on_track(track, 60.0, 10.0);
  const VehicleState apart[2] = {a, b};
  auto f = detect_collisions(apart, track, p);
  EXPECT_EQ(f[0].car + f[1].car + f[0].wall + f[1].wall, 0);
  const VehicleState same[2] = {a, a};
  f = detect_collisions(same, track, p);
  EXPECT_EQ(f[0].car, 1);
  EXPECT_EQ(f[1].car, 1);
}

TEST(Collisions, CarOnWallLine) {
  const auto track = bundled_track("oval");
  CarParams p;
  const VehicleState cars[1] = {spawn_on_track(track, 50.0, 10.0, track.half_width())};
  EXPECT_EQ(detect_collisions(cars, track, p)[0].wall, 1);
  // Corners reach half_width exactly when offset by half_width - width/2.
  const VehicleState inside[1] = {spawn_on_track(track, 50.0, 10.0, track.half_width() - 0.5 * p.body_width - 1e-6)};
  EXPECT_EQ(detect_collisions(inside, track, p)[0].wall, 0);
}

TEST(Collisions, HeadOnWallApproach) {
  const auto track = bundled_track("oval");
  CarParams p;
  VehicleState s = spawn_on_track(track, 50.0, 20.0);
  s.heading += std::numbers::pi / 2;  // facing the left wall
  for (int i = 0; i < 5; ++i) {
    s = step_vehicle(s, {0.0, 0.0}, p, 0.1);
    VehicleState cars[1] = {s};
    resolve_collision(cars, track, p, 0.1);
    s = cars[0];
    for (const Vec2& c : rect_corners(s.footprint(p))) {
      EXPECT_GE(wall_distance(track, track.project(c)), -1e-9);
    }
  }
  EXPECT_LT(s.speed, 20.0);
}

TEST(Collisions, NonOverlappingUnchanged) {
  const auto track = bundled_track("oval");
  CarParams p;
  VehicleState cars[2] = {spawn_on_track(track, 50.0, 10.0), spawn_on_track(track, 70.0, 12.0)};
  const VehicleState before[2] = {cars[0], cars[1]};
  resolve_collision(cars, track, p, 0.1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(cars[i].position, before[i].position);
    EXPECT_EQ(cars[i].speed, before[i].speed);
    EXPECT_EQ(cars[i].heading, before[i].heading);
  }
}

TEST(Collisions, SymmetricSideBySide) {
  const auto track = bundled_track("oval");
  CarParams p;
  VehicleState cars[2] = {spawn_on_track(track, 100.0, 10.0, 0.5), spawn_on_track(track, 100.0, 10.0, -0.5)};
  const Vec2 a0 = cars[0].position, b0 = cars[1].position;
  resolve_collision(cars, track, p, 0.1);
  const Vec2 da = cars[0].position - a0, db = cars[1].position - b0;
  EXPECT_NEAR(da.x, -db.x, 1e-9);
  EXPECT_NEAR(da.y, -db.y, 1e-9);
  EXPECT_GT(norm(da), 0.0);
  EXPECT_FALSE(rect_overlap(cars[0].footprint(p), cars[1].footprint(p)).has_value());
  EXPECT_NEAR(cars[0].speed, 7.0, 1e-12);
  EXPECT_EQ(cars[1].speed, 10.0);
}

TEST(Collisions, NoInterpenetrationAfterResolve) {
  const auto track = bundled_track("hairpin");
  CarParams p;
  Rng rng(12);
  for (int trial = 0; trial < 10000; ++trial) {
    const double s = rng.uniform(0.0, track.total_length());
    const int n = 2 + static_cast<int>(rng.index(2));
    std::vector<VehicleState> cars;
    for (int k = 0; k < n; ++k) {
      VehicleState c = spawn_on_track(track, s + rng.uniform(-3.0, 3.0), rng.uniform(0.0, 40.0),
                                      rng.uniform(-5.0, 5.0));
      c.heading += rng.uniform(-0.6, 0.6);
      cars.push_back(c);
    }
    resolve_collision(cars, track, p, 0.1);
    for (int i = 0; i < n; ++i) {
      for (const Vec2& c : rect_corners(cars[i].footprint(p))) {
        ASSERT_GE(wall_distance(track, track.project(c)), -1e-6) << trial;
      }
      for (int j = i + 1; j < n; ++j) {
        const auto mtv = rect_overlap(cars[i].footprint(p), cars[j].footprint(p));
        ASSERT_TRUE(!mtv || norm(*mtv) < 1e-6) << trial;
      }
    }
  }
}

TEST(EnvConfigTest, ParsesAndValidates) {
  EXPECT_EQ(parse_reward_kind("racing"), RewardKind::racing);
  EXPECT_EQ(parse_reward_kind("overtaking"), RewardKind::overtaking);
  EXPECT_THROW(parse_reward_kind("drifting"), ConfigError);
  EXPECT_EQ(parse_collision_mode("pass_through"), CollisionMode::pass_through);
  EXPECT_THROW(parse_collision_mode("bounce"), ConfigError);
  EnvConfig cfg;
  cfg.dt = 0.05;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace overtake
