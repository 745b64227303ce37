#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "overtake/reward.hpp"
#include "overtake/sensing.hpp"
#include "overtake/track.hpp"
#include "overtake/vehicle.hpp"

namespace overtake {

enum class RewardKind { racing, overtaking };
enum class CollisionMode { resolve, pass_through };

struct EnvConfig {
  std::string track_id = "oval";
  int n_opponents = 0;
  double initial_separation = 200.0;  // consecutive gap between cars, meters
  int episode_steps = 1000;
  double dt = 0.1;
  RewardKind reward_kind = RewardKind::racing;
  RewardWeights weights;
  CollisionMode collision_mode = CollisionMode::resolve;
  double opponent_speed_scale = 0.9;
  double ego_spawn_speed_fraction = 0.5;
  CarParams car;

  void validate() const;
};

struct CarStepInfo {
  double cp = 0.0;
  double lateral_offset = 0.0;
  int wall_flag = 0;
  int car_flag = 0;
};

struct StepInfo {
  int step_index = 0;
  std::vector<CarStepInfo> cars;       // ego first
  std::vector<double> opponent_delta;  // wrap-aware cp(opponent) - cp(ego)
  double progress = 0.0;               // wrap-aware ego progress this step
  double impact_speed = 0.0;           // ego speed before contact resolution
};

struct StepResult {
  Observation observation{};  // valid when normalized is true
  RawObservation raw{};
  bool normalized = false;
  double reward = 0.0;
  bool done = false;        // horizon reached
  bool terminated = false;  // true terminal state (never set by this environment)
  StepInfo info;
};

struct CollisionFlags {
  int wall = 0;
  int car = 0;
};

// Per-car contact flags: wall contact when any corner lies beyond the wall,
// car contact when rectangles overlap (separating-axis test).
std::vector<CollisionFlags> detect_collisions(std::span<const VehicleState> cars,
                                              const TrackGeometry& track, const CarParams& params);

// Separating-axis overlap test. When the boxes overlap, returns the minimum
// translation vector that moves b out of a.
std::optional<Vec2> rect_overlap(const OrientedRect& a, const OrientedRect& b);

std::array<Vec2, 4> rect_corners(const OrientedRect& box);

// De-penetrates cars from each other and from the walls in place. Car 0 is
// the ego; its speed is scaled by 0.7 on car contact. Wall contact pushes the
// car back inside and removes its outward velocity component.
void resolve_collision(std::span<VehicleState> cars, const TrackGeometry& track,
                       const CarParams& params, double dt);

// Episode driver at a fixed 10 Hz. Owns its cars; shares the track read-only.
class RaceEnv {
 public:
  RaceEnv(EnvConfig config, std::shared_ptr<const TrackGeometry> track);

  // Observations stay unnormalized until stats are attached. The stats object
  // must be frozen and outlive the environment.
  void set_stats(const NormStats* stats) { stats_ = stats; }

  StepResult reset(std::uint64_t seed);
  StepResult step(const Action& action);

  const EnvConfig& config() const { return config_; }
  const TrackGeometry& track() const { return *track_; }
  std::shared_ptr<const TrackGeometry> track_ptr() const { return track_; }
  std::span<const VehicleState> cars() const { return cars_; }
  const VehicleState& ego() const { return cars_.front(); }
  std::span<const double> cp() const { return cp_; }
  // Continuous progress per car since reset, starting from its spawn offset
  // relative to the ego's spawn point.
  std::span<const double> unwrapped_progress() const { return unwrapped_; }
  int step_index() const { return step_index_; }
  bool done() const { return done_; }

  // Overwrites the ego state (scripted tests). The progress accounting
  // follows the wrap-aware jump.
  void set_ego_state(const VehicleState& state);

 private:
  StepResult observe(double reward, const StepInfo& info) const;
  double compute_reward(const std::vector<double>& cp_prev, double impact_speed) const;

  EnvConfig config_;
  std::shared_ptr<const TrackGeometry> track_;
  const NormStats* stats_ = nullptr;
  std::vector<VehicleState> cars_;
  std::vector<double> cp_;
  std::vector<double> unwrapped_;
  TrackFrame ego_frame_;
  int step_index_ = 0;
  bool done_ = true;
};

RewardKind parse_reward_kind(const std::string& text);
CollisionMode parse_collision_mode(const std::string& text);
std::string to_string(RewardKind kind);
std::string to_string(CollisionMode mode);

}  // namespace overtake
