#include "overtake/race_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "overtake/errors.hpp"
#include "overtake/rng.hpp"

namespace overtake {
namespace {

constexpr double kSlop = 1e-6;
constexpr double kCarContactSpeedScale = 0.7;
constexpr int kMaxResolveIterations = 64;

}  // namespace

void EnvConfig::validate() const {
  if (n_opponents < 0) throw ConfigError("n_opponents must be >= 0");
  if (!(initial_separation >= 0.0)) throw ConfigError("initial_separation must be >= 0");
  if (episode_steps <= 0) throw ConfigError("episode_steps must be > 0");
  if (std::abs(dt - 0.1) > 1e-12) throw ConfigError("dt is fixed at 0.1 s");
  if (!(opponent_speed_scale > 0.0)) throw ConfigError("opponent_speed_scale must be > 0");
  weights.validate();
  car.validate();
}

RewardKind parse_reward_kind(const std::string& text) {
  if (text == "racing") return RewardKind::racing;
  if (text == "overtaking") return RewardKind::overtaking;
  throw ConfigError("unknown reward kind '" + text + "' (expected racing|overtaking)");
}

CollisionMode parse_collision_mode(const std::string& text) {
  if (text == "resolve") return CollisionMode::resolve;
  if (text == "pass_through") return CollisionMode::pass_through;
  throw ConfigError("unknown collision mode '" + text + "' (expected resolve|pass_through)");
}

std::string to_string(RewardKind kind) { return kind == RewardKind::racing ? "racing" : "overtaking"; }
std::string to_string(CollisionMode mode) {
  return mode == CollisionMode::resolve ? "resolve" : "pass_through";
}

std::array<Vec2, 4> rect_corners(const OrientedRect& box) {
  const Vec2 ax = unit_from_angle(box.heading) * (0.5 * box.length);
  const Vec2 ay = perp_left(unit_from_angle(box.heading)) * (0.5 * box.width);
  return {box.center + ax + ay, box.center + ax - ay, box.center - ax - ay, box.center - ax + ay};
}

std::optional<Vec2> rect_overlap(const OrientedRect& a, const OrientedRect& b) {
  const Vec2 a_axes[2] = {unit_from_angle(a.heading), perp_left(unit_from_angle(a.heading))};
  const Vec2 b_axes[2] = {unit_from_angle(b.heading), perp_left(unit_from_angle(b.heading))};
  const double a_half[2] = {0.5 * a.length, 0.5 * a.width};
  const double b_half[2] = {0.5 * b.length, 0.5 * b.width};
  const Vec2 d = b.center - a.center;

  double best_overlap = std::numeric_limits<double>::infinity();
  Vec2 best_axis;
  for (const Vec2* axes : {a_axes, b_axes}) {
    for (int k = 0; k < 2; ++k) {
      const Vec2 axis = axes[k];
      const double ra = a_half[0] * std::abs(dot(a_axes[0], axis)) + a_half[1] * std::abs(dot(a_axes[1], axis));
      const double rb = b_half[0] * std::abs(dot(b_axes[0], axis)) + b_half[1] * std::abs(dot(b_axes[1], axis));
      const double dist = dot(d, axis);
      const double overlap = ra + rb - std::abs(dist);
      if (overlap <= 0.0) return std::nullopt;
      if (overlap < best_overlap) {
        best_overlap = overlap;
        best_axis = dist >= 0.0 ? axis : -axis;
      }
    }
  }
  return best_axis * best_overlap;
}

std::vector<CollisionFlags> detect_collisions(std::span<const VehicleState> cars,
                                              const TrackGeometry& track, const CarParams& params) {
  std::vector<CollisionFlags> flags(cars.size());
  for (std::size_t i = 0; i < cars.size(); ++i) {
    for (const Vec2& corner : rect_corners(cars[i].footprint(params))) {
      if (wall_distance(track, track.project(corner)) < 0.0) {
        flags[i].wall = 1;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < cars.size(); ++i) {
    for (std::size_t j = i + 1; j < cars.size(); ++j) {
      if (norm(cars[i].position - cars[j].position) > params.body_length + params.body_width) continue;
      if (rect_overlap(cars[i].footprint(params), cars[j].footprint(params))) {
        flags[i].car = 1;
        flags[j].car = 1;
      }
    }
  }
  return flags;
}

namespace {

// Pushes one car back inside the walls; returns true when it moved.
bool resolve_wall(VehicleState& car, const TrackGeometry& track, const CarParams& params) {
  auto worst_corner = [&](double& excess, TrackFrame& frame) {
    excess = 0.0;
    for (const Vec2& corner : rect_corners(car.footprint(params))) {
      const TrackFrame f = track.project(corner);
      const double e = -wall_distance(track, f);
      if (e > excess) {
        excess = e;
        frame = f;
      }
    }
  };

  double excess = 0.0;
  TrackFrame frame;
  worst_corner(excess, frame);
  if (excess <= 0.0) return false;

  const double outward = frame.lateral_offset >= 0.0 ? 1.0 : -1.0;
  const double rel = wrap_angle(car.heading - frame.tangent_heading);
  if (std::sin(rel) * outward > 0.0) {
    const double along = std::cos(rel);
    car.speed *= std::abs(along);
    car.heading = along >= 0.0 ? frame.tangent_heading : wrap_angle(frame.tangent_heading + std::numbers::pi);
    worst_corner(excess, frame);
    if (excess <= 0.0) return true;
  }
  const Vec2 inward = perp_left(unit_from_angle(frame.tangent_heading)) *
                      (frame.lateral_offset >= 0.0 ? -1.0 : 1.0);
  car.position += inward * (excess + kSlop);
  return true;
}

}  // namespace

void resolve_collision(std::span<VehicleState> cars, const TrackGeometry& track,
                       const CarParams& params, double dt) {
  std::vector<double> speed_before(cars.size());
  for (std::size_t i = 0; i < cars.size(); ++i) speed_before[i] = cars[i].speed;

  bool ego_hit = false;
  for (int iter = 0; iter < kMaxResolveIterations; ++iter) {
    bool moved = false;
    for (std::size_t i = 0; i < cars.size(); ++i) {
      for (std::size_t j = i + 1; j < cars.size(); ++j) {
        if (norm(cars[i].position - cars[j].position) > params.body_length + params.body_width) continue;
        const auto mtv = rect_overlap(cars[i].footprint(params), cars[j].footprint(params));
        if (!mtv) continue;
        const double len = norm(*mtv);
        const Vec2 dir = len > 0.0 ? *mtv * (1.0 / len) : Vec2{1.0, 0.0};
        const Vec2 half = dir * (0.5 * len + kSlop);
        cars[i].position -= half;
        cars[j].position += half;
        if (i == 0) ego_hit = true;
        moved = true;
      }
    }
    for (auto& car : cars) moved = resolve_wall(car, track, params) || moved;
    if (!moved) break;
  }
  if (ego_hit && !cars.empty()) cars[0].speed *= kCarContactSpeedScale;

  for (std::size_t i = 0; i < cars.size(); ++i) {
    const double change = cars[i].speed - speed_before[i];
    if (change != 0.0) {
      cars[i].body_velocity[0] = cars[i].speed;
      cars[i].body_acceleration[0] += change / dt;
    }
  }
}

RaceEnv::RaceEnv(EnvConfig config, std::shared_ptr<const TrackGeometry> track)
    : config_(std::move(config)), track_(std::move(track)) {
  require(track_ != nullptr, "RaceEnv: track is null");
  config_.validate();
}

StepResult RaceEnv::reset(std::uint64_t seed) {
  const double length = track_->total_length();
  const double span = config_.n_opponents * config_.initial_separation;
  if (config_.n_opponents > 0 && span >= length) {
    throw ConfigError("opponent layout spans " + std::to_string(span) + " m but the track is only " +
                      std::to_string(length) + " m long");
  }
  Rng rng(seed);
  const double ego_cp = rng.uniform(0.0, length);
  cars_.clear();
  unwrapped_.clear();
  cars_.push_back(spawn_on_track(*track_, ego_cp, config_.ego_spawn_speed_fraction * config_.car.top_speed));
  unwrapped_.push_back(0.0);
  for (int k = 1; k <= config_.n_opponents; ++k) {
    const double offset = k * config_.initial_separation;
    const double arc = track_->wrap(ego_cp + offset);
    const double speed = builtin_ai_target_speed(*track_, config_.car, arc, config_.opponent_speed_scale);
    cars_.push_back(spawn_on_track(*track_, arc, speed));
    unwrapped_.push_back(offset);
  }
  cp_.resize(cars_.size());
  for (std::size_t i = 0; i < cars_.size(); ++i) cp_[i] = track_->project(cars_[i].position).arc_length;
  ego_frame_ = track_->project(cars_[0].position);
  step_index_ = 0;
  done_ = false;

  StepInfo info;
  info.step_index = 0;
  for (std::size_t i = 0; i < cars_.size(); ++i) {
    info.cars.push_back({cp_[i], track_->project(cars_[i].position).lateral_offset, 0, 0});
    if (i > 0) info.opponent_delta.push_back(wrap_difference(length, cp_[0], cp_[i]));
  }
  return observe(0.0, info);
}

void RaceEnv::set_ego_state(const VehicleState& state) {
  const double before = cp_[0];
  cars_[0] = state;
  cp_[0] = track_->project(state.position).arc_length;
  unwrapped_[0] += wrap_difference(track_->total_length(), before, cp_[0]);
  ego_frame_ = track_->project(state.position);
}

StepResult RaceEnv::step(const Action& action) {
  require(!done_, "RaceEnv::step called on a finished episode; call reset first");
  const Action ego_action = clamp_action(action.steering, action.pedal);
  const double dt = config_.dt;

  std::vector<Action> actions(cars_.size());
  actions[0] = ego_action;
  for (std::size_t i = 1; i < cars_.size(); ++i) {
    actions[i] = builtin_ai_action(cars_[i], *track_, config_.car, config_.opponent_speed_scale);
  }
  for (std::size_t i = 0; i < cars_.size(); ++i) {
    cars_[i] = step_vehicle(cars_[i], actions[i], config_.car, dt);
  }

  const auto flags = detect_collisions(cars_, *track_, config_.car);
  const double impact_speed = cars_[0].speed;
  if (config_.collision_mode == CollisionMode::resolve) {
    resolve_collision(cars_, *track_, config_.car, dt);
  }
  for (std::size_t i = 0; i < cars_.size(); ++i) {
    cars_[i].wall_flag = flags[i].wall;
    cars_[i].car_flag = flags[i].car;
  }

  const std::vector<double> cp_prev = cp_;
  const double length = track_->total_length();
  StepInfo info;
  info.cars.resize(cars_.size());
  for (std::size_t i = 0; i < cars_.size(); ++i) {
    const TrackFrame frame = track_->project(cars_[i].position);
    if (i == 0) ego_frame_ = frame;
    cp_[i] = frame.arc_length;
    unwrapped_[i] += wrap_difference(length, cp_prev[i], cp_[i]);
    info.cars[i] = {cp_[i], frame.lateral_offset, flags[i].wall, flags[i].car};
    if (i > 0) info.opponent_delta.push_back(wrap_difference(length, cp_[0], cp_[i]));
  }
  info.progress = wrap_difference(length, cp_prev[0], cp_[0]);
  info.impact_speed = impact_speed;

  ++step_index_;
  info.step_index = step_index_;
  done_ = step_index_ >= config_.episode_steps;

  StepResult result = observe(compute_reward(cp_prev, impact_speed), info);
  result.done = done_;
  return result;
}

double RaceEnv::compute_reward(const std::vector<double>& cp_prev, double impact_speed) const {
  RewardInputs in;
  in.ego = {cp_prev[0], cp_[0]};
  in.speed = impact_speed;
  in.wall_contact = cars_[0].wall_flag;
  in.car_contact = cars_[0].car_flag;
  if (config_.reward_kind == RewardKind::racing) return racing_reward(in, config_.weights, *track_);
  for (std::size_t i = 1; i < cars_.size(); ++i) in.opponents.push_back({cp_prev[i], cp_[i]});
  return overtaking_reward(in, config_.weights, *track_);
}

StepResult RaceEnv::observe(double reward, const StepInfo& info) const {
  StepResult result;
  const std::span<const VehicleState> others(cars_.data() + 1, cars_.size() - 1);
  const LidarScan scan = cast_lidar(cars_[0], *track_, others, config_.car);
  result.raw = raw_features(cars_[0], scan, ego_frame_, *track_);
  if (stats_ != nullptr) {
    result.observation = normalize(result.raw, *stats_);
    result.normalized = true;
  }
  result.reward = reward;
  result.info = info;
  return result;
}

}  // namespace overtake
