#pragma once

#include <array>
#include <numbers>

#include "overtake/geometry.hpp"
#include "overtake/track.hpp"

namespace overtake {

inline constexpr double kMaxSteering = std::numbers::pi / 6.0;

struct Action {
  double steering = 0.0;  // radians, [-pi/6, pi/6], positive turns left
  double pedal = 0.0;     // [-1, 1]; > 0 throttle, < 0 brake
};

struct CarParams {
  double wheelbase = 2.5;
  double max_accel = 6.0;
  double max_brake_decel = 10.0;
  double top_speed = 55.0;
  double drag_coeff = 6.0 / (55.0 * 55.0);  // max_accel / top_speed^2
  double body_length = 4.2;
  double body_width = 1.8;

  // Keeps drag consistent with the top speed: max_accel = drag * top_speed^2.
  static CarParams with(double wheelbase, double max_accel, double max_brake_decel,
                        double top_speed, double body_length, double body_width);
  void validate() const;
};

struct VehicleState {
  Vec2 position;
  double heading = 0.0;
  std::array<double, 3> body_velocity{};      // longitudinal, lateral, vertical
  std::array<double, 3> body_acceleration{};  // finite difference of body_velocity
  double speed = 0.0;
  double prev_steering = 0.0;
  int wall_flag = 0;
  int car_flag = 0;

  OrientedRect footprint(const CarParams& params) const {
    return {position, heading, params.body_length, params.body_width};
  }
};

// Places a car on the centerline at the given arc length, heading along the
// tangent, moving at speed.
VehicleState spawn_on_track(const TrackGeometry& track, double arc_length, double speed,
                            double lateral_offset = 0.0);

// Kinematic bicycle step with quadratic drag. Semi-implicit Euler: speed and
// heading are updated first, then the position advances at the new speed.
// Throws ContractViolation on non-finite input or dt <= 0.
VehicleState step_vehicle(const VehicleState& state, const Action& action, const CarParams& params,
                          double dt);

// Component-wise clamp into the action box. NaN is a contract violation.
Action clamp_action(double steering, double pedal);

struct BuiltinAiTuning {
  double lateral_accel_limit = 6.0;  // m/s^2
  double min_lookahead = 5.0;        // m
  double lookahead_time = 0.5;       // s
  double speed_gain = 0.5;           // pedal per m/s of speed error
};

// Curvature-limited cruising speed the built-in AI aims for at an arc length.
double builtin_ai_target_speed(const TrackGeometry& track, const CarParams& params,
                               double arc_length, double target_speed_scale,
                               const BuiltinAiTuning& tuning = {});

// Pure-pursuit steering toward a centerline lookahead point plus a
// proportional speed controller.
Action builtin_ai_action(const VehicleState& state, const TrackGeometry& track,
                         const CarParams& params, double target_speed_scale,
                         const BuiltinAiTuning& tuning = {});

}  // namespace overtake
