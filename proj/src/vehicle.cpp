#include "overtake/vehicle.hpp"

#include <algorithm>
#include <cmath>

#include "overtake/errors.hpp"

namespace overtake {

CarParams CarParams::with(double wheelbase, double max_accel, double max_brake_decel,
                          double top_speed, double body_length, double body_width) {
  CarParams p;
  p.wheelbase = wheelbase;
  p.max_accel = max_accel;
  p.max_brake_decel = max_brake_decel;
  p.top_speed = top_speed;
  p.drag_coeff = max_accel / (top_speed * top_speed);
  p.body_length = body_length;
  p.body_width = body_width;
  p.validate();
  return p;
}

void CarParams::validate() const {
  for (double v : {wheelbase, max_accel, max_brake_decel, top_speed, drag_coeff, body_length, body_width}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("car parameters must be positive and finite");
  }
  if (std::abs(max_accel - drag_coeff * top_speed * top_speed) > 1e-9 * max_accel) {
    throw ConfigError("car parameters: drag_coeff must equal max_accel / top_speed^2");
  }
}

VehicleState spawn_on_track(const TrackGeometry& track, double arc_length, double speed,
                            double lateral_offset) {
  VehicleState s;
  const double heading = track.heading_at(arc_length);
  s.position = track.point_at(arc_length) + perp_left(unit_from_angle(heading)) * lateral_offset;
  s.heading = heading;
  s.speed = speed;
  s.body_velocity = {speed, 0.0, 0.0};
  return s;
}

VehicleState step_vehicle(const VehicleState& state, const Action& action, const CarParams& params,
                          double dt) {
  require(dt > 0.0 && std::isfinite(dt), "step_vehicle: dt must be positive");
  require(std::isfinite(state.position.x) && std::isfinite(state.position.y) &&
              std::isfinite(state.heading) && std::isfinite(state.speed),
          "step_vehicle: non-finite state");
  require(std::isfinite(action.steering) && std::isfinite(action.pedal),
          "step_vehicle: non-finite action");

  const double drag = params.drag_coeff * state.speed * state.speed;
  const double accel = action.pedal >= 0.0 ? action.pedal * params.max_accel - drag
                                           : action.pedal * params.max_brake_decel - drag;

  VehicleState next = state;
  next.speed = std::clamp(state.speed + accel * dt, 0.0, params.top_speed);
  if (action.steering != 0.0) {
    next.heading = wrap_angle(state.heading + next.speed * std::tan(action.steering) / params.wheelbase * dt);
  }
  next.position = state.position + unit_from_angle(next.heading) * (next.speed * dt);
  next.body_velocity = {next.speed, 0.0, 0.0};
  for (std::size_t k = 0; k < 3; ++k) {
    next.body_acceleration[k] = (next.body_velocity[k] - state.body_velocity[k]) / dt;
  }
  next.prev_steering = action.steering;
  next.wall_flag = 0;
  next.car_flag = 0;
  return next;
}

Action clamp_action(double steering, double pedal) {
  require(!std::isnan(steering) && !std::isnan(pedal), "clamp_action: NaN action component");
  return {std::clamp(steering, -kMaxSteering, kMaxSteering), std::clamp(pedal, -1.0, 1.0)};
}

double builtin_ai_target_speed(const TrackGeometry& track, const CarParams& params,
                               double arc_length, double target_speed_scale,
                               const BuiltinAiTuning& tuning) {
  const double curvature = std::max(std::abs(track.curvature_at(arc_length)), 1e-6);
  return target_speed_scale *
         std::min(params.top_speed, std::sqrt(tuning.lateral_accel_limit / curvature));
}

Action builtin_ai_action(const VehicleState& state, const TrackGeometry& track,
                         const CarParams& params, double target_speed_scale,
                         const BuiltinAiTuning& tuning) {
  const TrackFrame frame = track.project(state.position);
  const double lookahead = std::max(tuning.min_lookahead, tuning.lookahead_time * state.speed);
  const double target_arc = frame.arc_length + lookahead;
  const Vec2 to_target = track.point_at(target_arc) - state.position;
  const double dist = std::max(norm(to_target), 1e-6);
  const double alpha = wrap_angle(std::atan2(to_target.y, to_target.x) - state.heading);
  const double steering = std::atan(2.0 * params.wheelbase * std::sin(alpha) / dist);

  const double target_speed =
      builtin_ai_target_speed(track, params, target_arc, target_speed_scale, tuning);
  const double pedal = tuning.speed_gain * (target_speed - state.speed);
  return clamp_action(steering, pedal);
}

}  // namespace overtake
