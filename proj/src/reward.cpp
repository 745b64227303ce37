#include "overtake/reward.hpp"

#include <cmath>

#include "overtake/errors.hpp"

namespace overtake {

void RewardWeights::validate() const {
  if (!(wall >= 0.0) || !(car >= 0.0) || !(relative >= 0.0)) {
    throw ConfigError("reward weights c_w, c_c, c_r must be non-negative");
  }
  if (!(detection > 0.0)) throw ConfigError("reward detection range c_d must be positive");
}

int gate(double delta_cp, double detection_range) {
  return std::abs(delta_cp) < detection_range ? 1 : 0;
}

double racing_reward(const RewardInputs& in, const RewardWeights& w, const TrackGeometry& track) {
  const double progress = progress_delta(track, in.ego.prev, in.ego.curr);
  return progress - w.wall * in.wall_contact * in.speed * in.speed;
}

double relative_progress_term(const RewardInputs& in, const RewardWeights& w,
                              const TrackGeometry& track) {
  double sum = 0.0;
  for (const auto& opp : in.opponents) {
    const double delta_prev = progress_delta(track, in.ego.prev, opp.prev);
    const double delta_curr = progress_delta(track, in.ego.curr, opp.curr);
    if (gate(delta_curr, w.detection) == 1) sum += w.relative * (delta_prev - delta_curr);
  }
  return sum;
}

double overtaking_reward(const RewardInputs& in, const RewardWeights& w, const TrackGeometry& track) {
  return racing_reward(in, w, track) - w.car * in.car_contact * in.speed * in.speed +
         relative_progress_term(in, w, track);
}

}  // namespace overtake
