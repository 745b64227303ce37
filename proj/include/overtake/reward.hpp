#pragma once

#include <span>
#include <vector>

#include "overtake/track.hpp"

namespace overtake {

struct RewardWeights {
  double wall = 0.005;       // c_w
  double car = 0.005;        // c_c
  double relative = 1.0;     // c_r
  double detection = 30.0;   // c_d, meters

  void validate() const;
};

struct ProgressPair {
  double prev = 0.0;
  double curr = 0.0;
};

struct RewardInputs {
  ProgressPair ego;
  double speed = 0.0;  // |v_t|
  int wall_contact = 0;
  int car_contact = 0;
  std::vector<ProgressPair> opponents;
};

// 1 iff |delta_cp| < detection_range (strict).
int gate(double delta_cp, double detection_range);

// Progress minus the speed-squared wall penalty.
double racing_reward(const RewardInputs& in, const RewardWeights& w, const TrackGeometry& track);

// Racing reward, car-contact penalty, and the gated relative-progress sum
// over opponents.
double overtaking_reward(const RewardInputs& in, const RewardWeights& w, const TrackGeometry& track);

// Only the gated relative-progress sum.
double relative_progress_term(const RewardInputs& in, const RewardWeights& w,
                              const TrackGeometry& track);

}  // namespace overtake
