#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "overtake/rng.hpp"

namespace overtake {

// One environment transition with observation/action widths fixed by the
// buffer that stores it.
struct Transition {
  std::vector<float> observation;
  std::vector<float> action;  // normalized to [-1, 1]
  float reward = 0.0f;
  std::vector<float> next_observation;
  bool done = false;  // true terminal; time-limit truncation is not terminal
};

struct TransitionBatch {
  Eigen::MatrixXf observation;       // obs_dim x n
  Eigen::MatrixXf action;            // act_dim x n
  Eigen::RowVectorXf reward;         // 1 x n
  Eigen::MatrixXf next_observation;  // obs_dim x n
  Eigen::RowVectorXf done;           // 1 x n
};

// Fixed-capacity FIFO store with uniform sampling with replacement. Storage
// is flat and grows lazily up to capacity. Not internally synchronized: the
// learner thread is the only writer and reader.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int observation_dim, int action_dim);

  void push(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int observation_dim() const { return obs_dim_; }
  int action_dim() const { return act_dim_; }

  // i-th oldest stored transition.
  Transition at(std::size_t i) const;

  // n uniform draws with replacement. Throws when empty.
  TransitionBatch sample(std::size_t n, Rng& rng) const;
  // Raw indices (oldest-first order) drawn the same way as sample().
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t slot(std::size_t i) const { return (start_ + i) % capacity_; }
  void ensure_storage(std::size_t slots);

  std::size_t capacity_;
  int obs_dim_;
  int act_dim_;
  std::size_t size_ = 0;
  std::size_t start_ = 0;  // oldest element once full
  std::size_t allocated_ = 0;
  std::vector<float> obs_;
  std::vector<float> next_obs_;
  std::vector<float> act_;
  std::vector<float> reward_;
  std::vector<unsigned char> done_;
};

}  // namespace overtake
