#include "overtake/replay_buffer.hpp"

#include <algorithm>
#include <cmath>

#include "overtake/errors.hpp"

namespace overtake {

ReplayBuffer::ReplayBuffer(std::size_t capacity, int observation_dim, int action_dim)
    : capacity_(capacity), obs_dim_(observation_dim), act_dim_(action_dim) {
  require(capacity_ > 0, "ReplayBuffer: capacity must be positive");
  require(obs_dim_ > 0 && act_dim_ > 0, "ReplayBuffer: dimensions must be positive");
}

void ReplayBuffer::ensure_storage(std::size_t slots) {
  if (slots <= allocated_) return;
  std::size_t grow = std::max<std::size_t>(allocated_ * 2, 1024);
  grow = std::min(std::max(grow, slots), capacity_);
  obs_.resize(grow * static_cast<std::size_t>(obs_dim_));
  next_obs_.resize(grow * static_cast<std::size_t>(obs_dim_));
  act_.resize(grow * static_cast<std::size_t>(act_dim_));
  reward_.resize(grow);
  done_.resize(grow);
  allocated_ = grow;
}

void ReplayBuffer::push(const Transition& t) {
  require(t.observation.size() == static_cast<std::size_t>(obs_dim_) &&
              t.next_observation.size() == static_cast<std::size_t>(obs_dim_) &&
              t.action.size() == static_cast<std::size_t>(act_dim_),
          "ReplayBuffer::push: transition width mismatch");
  require(std::isfinite(t.reward), "ReplayBuffer::push: non-finite reward");
  std::size_t index;
  if (size_ < capacity_) {
    ensure_storage(size_ + 1);
    index = size_++;
  } else {
    index = start_;
    start_ = (start_ + 1) % capacity_;
  }
  const auto od = static_cast<std::size_t>(obs_dim_);
  const auto ad = static_cast<std::size_t>(act_dim_);
  std::copy(t.observation.begin(), t.observation.end(), obs_.begin() + static_cast<std::ptrdiff_t>(index * od));
  std::copy(t.next_observation.begin(), t.next_observation.end(),
            next_obs_.begin() + static_cast<std::ptrdiff_t>(index * od));
  std::copy(t.action.begin(), t.action.end(), act_.begin() + static_cast<std::ptrdiff_t>(index * ad));
  reward_[index] = t.reward;
  done_[index] = t.done ? 1 : 0;
}

Transition ReplayBuffer::at(std::size_t i) const {
  require(i < size_, "ReplayBuffer::at: index out of range");
  const std::size_t s = slot(i);
  const auto od = static_cast<std::size_t>(obs_dim_);
  const auto ad = static_cast<std::size_t>(act_dim_);
  Transition t;
  t.observation.assign(obs_.begin() + static_cast<std::ptrdiff_t>(s * od),
                       obs_.begin() + static_cast<std::ptrdiff_t>((s + 1) * od));
  t.next_observation.assign(next_obs_.begin() + static_cast<std::ptrdiff_t>(s * od),
                            next_obs_.begin() + static_cast<std::ptrdiff_t>((s + 1) * od));
  t.action.assign(act_.begin() + static_cast<std::ptrdiff_t>(s * ad),
                  act_.begin() + static_cast<std::ptrdiff_t>((s + 1) * ad));
  t.reward = reward_[s];
  t.done = done_[s] != 0;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  require(size_ > 0, "ReplayBuffer::sample: buffer is empty");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(size_);
  return idx;
}

TransitionBatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  const auto idx = sample_indices(n, rng);
  const auto cols = static_cast<Eigen::Index>(n);
  TransitionBatch batch;
  batch.observation.resize(obs_dim_, cols);
  batch.next_observation.resize(obs_dim_, cols);
  batch.action.resize(act_dim_, cols);
  batch.reward.resize(cols);
  batch.done.resize(cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const std::size_t s = slot(idx[static_cast<std::size_t>(c)]);
    batch.observation.col(c) =
        Eigen::Map<const Eigen::VectorXf>(obs_.data() + s * static_cast<std::size_t>(obs_dim_), obs_dim_);
    batch.next_observation.col(c) =
        Eigen::Map<const Eigen::VectorXf>(next_obs_.data() + s * static_cast<std::size_t>(obs_dim_), obs_dim_);
    batch.action.col(c) =
        Eigen::Map<const Eigen::VectorXf>(act_.data() + s * static_cast<std::size_t>(act_dim_), act_dim_);
    batch.reward(c) = reward_[s];
    batch.done(c) = done_[s] ? 1.0f : 0.0f;
  }
  return batch;
}

}  // namespace overtake
