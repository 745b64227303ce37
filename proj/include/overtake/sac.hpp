#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "overtake/mlp.hpp"
#include "overtake/replay_buffer.hpp"
#include "overtake/rng.hpp"
#include "overtake/vehicle.hpp"

namespace overtake {

struct SacConfig {
  int observation_dim = 96;
  int action_dim = 2;
  std::vector<int> hidden = {256, 256};
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 4096;
  double learning_rate = 0.001;
  double initial_alpha = 0.2;
  double target_entropy = -2.0;  // -action_dim
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  double log_std_init_bias = -0.5;
  double reward_scale = 1.0;

  void validate() const;
};

enum class ActionMode { stochastic, deterministic };

struct UpdateDiagnostics {
  std::uint64_t update_index = 0;
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double policy_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log pi over the batch
  double mean_q = 0.0;
  std::size_t buffer_size = 0;
};

// Policy head outputs, one column per sample.
struct PolicyOutput {
  Eigen::MatrixXf mean;
  Eigen::MatrixXf log_std;  // clamped
};

// Read-only copy of the policy network handed to sampling workers.
struct PolicySnapshot {
  Mlp<float> net;
  int action_dim = 2;
  float log_std_min = -20.0f;
  float log_std_max = 2.0f;

  PolicyOutput output(const Eigen::MatrixXf& observations) const;
  // tanh(mean) or tanh(mean + std * noise); noise column c uses rngs[c].
  Eigen::MatrixXf act_batch(const Eigen::MatrixXf& observations, ActionMode mode,
                            std::span<Rng> rngs) const;
};

// Soft actor-critic with a tanh-squashed Gaussian policy, twin critics with
// Polyak-averaged targets, and a learned temperature.
class SacAgent {
 public:
  SacAgent(SacConfig config, std::uint64_t seed);

  const SacConfig& config() const { return config_; }
  const Mlp<float>& policy() const { return policy_; }
  Mlp<float>& policy() { return policy_; }
  const Mlp<float>& q1() const { return q1_; }
  const Mlp<float>& q2() const { return q2_; }
  const Mlp<float>& q1_target() const { return q1_target_; }
  const Mlp<float>& q2_target() const { return q2_target_; }
  double alpha() const;
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double value) { log_alpha_ = value; }
  std::uint64_t update_count() const { return updates_; }
  std::uint64_t seed() const { return seed_; }

  PolicyOutput policy_output(const Eigen::MatrixXf& observations) const;
  PolicySnapshot snapshot() const;

  // Normalized action in [-1, 1]^action_dim for one observation.
  std::vector<float> act(std::span<const float> observation, ActionMode mode, Rng& rng) const;
  // Batched version; noise column c uses rngs[c].
  Eigen::MatrixXf act_batch(const Eigen::MatrixXf& observations, ActionMode mode,
                            std::span<Rng> rngs) const;

  // Log-density of a normalized action strictly inside (-1, 1)^d.
  double log_prob(std::span<const float> observation, std::span<const double> action) const;

  // One gradient step for both critics, the policy and the temperature,
  // followed by the target update. Throws when the buffer holds fewer than
  // batch_size transitions.
  UpdateDiagnostics update(const ReplayBuffer& buffer);

  // Resets the log-std output rows and the temperature to their initial
  // values; everything else is left untouched.
  void reinitialize_exploration();

  void save(const std::filesystem::path& path, std::uint64_t layout_hash) const;
  static SacAgent load(const std::filesystem::path& path, std::uint64_t expected_layout_hash);

  // Reads only the layout hash stored in a checkpoint.
  static std::uint64_t peek_layout_hash(const std::filesystem::path& path);

  bool operator==(const SacAgent& other) const;

 private:
  SacAgent() = default;

  SacConfig config_;
  std::uint64_t seed_ = 0;
  std::uint64_t updates_ = 0;
  Mlp<float> policy_;
  Mlp<float> q1_;
  Mlp<float> q2_;
  Mlp<float> q1_target_;
  Mlp<float> q2_target_;
  double log_alpha_ = 0.0;
  Adam<float> policy_opt_;
  Adam<float> q1_opt_;
  Adam<float> q2_opt_;
  Adam<double> alpha_opt_;
};

// Critic regression objective mean(0.5 * (Q(x) - y)^2). Writes the parameter
// gradient into grad when it is non-null; mean_q receives mean Q(x).
template <typename T>
double critic_objective(const Mlp<T>& q, const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& q_input,
                        const Eigen::RowVectorXd& target, std::vector<T>* grad, double* mean_q = nullptr);

// Reparameterized policy objective mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))
// with a = tanh(mean + exp(log_std) * noise) for fixed noise. Only the policy
// parameters receive gradient. log_prob receives log pi per column.
template <typename T>
double policy_objective(const Mlp<T>& policy, const Mlp<T>& q1, const Mlp<T>& q2,
                        const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& observations,
                        const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& noise, double alpha,
                        double log_std_min, double log_std_max, std::vector<T>* grad,
                        Eigen::RowVectorXd* log_prob = nullptr);

// Maps a normalized policy action to the car's action box.
Action to_vehicle_action(std::span<const float> normalized);

// Squashed-Gaussian helpers shared by the agent and its tests.
// log(1 - tanh(u)^2) evaluated without cancellation.
double log1m_tanh_sq(double u);
// Log-density of a = tanh(u) for u ~ N(mean, exp(log_std)^2), per dimension.
double squashed_gaussian_log_prob(double mean, double log_std, double action);

}  // namespace overtake
