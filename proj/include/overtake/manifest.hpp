#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "overtake/race_env.hpp"
#include "overtake/sac.hpp"

namespace overtake {

enum class TrainingMode { curriculum, scratch };

struct StageConfig {
  int stage = 1;
  EnvConfig env;  // carries reward kind and weights
  long long steps = 0;
  bool carry_buffer = true;
  bool reinit_exploration = false;
};

// Everything needed to replay a training run.
struct RunManifest {
  std::string name = "run";
  TrainingMode mode = TrainingMode::curriculum;
  std::uint64_t seed = 0;
  int workers = 4;
  int cars_per_worker = 20;
  long long start_steps = 40000;
  long long epoch_steps = 20000;
  int update_every = 20;  // environment steps per gradient update
  std::size_t replay_capacity = 1000000;
  int eval_episodes = 1;
  std::string output = "";  // relative to the data root unless absolute
  SacConfig sac;
  std::vector<StageConfig> stages;

  int instances() const { return workers * cars_per_worker; }
  // "<output>/stage<k>.ckpt"; stats live next to it with extension ".stats".
  std::filesystem::path checkpoint_path(const std::filesystem::path& data_root, int stage) const;
  std::filesystem::path output_dir(const std::filesystem::path& data_root) const;

  // Checks stage ordering, reward kinds, opponent counts and the stage-3 >=
  // stage-2 weight escalation. Throws ConfigError.
  void validate() const;

  std::string to_text() const;
};

// Parses the key = value manifest format:
//   [run]      name, mode, seed, workers, cars_per_worker, start_steps,
//              epoch_steps, update_every, replay_capacity, eval_episodes, output
//   [sac]      hidden, gamma, tau, batch_size, learning_rate, initial_alpha,
//              target_entropy, reward_scale
//   [stage N]  reward, track, opponents, separation, c_w, c_c, c_r, c_d,
//              steps, episode_steps, carry_buffer, reinit_exploration,
//              opponent_speed_scale, collision
// Unknown sections or keys are rejected.
RunManifest parse_manifest(const std::string& text);
RunManifest load_manifest(const std::filesystem::path& path);

// The three benchmark agents as manifests over a shared base.
RunManifest agent1_manifest(const RunManifest& base);
RunManifest agent2_manifest(const RunManifest& base);
RunManifest agent3_manifest(const RunManifest& base);

// Default desk-scale curriculum: racing, then one opponent at +200 m, then
// escalated collision weights.
RunManifest default_manifest();

std::filesystem::path stats_path_for(const std::filesystem::path& checkpoint);

}  // namespace overtake
