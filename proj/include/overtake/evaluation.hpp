#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "overtake/race_env.hpp"
#include "overtake/sac.hpp"
#include "overtake/sensing.hpp"

namespace overtake {

enum class EvalSettingId { A, B };

struct EvalSetting {
  EvalSettingId id = EvalSettingId::A;
  int opponents = 5;
  double separation = 50.0;  // consecutive gap, meters
  int repetitions = 10;

  static EvalSetting make(EvalSettingId id);
  // Accepts "A" or "B"; anything else is a UsageError naming both.
  static EvalSetting parse(const std::string& text);
  std::string name() const { return id == EvalSettingId::A ? "A" : "B"; }
};

struct EvalOptions {
  std::string track_id = "oval";
  int nominal_episode_steps = 1000;
  double success_margin = 10.0;  // meters ahead of every opponent
  int timeout_factor = 3;
  double opponent_speed_scale = 0.9;
};

struct EpisodeMetrics {
  std::uint64_t seed = 0;
  double total_travel_time = 0.0;
  double total_travel_distance = 0.0;
  double total_car_collision_time = 0.0;
  double total_wall_collision_time = 0.0;
  int overtakes_completed = 0;
  bool success = false;
  int steps = 0;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct EvalSummary {
  int episodes = 0;
  int successes = 0;
  MetricStats travel_time;
  MetricStats travel_distance;
  MetricStats car_collision_time;
  MetricStats wall_collision_time;
  MetricStats overtakes;
  // Minimum-travel-time successful episode.
  std::optional<EpisodeMetrics> best;

  double total_collision_mean() const { return car_collision_time.mean + wall_collision_time.mean; }
};

EvalSummary summarize(const std::vector<EpisodeMetrics>& episodes);

// Anything that drives the ego. The environment is passed mutably so test
// policies can script the ego state directly.
class EvalPolicy {
 public:
  virtual ~EvalPolicy() = default;
  virtual Action act(RaceEnv& env, const StepResult& current) = 0;
};

// Deterministic (mean) action of a trained agent.
class AgentPolicy : public EvalPolicy {
 public:
  explicit AgentPolicy(const SacAgent& agent) : snapshot_(agent.snapshot()) {}
  Action act(RaceEnv& env, const StepResult& current) override;

 private:
  PolicySnapshot snapshot_;
};

class ZeroPolicy : public EvalPolicy {
 public:
  Action act(RaceEnv&, const StepResult&) override { return {0.0, 0.0}; }
};

// The rule-based controller driving the ego, at the given speed scale.
class BuiltinAiPolicy : public EvalPolicy {
 public:
  explicit BuiltinAiPolicy(double speed_scale = 1.0) : speed_scale_(speed_scale) {}
  Action act(RaceEnv& env, const StepResult& current) override;

 private:
  double speed_scale_;
};

// Time for the ego to cover one full lap from a standing spawn at arc length
// 0 and half top speed, alone on the track. The crossing is interpolated
// within the final step. Returns +inf if the lap is not completed within
// max_steps.
double measure_lap_time(EvalPolicy& policy, const std::string& track_id, const NormStats* stats,
                        int max_steps = 3000);

struct LoadedAgent {
  SacAgent agent;
  NormStats stats;
};

// Loads a checkpoint and its sibling stats file; both must carry the current
// observation layout hash.
LoadedAgent load_agent(const std::filesystem::path& checkpoint);

EnvConfig eval_env_config(const EvalSetting& setting, const EvalOptions& options);

// One visited state per car per step, for traces.
struct TraceRow {
  int step = 0;
  int car_id = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double cp = 0.0;
  double lateral_offset = 0.0;
  int wall_flag = 0;
  int car_flag = 0;
  double reward = 0.0;  // ego reward; 0 for opponents
};

// Runs one episode until success or timeout. stats may be null for policies
// that do not read observations.
EpisodeMetrics run_episode(EvalPolicy& policy, const EvalSetting& setting, std::uint64_t seed,
                           const NormStats* stats, const EvalOptions& options = {},
                           std::vector<TraceRow>* trace = nullptr);

std::vector<EpisodeMetrics> evaluate(EvalPolicy& policy, const EvalSetting& setting,
                                     const std::vector<std::uint64_t>& seeds, const NormStats* stats,
                                     const EvalOptions& options = {});

// Episode seeds for "--episodes n --seed s".
std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes);

void write_episode_csv(std::ostream& out, const std::vector<EpisodeMetrics>& episodes);
void write_summary_csv(std::ostream& out, const std::vector<std::string>& labels,
                       const std::vector<EvalSummary>& summaries);
void write_summary_table(std::ostream& out, const std::vector<std::string>& labels,
                         const std::vector<EvalSummary>& summaries);

struct Comparison {
  std::vector<std::string> labels;
  std::vector<EvalSummary> summaries;
};

// Evaluates every checkpoint on the same seeds. Throws UsageError when the
// list is empty.
Comparison compare_agents(const std::vector<std::filesystem::path>& checkpoints, const EvalSetting& setting,
                          const std::vector<std::uint64_t>& seeds, const EvalOptions& options = {});

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);
// Track boundaries as two polylines, one path per car, ego speed coloring
// as line segments, and circles at collision steps.
void write_trace_svg(std::ostream& out, const TrackGeometry& track, const std::vector<TraceRow>& rows,
                     int cars);

struct TraceExport {
  EpisodeMetrics metrics;
  std::filesystem::path csv;
  std::filesystem::path svg;
  std::size_t rows = 0;
};

TraceExport export_trace(EvalPolicy& policy, const NormStats* stats, const EvalSetting& setting,
                         std::uint64_t seed, const std::filesystem::path& out_dir,
                         const EvalOptions& options = {});

}  // namespace overtake
