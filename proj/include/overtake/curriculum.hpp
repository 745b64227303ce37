#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "overtake/manifest.hpp"
#include "overtake/race_env.hpp"
#include "overtake/replay_buffer.hpp"
#include "overtake/sac.hpp"
#include "overtake/sensing.hpp"

namespace overtake {

// Persistent threads that execute one task per worker index and then wait.
// A pool of size 1 runs the task on the calling thread.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return workers_; }
  // Runs task(w) for every w in [0, size) and blocks until all have returned.
  // The first exception thrown by a task is rethrown here.
  void run(const std::function<void(int)>& task);

 private:
  void loop(int index);

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* task_ = nullptr;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

// One environment step from one instance, unnormalized.
struct CollectedStep {
  std::size_t instance = 0;
  RawObservation raw{};
  std::array<float, 2> action{};
  double reward = 0.0;
  RawObservation next_raw{};
  bool done = false;        // horizon reached; the instance was reset afterwards
  bool terminated = false;  // true terminal state
};

// n_workers x cars_per_worker independent environment instances stepped in
// synchronized rounds. Worker w owns a contiguous block of instances, so
// results are assembled in instance order regardless of thread timing.
class ParallelCollector {
 public:
  ParallelCollector(const EnvConfig& config, std::shared_ptr<const TrackGeometry> track, int workers,
                    int cars_per_worker, std::uint64_t seed);

  std::size_t instances() const { return slots_.size(); }
  int workers() const { return pool_.size(); }

  // Steps the first `active` instances once. A null policy draws uniform
  // random actions; otherwise observations are normalized with stats and the
  // policy samples stochastically.
  std::vector<CollectedStep> round(const PolicySnapshot* policy, const NormStats* stats, std::size_t active);

  // Ego arc length at each instance's first reset.
  const std::vector<double>& initial_arc_lengths() const { return initial_cp_; }

  // Returns of episodes finished since the last call, in instance order.
  std::vector<double> take_finished_returns();

  const RaceEnv& env(std::size_t instance) const { return slots_[instance].env; }

 private:
  struct Slot {
    Slot(RaceEnv e, std::uint64_t stream) : env(std::move(e)), reset_stream(stream) {}
    RaceEnv env;
    std::uint64_t reset_stream;
    std::uint64_t episodes = 0;
    RawObservation current{};
    double episode_return = 0.0;
    std::vector<double> finished;
  };

  void step_block(int worker, const PolicySnapshot* policy, const NormStats* stats, std::size_t active,
                  std::vector<CollectedStep>& out);

  int cars_per_worker_;
  std::vector<Slot> slots_;
  std::vector<Rng> action_rngs_;
  std::vector<double> initial_cp_;
  WorkerPool pool_;
};

// Steps every instance n_steps times; transitions come back round by round,
// instance order within a round.
std::vector<CollectedStep> collect_parallel(const PolicySnapshot* policy, ParallelCollector& collector,
                                            long long n_steps, const NormStats* stats = nullptr);

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  long long stage_steps = 0;
  long long total_steps = 0;
  std::uint64_t updates = 0;
  double eval_return = 0.0;   // greedy policy, mean over eval episodes
  double train_return = 0.0;  // mean return of training episodes finished this epoch
  int train_episodes = 0;
  double alpha = 0.0;
};

struct StageReport {
  int stage = 0;
  long long steps = 0;
  std::uint64_t updates = 0;
  std::vector<EpochRecord> epochs;
  std::filesystem::path checkpoint;
};

class CurriculumTrainer {
 public:
  using EpochCallback = std::function<void(const EpochRecord&, const CurriculumTrainer&)>;

  // Writes checkpoints, metrics.csv and updates.csv under the manifest's
  // output directory relative to data_root.
  CurriculumTrainer(RunManifest manifest, std::filesystem::path data_root);

  // Loads a checkpoint and its stats; the random start phase is skipped.
  void resume_from(const std::filesystem::path& checkpoint);

  void set_epoch_callback(EpochCallback callback) { epoch_callback_ = std::move(callback); }
  void set_progress_stream(std::ostream* out) { progress_ = out; }

  // Runs stages [first_stage, last] with transitions between them.
  std::vector<StageReport> run(int first_stage = 1);

  StageReport run_stage(const StageConfig& stage);

  // Stage surgery: drops the buffer unless to.carry_buffer, resets the
  // exploration parameters when to.reinit_exploration. Throws
  // ContractViolation unless to.stage == from.stage + 1.
  void transition_stage(const StageConfig& from, const StageConfig& to);

  const RunManifest& manifest() const { return manifest_; }
  const SacAgent& agent() const { return *agent_; }
  SacAgent& agent() { return *agent_; }
  const NormStats& stats() const { return stats_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  long long total_steps() const { return total_steps_; }
  std::filesystem::path output_dir() const { return manifest_.output_dir(data_root_); }

  // Greedy-policy return over the manifest's eval episode count.
  double evaluate_return(const EnvConfig& config, std::uint64_t seed) const;

 private:
  std::shared_ptr<const TrackGeometry> track_for(const std::string& id);
  void freeze_stats();
  void push_step(const CollectedStep& step);
  void write_metrics(const EpochRecord& record);
  void write_update(int stage, const UpdateDiagnostics& diag);
  void open_logs();

  RunManifest manifest_;
  std::filesystem::path data_root_;
  std::optional<SacAgent> agent_;
  NormStats stats_;
  ReplayBuffer buffer_;
  std::vector<CollectedStep> pending_;  // raw transitions awaiting frozen stats
  long long total_steps_ = 0;
  long long steps_since_update_ = 0;
  std::vector<std::pair<std::string, std::shared_ptr<const TrackGeometry>>> tracks_;
  EpochCallback epoch_callback_;
  std::ostream* progress_ = nullptr;
  std::unique_ptr<std::ostream> metrics_log_;
  std::unique_ptr<std::ostream> update_log_;
};

}  // namespace overtake
