#include "overtake/curriculum.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "overtake/errors.hpp"

namespace overtake {

WorkerPool::WorkerPool(int workers) : workers_(workers) {
  require(workers >= 1, "WorkerPool: need at least one worker");
  if (workers_ == 1) return;
  for (int i = 0; i < workers_; ++i) threads_.emplace_back([this, i] { loop(i); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::loop(int index) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(int)>* task = nullptr;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
      if (stopping_) return;
      seen = generation_;
      task = task_;
    }
    std::exception_ptr error;
    try {
      (*task)(index);
    } catch (...) {
      error = std::current_exception();
    }
    {
      std::lock_guard lock(mutex_);
      if (error && !error_) error_ = error;
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

void WorkerPool::run(const std::function<void(int)>& task) {
  if (workers_ == 1) {
    task(0);
    return;
  }
  std::unique_lock lock(mutex_);
  task_ = &task;
  pending_ = workers_;
  error_ = nullptr;
  ++generation_;
  start_cv_.notify_all();
  done_cv_.wait(lock, [&] { return pending_ == 0; });
  task_ = nullptr;
  if (error_) std::rethrow_exception(error_);
}

ParallelCollector::ParallelCollector(const EnvConfig& config, std::shared_ptr<const TrackGeometry> track,
                                     int workers, int cars_per_worker, std::uint64_t seed)
    : cars_per_worker_(cars_per_worker), pool_(workers) {
  require(workers >= 1 && cars_per_worker >= 1, "ParallelCollector: need at least one instance");
  const std::size_t n = static_cast<std::size_t>(workers) * static_cast<std::size_t>(cars_per_worker);
  slots_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t instance_seed = Rng::derive(seed, i);
    slots_.emplace_back(RaceEnv(config, track), Rng::derive(instance_seed, 1));
    action_rngs_.emplace_back(Rng::derive(instance_seed, 2));
    Slot& slot = slots_.back();
    slot.current = slot.env.reset(Rng::derive(slot.reset_stream, slot.episodes++)).raw;
    initial_cp_.push_back(slot.env.cp()[0]);
  }
}

void ParallelCollector::step_block(int worker, const PolicySnapshot* policy, const NormStats* stats,
                                   std::size_t active, std::vector<CollectedStep>& out) {
  const std::size_t begin = static_cast<std::size_t>(worker) * static_cast<std::size_t>(cars_per_worker_);
  const std::size_t end = std::min(active, begin + static_cast<std::size_t>(cars_per_worker_));
  if (begin >= end) return;
  const std::size_t count = end - begin;

  Eigen::MatrixXf actions(2, static_cast<Eigen::Index>(count));
  if (policy == nullptr) {
    for (std::size_t k = 0; k < count; ++k) {
      Rng& rng = action_rngs_[begin + k];
      actions(0, static_cast<Eigen::Index>(k)) = static_cast<float>(rng.uniform(-1.0, 1.0));
      actions(1, static_cast<Eigen::Index>(k)) = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
  } else {
    Eigen::MatrixXf obs(static_cast<Eigen::Index>(kObservationSize), static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) {
      const Observation o = normalize(slots_[begin + k].current, *stats);
      obs.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXf>(o.data(), o.size());
    }
    actions = policy->act_batch(obs, ActionMode::stochastic,
                                std::span<Rng>(action_rngs_.data() + begin, count));
  }

  for (std::size_t k = 0; k < count; ++k) {
    Slot& slot = slots_[begin + k];
    CollectedStep& step = out[begin + k];
    step.instance = begin + k;
    step.raw = slot.current;
    step.action = {actions(0, static_cast<Eigen::Index>(k)), actions(1, static_cast<Eigen::Index>(k))};
    const StepResult result = slot.env.step(to_vehicle_action(step.action));
    step.reward = result.reward;
    step.next_raw = result.raw;
    step.done = result.done;
    step.terminated = result.terminated;
    slot.episode_return += result.reward;
    if (result.done || result.terminated) {
      slot.finished.push_back(slot.episode_return);
      slot.episode_return = 0.0;
      slot.current = slot.env.reset(Rng::derive(slot.reset_stream, slot.episodes++)).raw;
    } else {
      slot.current = result.raw;
    }
  }
}

std::vector<CollectedStep> ParallelCollector::round(const PolicySnapshot* policy, const NormStats* stats,
                                                    std::size_t active) {
  require(active >= 1 && active <= slots_.size(), "ParallelCollector::round: bad active count");
  require(policy == nullptr || (stats != nullptr && stats->frozen()),
          "ParallelCollector::round: policy actions need frozen stats");
  std::vector<CollectedStep> out(active);
  pool_.run([&](int w) { step_block(w, policy, stats, active, out); });
  return out;
}

std::vector<double> ParallelCollector::take_finished_returns() {
  std::vector<double> all;
  for (Slot& slot : slots_) {
    all.insert(all.end(), slot.finished.begin(), slot.finished.end());
    slot.finished.clear();
  }
  return all;
}

std::vector<CollectedStep> collect_parallel(const PolicySnapshot* policy, ParallelCollector& collector,
                                            long long n_steps, const NormStats* stats) {
  require(n_steps >= 0, "collect_parallel: negative step count");
  std::vector<CollectedStep> all;
  all.reserve(static_cast<std::size_t>(n_steps) * collector.instances());
  for (long long s = 0; s < n_steps; ++s) {
    auto batch = collector.round(policy, stats, collector.instances());
    std::move(batch.begin(), batch.end(), std::back_inserter(all));
  }
  return all;
}

namespace {

std::vector<float> normalized_vector(const RawObservation& raw, const NormStats& stats) {
  const Observation o = normalize(raw, stats);
  return {o.begin(), o.end()};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

CurriculumTrainer::CurriculumTrainer(RunManifest manifest, std::filesystem::path data_root)
    : manifest_(std::move(manifest)),
      data_root_(std::move(data_root)),
      buffer_(manifest_.replay_capacity, manifest_.sac.observation_dim, manifest_.sac.action_dim) {
  manifest_.validate();
  require(manifest_.sac.observation_dim == static_cast<int>(kObservationSize) && manifest_.sac.action_dim == 2,
          "CurriculumTrainer: network widths must match the observation and action spaces");
  agent_.emplace(manifest_.sac, Rng::derive(manifest_.seed, 0x5AC));
}

void CurriculumTrainer::resume_from(const std::filesystem::path& checkpoint) {
  SacAgent loaded = SacAgent::load(checkpoint, observation_layout_hash());
  stats_ = NormStats::load(stats_path_for(checkpoint));
  if (!stats_.frozen()) throw ConfigError("resume: stats file is not frozen");
  manifest_.sac = loaded.config();
  agent_.emplace(std::move(loaded));
}

std::shared_ptr<const TrackGeometry> CurriculumTrainer::track_for(const std::string& id) {
  for (const auto& [name, track] : tracks_) {
    if (name == id) return track;
  }
  auto track = std::make_shared<const TrackGeometry>(resolve_track(id));
  tracks_.emplace_back(id, track);
  return track;
}

void CurriculumTrainer::push_step(const CollectedStep& step) {
  Transition t;
  t.observation = normalized_vector(step.raw, stats_);
  t.action = {step.action[0], step.action[1]};
  t.reward = static_cast<float>(step.reward);
  t.next_observation = normalized_vector(step.next_raw, stats_);
  t.done = step.terminated;
  buffer_.push(t);
}

void CurriculumTrainer::freeze_stats() {
  stats_.freeze();
  for (const CollectedStep& step : pending_) push_step(step);
  pending_.clear();
  pending_.shrink_to_fit();
  steps_since_update_ = 0;
}

void CurriculumTrainer::open_logs() {
  if (metrics_log_) return;
  const auto dir = output_dir();
  std::filesystem::create_directories(dir);
  metrics_log_ = std::make_unique<std::ofstream>(dir / "metrics.csv", std::ios::trunc);
  update_log_ = std::make_unique<std::ofstream>(dir / "updates.csv", std::ios::trunc);
  if (!*metrics_log_ || !*update_log_) throw ConfigError("cannot write logs under " + dir.string());
  std::ofstream(dir / "manifest.txt", std::ios::trunc) << manifest_.to_text();
  *metrics_log_ << "stage,epoch,stage_steps,total_steps,updates,eval_return,train_return,train_episodes,alpha\n";
  *update_log_ << "stage,update,q1_loss,q2_loss,policy_loss,alpha,entropy,mean_q,buffer_size\n";
}

void CurriculumTrainer::write_metrics(const EpochRecord& r) {
  *metrics_log_ << r.stage << ',' << r.epoch << ',' << r.stage_steps << ',' << r.total_steps << ',' << r.updates
                << ',' << fmt(r.eval_return) << ',' << fmt(r.train_return) << ',' << r.train_episodes << ','
                << fmt(r.alpha) << '\n';
  metrics_log_->flush();
}

void CurriculumTrainer::write_update(int stage, const UpdateDiagnostics& d) {
  *update_log_ << stage << ',' << d.update_index << ',' << fmt(d.q1_loss) << ',' << fmt(d.q2_loss) << ','
               << fmt(d.policy_loss) << ',' << fmt(d.alpha) << ',' << fmt(d.entropy) << ',' << fmt(d.mean_q)
               << ',' << d.buffer_size << '\n';
}

double CurriculumTrainer::evaluate_return(const EnvConfig& config, std::uint64_t seed) const {
  const PolicySnapshot snap = agent_->snapshot();
  auto track = std::make_shared<const TrackGeometry>(resolve_track(config.track_id));
  double total = 0.0;
  const int episodes = std::max(1, manifest_.eval_episodes);
  Rng unused(0);
  for (int e = 0; e < episodes; ++e) {
    RaceEnv env(config, track);
    env.set_stats(&stats_);
    StepResult r = env.reset(Rng::derive(seed, static_cast<std::uint64_t>(e)));
    double ret = 0.0;
    while (!r.done && !r.terminated) {
      Eigen::MatrixXf obs = Eigen::Map<const Eigen::VectorXf>(r.observation.data(), kObservationSize);
      const Eigen::MatrixXf a = snap.act_batch(obs, ActionMode::deterministic, std::span<Rng>(&unused, 1));
      const std::array<float, 2> act{a(0, 0), a(1, 0)};
      r = env.step(to_vehicle_action(act));
      ret += r.reward;
    }
    total += ret;
  }
  return total / episodes;
}

void CurriculumTrainer::transition_stage(const StageConfig& from, const StageConfig& to) {
  if (to.stage != from.stage + 1) {
    throw ContractViolation("transition_stage: stages must be consecutive (" + std::to_string(from.stage) +
                            " -> " + std::to_string(to.stage) + ")");
  }
  if (!to.carry_buffer) {
    buffer_ = ReplayBuffer(manifest_.replay_capacity, manifest_.sac.observation_dim, manifest_.sac.action_dim);
  }
  if (to.reinit_exploration) agent_->reinitialize_exploration();
}

StageReport CurriculumTrainer::run_stage(const StageConfig& stage) {
  stage.env.validate();
  open_logs();
  StageReport report;
  report.stage = stage.stage;
  report.checkpoint = manifest_.checkpoint_path(data_root_, stage.stage);

  const std::uint64_t stage_seed = Rng::derive(manifest_.seed, 100 + static_cast<std::uint64_t>(stage.stage));
  ParallelCollector collector(stage.env, track_for(stage.env.track_id), manifest_.workers,
                              manifest_.cars_per_worker, stage_seed);

  long long stage_steps = 0;
  long long next_epoch = manifest_.epoch_steps;
  int epoch = 0;
  double epoch_return_sum = 0.0;
  int epoch_episodes = 0;
  bool last_logged_at_end = false;

  auto log_epoch = [&] {
    ++epoch;
    EpochRecord rec;
    rec.stage = stage.stage;
    rec.epoch = epoch;
    rec.stage_steps = stage_steps;
    rec.total_steps = total_steps_;
    rec.updates = agent_->update_count();
    if (stats_.frozen()) {
      rec.eval_return = evaluate_return(stage.env, Rng::derive(stage_seed, 0xE7A1));
    }
    rec.train_return = epoch_episodes > 0 ? epoch_return_sum / epoch_episodes : 0.0;
    rec.train_episodes = epoch_episodes;
    rec.alpha = agent_->alpha();
    epoch_return_sum = 0.0;
    epoch_episodes = 0;
    write_metrics(rec);
    update_log_->flush();
    if (progress_ != nullptr) {
      *progress_ << "stage " << rec.stage << " epoch " << rec.epoch << " steps " << rec.stage_steps
                 << " updates " << rec.updates << " eval_return " << fmt(rec.eval_return) << " train_return "
                 << fmt(rec.train_return) << " alpha " << fmt(rec.alpha) << std::endl;
    }
    report.epochs.push_back(rec);
    if (epoch_callback_) epoch_callback_(rec, *this);
  };

  const std::uint64_t updates_before = agent_->update_count();
  long long remaining = stage.steps;
  while (remaining > 0) {
    const std::size_t active =
        static_cast<std::size_t>(std::min<long long>(remaining, static_cast<long long>(collector.instances())));
    std::vector<CollectedStep> steps;
    if (stats_.frozen()) {
      const PolicySnapshot snap = agent_->snapshot();
      steps = collector.round(&snap, &stats_, active);
      for (const CollectedStep& s : steps) push_step(s);
      steps_since_update_ += static_cast<long long>(active);
    } else {
      steps = collector.round(nullptr, nullptr, active);
      for (CollectedStep& s : steps) {
        stats_.update(s.raw);
        pending_.push_back(std::move(s));
      }
    }
    const long long delivered = static_cast<long long>(steps.size());
    total_steps_ += delivered;
    stage_steps += delivered;
    remaining -= delivered;
    for (double r : collector.take_finished_returns()) {
      epoch_return_sum += r;
      ++epoch_episodes;
    }

    if (!stats_.frozen() && total_steps_ >= manifest_.start_steps) freeze_stats();

    while (steps_since_update_ >= manifest_.update_every) {
      steps_since_update_ -= manifest_.update_every;
      if (buffer_.size() >= static_cast<std::size_t>(manifest_.sac.batch_size)) {
        write_update(stage.stage, agent_->update(buffer_));
      }
    }

    last_logged_at_end = false;
    while (stage_steps >= next_epoch) {
      next_epoch += manifest_.epoch_steps;
      log_epoch();
      last_logged_at_end = true;
    }
  }
  if (stage_steps > 0 && !last_logged_at_end) log_epoch();

  report.steps = stage_steps;
  report.updates = agent_->update_count() - updates_before;

  // Stats must be frozen before they are written; a stage shorter than the
  // start phase freezes whatever it saw.
  if (!stats_.frozen()) freeze_stats();
  std::filesystem::create_directories(report.checkpoint.parent_path());
  agent_->save(report.checkpoint, observation_layout_hash());
  stats_.save(stats_path_for(report.checkpoint));
  update_log_->flush();
  return report;
}

std::vector<StageReport> CurriculumTrainer::run(int first_stage) {
  std::vector<StageReport> reports;
  const auto& stages = manifest_.stages;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].stage < first_stage) continue;
    if (i > 0) transition_stage(stages[i - 1], stages[i]);
    reports.push_back(run_stage(stages[i]));
  }
  return reports;
}

}  // namespace overtake
