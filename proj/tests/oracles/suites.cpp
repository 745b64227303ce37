#include "suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <sstream>

#include "oracles.hpp"
#include "overtake/race_env.hpp"
#include "overtake/replay_buffer.hpp"
#include "overtake/reward.hpp"
#include "overtake/rng.hpp"
#include "overtake/sac.hpp"
#include "overtake/sensing.hpp"
#include "overtake/track.hpp"

namespace overtake::oracle {
namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

SuiteResult finish(std::string name, bool passed, const std::ostringstream& detail, const Timer& timer) {
  return {std::move(name), passed, detail.str(), timer.seconds()};
}

double wrap_into(double x, double length) {
  double w = std::fmod(x, length);
  if (w < 0.0) w += length;
  if (w >= length) w -= length;
  return w;
}

}  // namespace

SuiteResult reward_oracle_suite(int samples, std::uint64_t seed) {
  Timer timer;
  const TrackGeometry track = bundled_track("oval");
  const double L = track.total_length();
  Rng rng(seed);
  double worst = 0.0;
  int boundary_cases = 0, wrap_cases = 0, failures = 0;

  for (int i = 0; i < samples; ++i) {
    RewardWeights w;
    w.wall = rng.uniform(0.0, 0.02);
    w.car = rng.uniform(0.0, 0.02);
    w.relative = rng.uniform(0.0, 2.0);
    w.detection = rng.uniform(5.0, 60.0);
    RewardInputs in;
    in.speed = rng.uniform(0.0, 55.0);
    in.wall_contact = static_cast<int>(rng.index(2));
    in.car_contact = static_cast<int>(rng.index(2));
    const int kind = static_cast<int>(rng.index(4));
    if (kind == 0) {
      // Straddle the start line.
      ++wrap_cases;
      in.ego.prev = L - rng.uniform(1e-6, 6.0);
      in.ego.curr = wrap_into(in.ego.prev + rng.uniform(-1.0, 8.0), L);
    } else {
      in.ego.prev = rng.uniform(0.0, L);
      in.ego.curr = wrap_into(in.ego.prev + rng.uniform(-3.0, 8.0), L);
    }
    if (kind == 1) {
      // Opponents exactly on (or just inside) the gate. Dyadic values keep
      // every difference exact in both implementations.
      w.detection = 30.0;
      in.ego.curr = std::floor(rng.uniform(0.0, L - 200.0) * 1024.0) / 1024.0 + 60.0;
      in.ego.prev = in.ego.curr - 2.0;
    }
    const int opponents = static_cast<int>(rng.index(7));
    for (int k = 0; k < opponents; ++k) {
      ProgressPair opp;
      if (kind == 1) {
        ++boundary_cases;
        const double offset = (rng.index(2) == 0 ? 30.0 : 30.0 - 1.0 / 1024.0) * (rng.index(2) == 0 ? 1.0 : -1.0);
        opp.curr = in.ego.curr + offset;
        opp.prev = opp.curr - std::floor(rng.uniform(0.0, 4.0) * 1024.0) / 1024.0;
      } else {
        opp.curr = wrap_into(in.ego.curr + rng.uniform(-80.0, 80.0), L);
        if (rng.index(5) == 0) opp.curr = rng.uniform(0.0, L);
        opp.prev = wrap_into(opp.curr - rng.uniform(-2.0, 6.0), L);
      }
      in.opponents.push_back(opp);
    }

    std::vector<OpponentCp> opps;
    for (const auto& o : in.opponents) opps.push_back({o.prev, o.curr});
    const double r1 = racing_reward(in, w, track);
    const double o1 = oracle::racing_reward(L, in.ego.prev, in.ego.curr, in.speed, in.wall_contact, w.wall);
    const double r2 = overtaking_reward(in, w, track);
    const double o2 = oracle::overtaking_reward(L, in.ego.prev, in.ego.curr, in.speed, in.wall_contact,
                                                in.car_contact, opps, w.wall, w.car, w.relative, w.detection);
    for (auto [got, want] : {std::pair{r1, o1}, std::pair{r2, o2}}) {
      const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
      worst = std::max(worst, rel);
      if (!(rel <= 1e-9)) ++failures;
    }
  }
  std::ostringstream detail;
  detail << samples << " samples (" << wrap_cases << " wrap-around, " << boundary_cases
         << " gate-boundary opponents), worst relative error " << worst << ", failures " << failures;
  return finish("reward oracle equivalence", failures == 0, detail, timer);
}

SuiteResult telescoping_suite(int rollouts, std::uint64_t seed) {
  Timer timer;
  auto track = std::make_shared<const TrackGeometry>(bundled_track("oval"));
  const double L = track->total_length();
  Rng rng(seed);
  double worst_racing = 0.0, worst_window = 0.0, worst_outside = 0.0;
  int clean = 0, attempts = 0, windows = 0;

  // Racing reward: sum equals net progress.
  while (clean < rollouts && attempts < rollouts * 5) {
    ++attempts;
    EnvConfig cfg;
    cfg.reward_kind = RewardKind::racing;
    cfg.weights.wall = 0.005;
    RaceEnv env(cfg, track);
    StepResult r = env.reset(rng.next_u64());
    const double scale = rng.uniform(0.6, 1.0);
    double sum = 0.0, net = 0.0;
    double cp_prev = r.info.cars[0].cp;
    double laps_net = 0.0;
    const double cp_start = cp_prev;
    bool contact = false;
    while (!r.done) {
      Action a = builtin_ai_action(env.ego(), *track, cfg.car, scale);
      a.steering += rng.uniform(-0.01, 0.01);
      r = env.step(a);
      if (r.info.cars[0].wall_flag != 0) contact = true;
      sum += r.reward;
      const double cp = r.info.cars[0].cp;
      net += oracle::loop_delta(L, cp_prev, cp);
      if (cp_prev - cp > 0.5 * L) laps_net += 1.0;
      if (cp - cp_prev > 0.5 * L) laps_net -= 1.0;
      cp_prev = cp;
    }
    if (contact) continue;
    ++clean;
    const double endpoint = cp_prev - cp_start + laps_net * L;
    worst_racing = std::max({worst_racing, std::abs(sum - net), std::abs(sum - endpoint)});
  }

  // Relative-progress term: telescopes over maximal gated runs.
  for (int k = 0; k < rollouts; ++k) {
    EnvConfig cfg;
    cfg.reward_kind = RewardKind::overtaking;
    cfg.n_opponents = 1;
    cfg.initial_separation = rng.uniform(5.0, 60.0);
    cfg.collision_mode = CollisionMode::pass_through;
    cfg.weights.wall = 0.0;
    cfg.weights.car = 0.0;
    cfg.weights.relative = rng.uniform(0.5, 2.0);
    cfg.weights.detection = 30.0;
    RaceEnv env(cfg, track);
    StepResult r = env.reset(rng.next_u64());
    const double scale = rng.uniform(0.95, 1.1);
    double delta_prev = r.info.opponent_delta[0];
    double window_sum = 0.0, window_start = 0.0;
    bool in_window = false;
    auto close_window = [&](double delta_end) {
      const double expected = cfg.weights.relative * (window_start - delta_end);
      worst_window = std::max(worst_window, std::abs(window_sum - expected));
      ++windows;
      in_window = false;
    };
    while (!r.done) {
      r = env.step(builtin_ai_action(env.ego(), *track, cfg.car, scale));
      const double term = r.reward - r.info.progress;
      const double delta = r.info.opponent_delta[0];
      const bool gated = std::abs(delta) < cfg.weights.detection;
      if (gated) {
        if (!in_window) {
          in_window = true;
          window_start = delta_prev;
          window_sum = 0.0;
        }
        window_sum += term;
      } else {
        if (in_window) close_window(delta_prev);
        worst_outside = std::max(worst_outside, std::abs(term));
      }
      delta_prev = delta;
    }
    if (in_window) close_window(delta_prev);
  }

  const bool passed = clean == rollouts && worst_racing <= 1e-6 && worst_window <= 1e-6 && worst_outside <= 1e-9 &&
                      windows > 0;
  std::ostringstream detail;
  detail << clean << " collision-free racing rollouts (" << attempts << " attempted), max |sum r - progress| "
         << worst_racing << " m; " << windows << " gated windows, max telescoping error " << worst_window
         << ", max ungated term " << worst_outside;
  return finish("telescoping identities", passed, detail, timer);
}

SuiteResult gradient_suite(int batches, std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  const int obs = 6, act = 2, n = 4;
  const std::vector<int> hidden{8, 8};
  const double eps = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;

  auto rel_error = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  };
  auto random_net = [&](std::vector<int> sizes) {
    Mlp<double> net(std::move(sizes));
    net.initialize(rng);
    for (auto& p : net.parameters()) p += rng.uniform(-0.1, 0.1);
    return net;
  };
  auto random_matrix = [&](int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
    }
    return m;
  };

  for (int b = 0; b < batches; ++b) {
    std::vector<int> psizes{obs}, qsizes{obs + act};
    psizes.insert(psizes.end(), hidden.begin(), hidden.end());
    qsizes.insert(qsizes.end(), hidden.begin(), hidden.end());
    psizes.push_back(2 * act);
    qsizes.push_back(1);
    Mlp<double> policy = random_net(psizes);
    Mlp<double> q1 = random_net(qsizes);
    Mlp<double> q2 = random_net(qsizes);
    const Eigen::MatrixXd x = random_matrix(obs, n, 1.0);
    const Eigen::MatrixXd noise = random_matrix(act, n, 1.0);
    const Eigen::MatrixXd q_in = random_matrix(obs + act, n, 1.0);
    Eigen::RowVectorXd target(n);
    for (int c = 0; c < n; ++c) target(c) = rng.normal();
    const double alpha = rng.uniform(0.05, 0.5);

    // Critic.
    std::vector<double> grad;
    critic_objective(q1, q_in, target, &grad);
    auto fd = finite_difference_gradient([&] { return critic_objective<double>(q1, q_in, target, nullptr); },
                                         q1.parameters(), eps);
    for (std::size_t i = 0; i < grad.size(); ++i) worst = std::max(worst, rel_error(grad[i], fd[i]));
    checked += grad.size();

    // Policy through the squashed Gaussian and both critics.
    policy_objective(policy, q1, q2, x, noise, alpha, -20.0, 2.0, &grad);
    fd = finite_difference_gradient(
        [&] { return policy_objective<double>(policy, q1, q2, x, noise, alpha, -20.0, 2.0, nullptr); },
        policy.parameters(), eps);
    for (std::size_t i = 0; i < grad.size(); ++i) worst = std::max(worst, rel_error(grad[i], fd[i]));
    checked += grad.size();

    // Input gradient of a weighted output sum.
    const Eigen::MatrixXd weights = random_matrix(1, n, 1.0);
    Mlp<double>::Cache cache;
    q2.forward(q_in, &cache);
    Eigen::MatrixXd input_grad;
    std::vector<double> unused;
    q2.backward(cache, weights, unused, &input_grad, false);
    Eigen::MatrixXd probe = q_in;
    std::span<double> inputs(probe.data(), static_cast<std::size_t>(probe.size()));
    fd = finite_difference_gradient([&] { return (q2.forward(probe).array() * weights.array()).sum(); }, inputs,
                                    eps);
    for (Eigen::Index i = 0; i < input_grad.size(); ++i) {
      worst = std::max(worst, rel_error(input_grad.data()[i], fd[static_cast<std::size_t>(i)]));
    }
    checked += static_cast<std::size_t>(input_grad.size());
  }
  std::ostringstream detail;
  detail << batches << " batches, " << checked << " partial derivatives, worst relative error " << worst;
  return finish("gradient correctness", worst < 1e-4, detail, timer);
}

SuiteResult lidar_suite(int scenes, std::uint64_t seed) {
  Timer timer;
  const TrackGeometry oval = bundled_track("oval");
  const TrackGeometry hairpin = bundled_track("hairpin");
  const CarParams params;
  Rng rng(seed);
  double worst = 0.0;
  long long beams = 0, hits_on_cars = 0;

  for (int s = 0; s < scenes; ++s) {
    const TrackGeometry& track = (s % 2 == 0) ? oval : hairpin;
    const double hw = track.half_width();
    const double cp = rng.uniform(0.0, track.total_length());
    VehicleState ego = spawn_on_track(track, cp, 0.0, rng.uniform(-(hw - 1.5), hw - 1.5));
    ego.heading += rng.uniform(-0.6, 0.6);

    std::vector<VehicleState> others;
    std::vector<OrientedRect> boxes;
    const int n_cars = static_cast<int>(rng.index(7));
    while (static_cast<int>(others.size()) < n_cars) {
      const double at = track.wrap(cp + rng.uniform(-15.0, 25.0));
      VehicleState car = spawn_on_track(track, at, 0.0, rng.uniform(-(hw - 1.5), hw - 1.5));
      car.heading += rng.uniform(-0.5, 0.5);
      // The sensor must sit outside every obstacle.
      const OrientedRect box = car.footprint(params);
      const Vec2 rel = ego.position - box.center;
      const double lx = std::cos(box.heading) * rel.x + std::sin(box.heading) * rel.y;
      const double ly = -std::sin(box.heading) * rel.x + std::cos(box.heading) * rel.y;
      if (std::abs(lx) < 0.5 * box.length + 0.05 && std::abs(ly) < 0.5 * box.width + 0.05) continue;
      others.push_back(car);
      boxes.push_back(box);
    }

    std::vector<Segment> segments(track.wall_segments().begin(), track.wall_segments().end());
    for (const auto& box : boxes) {
      for (const auto& e : rectangle_edges(box)) segments.push_back(e);
    }
    const LidarScan raw = cast_lidar(ego.position, ego.heading, track.wall_segments(), boxes);
    const LidarScan culled = cast_lidar(ego, track, others, params);
    for (std::size_t j = 0; j < kLidarBeams; ++j) {
      const Vec2 dir = unit_from_angle(ego.heading + beam_angle(j));
      const double want = march_ray(ego.position, dir, segments, kLidarRange, 0.01);
      worst = std::max({worst, std::abs(raw.ranges[j] - want), std::abs(culled.ranges[j] - want)});
      ++beams;
      if (raycast(ego.position, dir, {}, boxes) < kLidarRange) ++hits_on_cars;
    }
  }
  std::ostringstream detail;
  detail << scenes << " scenes, " << beams << " beams (" << hits_on_cars << " reaching a car), worst deviation "
         << worst * 100.0 << " cm";
  return finish("lidar vs ray marching", worst <= 0.02, detail, timer);
}

SuiteResult buffer_suite(int draws, std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  bool fifo_ok = true;
  int sequences = 0;
  for (; sequences < 300; ++sequences) {
    const std::size_t capacity = 1 + rng.index(40);
    const std::size_t pushes = rng.index(150);
    ReplayBuffer buffer(capacity, 1, 1);
    std::deque<float> model;
    for (std::size_t i = 0; i < pushes; ++i) {
      const auto id = static_cast<float>(i);
      buffer.push({{id}, {0.0f}, id, {id}, false});
      model.push_back(id);
      if (model.size() > capacity) model.pop_front();
      if (buffer.size() != model.size()) fifo_ok = false;
    }
    for (std::size_t i = 0; i < model.size(); ++i) {
      const Transition t = buffer.at(i);
      if (t.observation[0] != model[i] || t.reward != model[i] || t.next_observation[0] != model[i]) fifo_ok = false;
    }
  }

  // Frequencies over a rotated ring of 100 entries.
  const std::size_t capacity = 100;
  ReplayBuffer buffer(capacity, 1, 1);
  for (std::size_t i = 0; i < 150; ++i) {
    const auto id = static_cast<float>(i);
    buffer.push({{id}, {0.0f}, id, {id}, false});
  }
  std::vector<int> counts(capacity, 0);
  Rng sampler(seed + 1);
  const int chunk = 1000;
  bool ids_ok = true;
  for (int done = 0; done < draws; done += chunk) {
    const int n = std::min(chunk, draws - done);
    const TransitionBatch batch = buffer.sample(static_cast<std::size_t>(n), sampler);
    for (int c = 0; c < n; ++c) {
      const int id = static_cast<int>(batch.reward(c));
      if (id < 50 || id >= 150 || batch.observation(0, c) != batch.reward(c)) {
        ids_ok = false;
        continue;
      }
      ++counts[static_cast<std::size_t>(id - 50)];
    }
  }
  const double expected = static_cast<double>(draws) / capacity;
  const double sigma = std::sqrt(expected * (1.0 - 1.0 / capacity));
  double chi2 = 0.0, worst_z = 0.0;
  for (int c : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
    worst_z = std::max(worst_z, std::abs(c - expected) / sigma);
  }
  // 99 degrees of freedom: mean 99, sd ~14; 169 is five standard deviations up.
  const bool uniform_ok = ids_ok && worst_z < 5.0 && chi2 < 169.0;
  std::ostringstream detail;
  detail << sequences << " FIFO sequences " << (fifo_ok ? "ok" : "FAILED") << "; " << draws
         << " draws over 100 slots: chi2 " << chi2 << " (limit 169), max |z| " << worst_z << " (limit 5)";
  return finish("replay FIFO and sampling", fifo_ok && uniform_ok, detail, timer);
}

std::vector<SuiteResult> run_all_suites() {
  return {reward_oracle_suite(), telescoping_suite(), gradient_suite(), lidar_suite(), buffer_suite()};
}

}  // namespace overtake::oracle
