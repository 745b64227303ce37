#include "overtake/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "overtake/errors.hpp"
#include "overtake/manifest.hpp"

namespace overtake {

EvalSetting EvalSetting::make(EvalSettingId id) {
  EvalSetting s;
  s.id = id;
  s.separation = id == EvalSettingId::A ? 50.0 : 200.0;
  return s;
}

EvalSetting EvalSetting::parse(const std::string& text) {
  if (text == "A" || text == "a") return make(EvalSettingId::A);
  if (text == "B" || text == "b") return make(EvalSettingId::B);
  throw UsageError("unknown setting '" + text + "'; expected one of {A, B}");
}

Action AgentPolicy::act(RaceEnv&, const StepResult& current) {
  require(current.normalized, "AgentPolicy: observation is not normalized; attach stats");
  Eigen::MatrixXf obs = Eigen::Map<const Eigen::VectorXf>(current.observation.data(), kObservationSize);
  Rng unused(0);
  const Eigen::MatrixXf a = snapshot_.act_batch(obs, ActionMode::deterministic, std::span<Rng>(&unused, 1));
  const std::array<float, 2> normalized{a(0, 0), a(1, 0)};
  return to_vehicle_action(normalized);
}

Action BuiltinAiPolicy::act(RaceEnv& env, const StepResult&) {
  return builtin_ai_action(env.ego(), env.track(), env.config().car, speed_scale_);
}

double measure_lap_time(EvalPolicy& policy, const std::string& track_id, const NormStats* stats,
                        int max_steps) {
  EnvConfig config;
  config.track_id = track_id;
  config.episode_steps = max_steps;
  auto track = std::make_shared<const TrackGeometry>(resolve_track(track_id));
  RaceEnv env(config, track);
  if (stats != nullptr) env.set_stats(stats);
  env.reset(0);
  env.set_ego_state(spawn_on_track(*track, 0.0, config.ego_spawn_speed_fraction * config.car.top_speed));
  // One coasting step refreshes the observation at the spawned state.
  StepResult current = env.step({0.0, 0.0});
  const double start = env.unwrapped_progress()[0];
  const double lap = track->total_length();
  double previous = start;
  for (int step = 1; step < max_steps && !current.done; ++step) {
    current = env.step(policy.act(env, current));
    const double progress = env.unwrapped_progress()[0];
    if (progress - start >= lap) {
      const double fraction = (start + lap - previous) / (progress - previous);
      return (step - 1 + fraction) * config.dt;
    }
    previous = progress;
  }
  return std::numeric_limits<double>::infinity();
}

LoadedAgent load_agent(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  SacAgent agent = SacAgent::load(checkpoint, observation_layout_hash());
  const auto stats_path = stats_path_for(checkpoint);
  if (!std::filesystem::exists(stats_path)) throw ConfigError("stats file not found: " + stats_path.string());
  NormStats stats = NormStats::load(stats_path);
  if (!stats.frozen()) throw ConfigError("stats file is not frozen: " + stats_path.string());
  return {std::move(agent), std::move(stats)};
}

EnvConfig eval_env_config(const EvalSetting& setting, const EvalOptions& options) {
  EnvConfig config;
  config.track_id = options.track_id;
  config.n_opponents = setting.opponents;
  config.initial_separation = setting.separation;
  config.reward_kind = RewardKind::overtaking;
  config.episode_steps = options.nominal_episode_steps * options.timeout_factor;
  config.opponent_speed_scale = options.opponent_speed_scale;
  return config;
}

namespace {

void append_trace(std::vector<TraceRow>& trace, const RaceEnv& env, const StepResult& r) {
  const auto cars = env.cars();
  for (std::size_t i = 0; i < cars.size(); ++i) {
    TraceRow row;
    row.step = r.info.step_index;
    row.car_id = static_cast<int>(i);
    row.x = cars[i].position.x;
    row.y = cars[i].position.y;
    row.heading = cars[i].heading;
    row.speed = cars[i].speed;
    row.cp = r.info.cars[i].cp;
    row.lateral_offset = r.info.cars[i].lateral_offset;
    row.wall_flag = r.info.cars[i].wall_flag;
    row.car_flag = r.info.cars[i].car_flag;
    row.reward = i == 0 ? r.reward : 0.0;
    trace.push_back(row);
  }
}

MetricStats stats_of(const std::vector<double>& values) {
  MetricStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

EpisodeMetrics run_episode(EvalPolicy& policy, const EvalSetting& setting, std::uint64_t seed,
                           const NormStats* stats, const EvalOptions& options, std::vector<TraceRow>* trace) {
  const EnvConfig config = eval_env_config(setting, options);
  auto track = std::make_shared<const TrackGeometry>(resolve_track(config.track_id));
  RaceEnv env(config, track);
  if (stats != nullptr) env.set_stats(stats);

  EpisodeMetrics m;
  m.seed = seed;
  StepResult current = env.reset(seed);
  const double dt = config.dt;
  int wall_steps = 0;
  int car_steps = 0;
  auto leads_all = [&] {
    const auto progress = env.unwrapped_progress();
    for (std::size_t k = 1; k < progress.size(); ++k) {
      if (progress[0] - progress[k] < options.success_margin) return false;
    }
    return true;
  };

  while (!current.done) {
    const Action action = policy.act(env, current);
    const Vec2 before = env.ego().position;
    current = env.step(action);
    ++m.steps;
    m.total_travel_distance += norm(env.ego().position - before);
    if (current.info.cars[0].wall_flag != 0) ++wall_steps;
    if (current.info.cars[0].car_flag != 0) ++car_steps;
    if (trace != nullptr) append_trace(*trace, env, current);
    if (leads_all()) {
      m.success = true;
      break;
    }
  }
  m.total_travel_time = m.steps * dt;
  m.total_wall_collision_time = wall_steps * dt;
  m.total_car_collision_time = car_steps * dt;
  const auto progress = env.unwrapped_progress();
  for (std::size_t k = 1; k < progress.size(); ++k) {
    if (progress[0] > progress[k]) ++m.overtakes_completed;
  }
  return m;
}

std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes) {
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < episodes; ++i) seeds.push_back(Rng::derive(seed, static_cast<std::uint64_t>(i)));
  return seeds;
}

std::vector<EpisodeMetrics> evaluate(EvalPolicy& policy, const EvalSetting& setting,
                                     const std::vector<std::uint64_t>& seeds, const NormStats* stats,
                                     const EvalOptions& options) {
  std::vector<EpisodeMetrics> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(run_episode(policy, setting, s, stats, options));
  return out;
}

EvalSummary summarize(const std::vector<EpisodeMetrics>& episodes) {
  EvalSummary s;
  s.episodes = static_cast<int>(episodes.size());
  std::vector<double> time, dist, car, wall, overtakes;
  for (const auto& e : episodes) {
    time.push_back(e.total_travel_time);
    dist.push_back(e.total_travel_distance);
    car.push_back(e.total_car_collision_time);
    wall.push_back(e.total_wall_collision_time);
    overtakes.push_back(e.overtakes_completed);
    if (e.success) {
      ++s.successes;
      if (!s.best || e.total_travel_time < s.best->total_travel_time) s.best = e;
    }
  }
  s.travel_time = stats_of(time);
  s.travel_distance = stats_of(dist);
  s.car_collision_time = stats_of(car);
  s.wall_collision_time = stats_of(wall);
  s.overtakes = stats_of(overtakes);
  return s;
}

void write_episode_csv(std::ostream& out, const std::vector<EpisodeMetrics>& episodes) {
  out << "episode,seed,success,steps,total_travel_time,total_travel_distance,total_car_collision_time,"
         "total_wall_collision_time,overtakes_completed\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    out << i << ',' << e.seed << ',' << (e.success ? 1 : 0) << ',' << e.steps << ',' << num(e.total_travel_time)
        << ',' << num(e.total_travel_distance) << ',' << num(e.total_car_collision_time) << ','
        << num(e.total_wall_collision_time) << ',' << e.overtakes_completed << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<std::string>& labels,
                       const std::vector<EvalSummary>& summaries) {
  out << "agent,episodes,successes,travel_time_mean,travel_time_std,travel_distance_mean,"
         "travel_distance_std,car_collision_time_mean,car_collision_time_std,wall_collision_time_mean,"
         "wall_collision_time_std,overtakes_mean,best_travel_time\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    out << labels[i] << ',' << s.episodes << ',' << s.successes << ',' << num(s.travel_time.mean) << ','
        << num(s.travel_time.std) << ',' << num(s.travel_distance.mean) << ',' << num(s.travel_distance.std)
        << ',' << num(s.car_collision_time.mean) << ',' << num(s.car_collision_time.std) << ','
        << num(s.wall_collision_time.mean) << ',' << num(s.wall_collision_time.std) << ','
        << num(s.overtakes.mean) << ',' << (s.best ? num(s.best->total_travel_time) : "") << '\n';
  }
}

void write_summary_table(std::ostream& out, const std::vector<std::string>& labels,
                         const std::vector<EvalSummary>& summaries) {
  const std::vector<std::string> header = {"agent",          "success",       "time [s]",     "distance [m]",
                                           "car coll. [s]", "wall coll. [s]", "overtakes", "best time [s]"};
  std::vector<std::vector<std::string>> rows;
  auto pm = [](const MetricStats& m) { return num(m.mean) + " +- " + num(m.std); };
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    rows.push_back({labels[i], std::to_string(s.successes) + "/" + std::to_string(s.episodes),
                    pm(s.travel_time), pm(s.travel_distance), pm(s.car_collision_time),
                    pm(s.wall_collision_time), num(s.overtakes.mean),
                    s.best ? num(s.best->total_travel_time) : "-"});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << (c == 0 ? "" : "  ") << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
}

Comparison compare_agents(const std::vector<std::filesystem::path>& checkpoints, const EvalSetting& setting,
                          const std::vector<std::uint64_t>& seeds, const EvalOptions& options) {
  if (checkpoints.empty()) throw UsageError("compare needs at least one checkpoint");
  Comparison result;
  for (const auto& path : checkpoints) {
    LoadedAgent loaded = load_agent(path);
    AgentPolicy policy(loaded.agent);
    result.labels.push_back(path.string());
    result.summaries.push_back(summarize(evaluate(policy, setting, seeds, &loaded.stats, options)));
  }
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "step,car_id,x,y,heading,speed,cp,lateral_offset,wall_flag,car_flag,reward\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.car_id << ',' << r.x << ',' << r.y << ',' << r.heading << ',' << r.speed << ','
        << r.cp << ',' << r.lateral_offset << ',' << r.wall_flag << ',' << r.car_flag << ',' << r.reward << '\n';
  }
}

namespace {

// Blue (slow) to red (fast).
std::string speed_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 * t));
  const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  const int g = static_cast<int>(std::lround(80.0 * (1.0 - std::abs(2.0 * t - 1.0))));
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2) << g << std::setw(2) << b;
  return os.str();
}

}  // namespace

void write_trace_svg(std::ostream& out, const TrackGeometry& track, const std::vector<TraceRow>& rows, int cars) {
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (auto side : {track.left_boundary(), track.right_boundary()}) {
    for (const Vec2& p : side) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  const double pad = 20.0;
  min_x -= pad;
  min_y -= pad;
  max_x += pad;
  max_y += pad;
  // SVG y grows downward; flip so the picture matches the world frame.
  auto px = [&](double x) { return x - min_x; };
  auto py = [&](double y) { return max_y - y; };

  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (const auto& r : rows) {
    if (r.car_id != 0) continue;
    vmin = std::min(vmin, r.speed);
    vmax = std::max(vmax, r.speed);
  }
  if (!std::isfinite(vmin)) vmin = vmax = 0.0;

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << (max_x - min_x) << "\" height=\""
      << (max_y - min_y) << "\" viewBox=\"0 0 " << (max_x - min_x) << ' ' << (max_y - min_y)
      << "\" data-speed-min=\"" << std::setprecision(6) << vmin << "\" data-speed-max=\"" << vmax << "\">\n"
      << std::setprecision(2);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (auto side : {track.left_boundary(), track.right_boundary()}) {
    out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i <= side.size(); ++i) {
      const Vec2& p = side[i % side.size()];
      out << (i == 0 ? "" : " ") << px(p.x) << ',' << py(p.y);
    }
    out << "\"/>\n";
  }

  static const char* kOpponentColors[] = {"#888888", "#2e8b57", "#8b4513", "#6a5acd", "#b8860b", "#708090"};
  for (int car = cars - 1; car >= 0; --car) {
    out << "<path fill=\"none\" stroke=\"" << (car == 0 ? "#bbbbbb" : kOpponentColors[(car - 1) % 6])
        << "\" stroke-width=\"" << (car == 0 ? 3 : 1.5) << "\" data-car=\"" << car << "\" d=\"";
    bool first = true;
    for (const auto& r : rows) {
      if (r.car_id != car) continue;
      out << (first ? "M" : " L") << px(r.x) << ',' << py(r.y);
      first = false;
    }
    out << "\"/>\n";
  }

  const TraceRow* prev = nullptr;
  for (const auto& r : rows) {
    if (r.car_id != 0) continue;
    if (prev != nullptr) {
      const double t = vmax > vmin ? (r.speed - vmin) / (vmax - vmin) : 0.0;
      out << "<line x1=\"" << px(prev->x) << "\" y1=\"" << py(prev->y) << "\" x2=\"" << px(r.x) << "\" y2=\""
          << py(r.y) << "\" stroke=\"" << speed_color(t) << "\" stroke-width=\"2\"/>\n";
    }
    prev = &r;
  }
  for (const auto& r : rows) {
    if (r.car_id != 0 || (r.wall_flag == 0 && r.car_flag == 0)) continue;
    out << "<circle cx=\"" << px(r.x) << "\" cy=\"" << py(r.y) << "\" r=\"2.5\" fill=\"none\" stroke=\""
        << (r.car_flag != 0 ? "magenta" : "orange") << "\"/>\n";
  }
  out << "<text x=\"10\" y=\"20\" font-size=\"14\">ego speed " << std::setprecision(1) << vmin << " m/s "
      << "<tspan fill=\"" << speed_color(0.0) << "\">blue</tspan> to " << vmax << " m/s <tspan fill=\""
      << speed_color(1.0) << "\">red</tspan></text>\n";
  out << "</svg>\n";
}

TraceExport export_trace(EvalPolicy& policy, const NormStats* stats, const EvalSetting& setting,
                         std::uint64_t seed, const std::filesystem::path& out_dir, const EvalOptions& options) {
  std::vector<TraceRow> rows;
  TraceExport result;
  result.metrics = run_episode(policy, setting, seed, stats, options, &rows);
  std::filesystem::create_directories(out_dir);
  const std::string stem = "trace_" + setting.name() + "_seed" + std::to_string(seed);
  result.csv = out_dir / (stem + ".csv");
  result.svg = out_dir / (stem + ".svg");
  result.rows = rows.size();
  std::ofstream csv(result.csv);
  std::ofstream svg(result.svg);
  if (!csv || !svg) throw ConfigError("cannot write trace files under " + out_dir.string());
  write_trace_csv(csv, rows);
  const TrackGeometry track = resolve_track(options.track_id);
  write_trace_svg(svg, track, rows, setting.opponents + 1);
  return result;
}

}  // namespace overtake
