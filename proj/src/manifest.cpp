#include "overtake/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "overtake/errors.hpp"

namespace overtake {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Section {
  std::string name;
  int line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<int> lines;
};

std::vector<Section> split_sections(const std::string& text) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("manifest line " + std::to_string(line_no) + ": bad section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (sections.empty()) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": entry outside of a section");
    }
    sections.back().entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    sections.back().lines.push_back(line_no);
  }
  return sections;
}

class ValueReader {
 public:
  ValueReader(const std::string& key, const std::string& value, int line)
      : key_(key), value_(value), line_(line) {}

  template <typename T>
  T number() const {
    std::istringstream in(value_);
    T v{};
    if (!(in >> v) || !(in >> std::ws).eof()) fail("expected a number");
    return v;
  }

  bool boolean() const {
    if (value_ == "true" || value_ == "1" || value_ == "yes") return true;
    if (value_ == "false" || value_ == "0" || value_ == "no") return false;
    fail("expected true or false");
    return false;
  }

  std::vector<int> int_list() const {
    std::vector<int> out;
    std::istringstream in(value_);
    std::string item;
    while (std::getline(in, item, ',')) {
      std::istringstream field(trim(item));
      int v = 0;
      if (!(field >> v)) fail("expected a comma-separated list of integers");
      out.push_back(v);
    }
    return out;
  }

  const std::string& text() const { return value_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("manifest line " + std::to_string(line_) + ": '" + key_ + " = " + value_ + "': " + why);
  }

 private:
  std::string key_;
  std::string value_;
  int line_;
};

StageConfig default_stage(int id, const std::string& track) {
  StageConfig s;
  s.stage = id;
  s.env.track_id = track;
  if (id == 1) {
    s.env.reward_kind = RewardKind::racing;
    s.env.n_opponents = 0;
    s.steps = 200000;
  } else {
    s.env.reward_kind = RewardKind::overtaking;
    s.env.n_opponents = 1;
    s.env.initial_separation = 200.0;
    s.steps = id == 2 ? 150000 : 100000;
    s.reinit_exploration = id == 2;
  }
  return s;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::filesystem::path stats_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".stats");
  return p;
}

std::filesystem::path RunManifest::output_dir(const std::filesystem::path& data_root) const {
  const std::filesystem::path out = output.empty() ? std::filesystem::path("runs") / name : std::filesystem::path(output);
  return out.is_absolute() ? out : data_root / out;
}

std::filesystem::path RunManifest::checkpoint_path(const std::filesystem::path& data_root, int stage) const {
  return output_dir(data_root) / ("stage" + std::to_string(stage) + ".ckpt");
}

void RunManifest::validate() const {
  if (workers < 1 || cars_per_worker < 1) throw ConfigError("manifest: workers and cars_per_worker must be >= 1");
  if (start_steps < 0) throw ConfigError("manifest: start_steps must be >= 0");
  if (epoch_steps <= 0) throw ConfigError("manifest: epoch_steps must be > 0");
  if (update_every <= 0) throw ConfigError("manifest: update_every must be > 0");
  if (replay_capacity == 0) throw ConfigError("manifest: replay_capacity must be > 0");
  if (eval_episodes < 0) throw ConfigError("manifest: eval_episodes must be >= 0");
  sac.validate();
  if (stages.empty()) throw ConfigError("manifest: no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    s.env.validate();
    if (s.steps < 0) throw ConfigError("manifest: stage steps must be >= 0");
    if (i > 0 && s.stage != stages[i - 1].stage + 1) {
      throw ConfigError("manifest: stages must be consecutive");
    }
  }
  if (mode == TrainingMode::scratch) {
    if (stages.size() != 1) throw ConfigError("manifest: scratch mode runs exactly one stage");
    return;
  }
  for (const auto& s : stages) {
    if (s.stage < 1 || s.stage > 3) throw ConfigError("manifest: curriculum stages are numbered 1..3");
    if (s.stage == 1 && (s.env.reward_kind != RewardKind::racing || s.env.n_opponents != 0)) {
      throw ConfigError("manifest: stage 1 must use the racing reward with no opponents");
    }
    if (s.stage > 1 && (s.env.reward_kind != RewardKind::overtaking || s.env.n_opponents < 1)) {
      throw ConfigError("manifest: stages 2 and 3 must use the overtaking reward with opponents");
    }
  }
  const auto find = [&](int id) -> const StageConfig* {
    for (const auto& s : stages) {
      if (s.stage == id) return &s;
    }
    return nullptr;
  };
  const StageConfig* s2 = find(2);
  const StageConfig* s3 = find(3);
  if (s2 != nullptr && s3 != nullptr &&
      (s3->env.weights.wall < s2->env.weights.wall || s3->env.weights.car < s2->env.weights.car)) {
    throw ConfigError("manifest: stage 3 collision weights must be >= stage 2 weights");
  }
}

RunManifest parse_manifest(const std::string& text) {
  RunManifest m;
  m.stages.clear();
  std::string default_track = "oval";
  const auto sections = split_sections(text);

  // [run] first so its track default applies to every stage.
  for (const auto& sec : sections) {
    if (sec.name != "run") continue;
    for (std::size_t i = 0; i < sec.entries.size(); ++i) {
      const auto& [key, value] = sec.entries[i];
      const ValueReader v(key, value, sec.lines[i]);
      if (key == "name") m.name = value;
      else if (key == "mode") {
        if (value == "curriculum") m.mode = TrainingMode::curriculum;
        else if (value == "scratch") m.mode = TrainingMode::scratch;
        else v.fail("expected curriculum or scratch");
      } else if (key == "seed") m.seed = v.number<std::uint64_t>();
      else if (key == "workers") m.workers = v.number<int>();
      else if (key == "cars_per_worker") m.cars_per_worker = v.number<int>();
      else if (key == "start_steps") m.start_steps = v.number<long long>();
      else if (key == "epoch_steps") m.epoch_steps = v.number<long long>();
      else if (key == "update_every") m.update_every = v.number<int>();
      else if (key == "replay_capacity") m.replay_capacity = v.number<std::size_t>();
      else if (key == "eval_episodes") m.eval_episodes = v.number<int>();
      else if (key == "output") m.output = value;
      else if (key == "track") default_track = value;
      else v.fail("unknown key in [run]");
    }
  }

  for (const auto& sec : sections) {
    if (sec.name == "run") continue;
    if (sec.name == "sac") {
      for (std::size_t i = 0; i < sec.entries.size(); ++i) {
        const auto& [key, value] = sec.entries[i];
        const ValueReader v(key, value, sec.lines[i]);
        if (key == "hidden") m.sac.hidden = v.int_list();
        else if (key == "gamma") m.sac.gamma = v.number<double>();
        else if (key == "tau") m.sac.tau = v.number<double>();
        else if (key == "batch_size") m.sac.batch_size = v.number<int>();
        else if (key == "learning_rate") m.sac.learning_rate = v.number<double>();
        else if (key == "initial_alpha") m.sac.initial_alpha = v.number<double>();
        else if (key == "target_entropy") m.sac.target_entropy = v.number<double>();
        else if (key == "reward_scale") m.sac.reward_scale = v.number<double>();
        else v.fail("unknown key in [sac]");
      }
      continue;
    }
    std::istringstream header(sec.name);
    std::string word;
    int id = 0;
    if (!(header >> word >> id) || word != "stage" || !(header >> std::ws).eof()) {
      throw ConfigError("manifest line " + std::to_string(sec.line) + ": unknown section [" + sec.name + "]");
    }
    StageConfig s = default_stage(id, default_track);
    for (std::size_t i = 0; i < sec.entries.size(); ++i) {
      const auto& [key, value] = sec.entries[i];
      const ValueReader v(key, value, sec.lines[i]);
      if (key == "reward") s.env.reward_kind = parse_reward_kind(value);
      else if (key == "track") s.env.track_id = value;
      else if (key == "opponents") s.env.n_opponents = v.number<int>();
      else if (key == "separation") s.env.initial_separation = v.number<double>();
      else if (key == "c_w") s.env.weights.wall = v.number<double>();
      else if (key == "c_c") s.env.weights.car = v.number<double>();
      else if (key == "c_r") s.env.weights.relative = v.number<double>();
      else if (key == "c_d") s.env.weights.detection = v.number<double>();
      else if (key == "steps") s.steps = v.number<long long>();
      else if (key == "episode_steps") s.env.episode_steps = v.number<int>();
      else if (key == "carry_buffer") s.carry_buffer = v.boolean();
      else if (key == "reinit_exploration") s.reinit_exploration = v.boolean();
      else if (key == "opponent_speed_scale") s.env.opponent_speed_scale = v.number<double>();
      else if (key == "collision") s.env.collision_mode = parse_collision_mode(value);
      else v.fail("unknown key in [stage]");
    }
    m.stages.push_back(s);
  }
  std::sort(m.stages.begin(), m.stages.end(),
            [](const StageConfig& a, const StageConfig& b) { return a.stage < b.stage; });
  m.validate();
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_manifest(text.str());
}

std::string RunManifest::to_text() const {
  std::ostringstream out;
  out << "[run]\n"
      << "name = " << name << '\n'
      << "mode = " << (mode == TrainingMode::curriculum ? "curriculum" : "scratch") << '\n'
      << "seed = " << seed << '\n'
      << "workers = " << workers << '\n'
      << "cars_per_worker = " << cars_per_worker << '\n'
      << "start_steps = " << start_steps << '\n'
      << "epoch_steps = " << epoch_steps << '\n'
      << "update_every = " << update_every << '\n'
      << "replay_capacity = " << replay_capacity << '\n'
      << "eval_episodes = " << eval_episodes << '\n';
  if (!output.empty()) out << "output = " << output << '\n';
  out << "\n[sac]\nhidden = ";
  for (std::size_t i = 0; i < sac.hidden.size(); ++i) out << (i ? "," : "") << sac.hidden[i];
  out << "\ngamma = " << format_double(sac.gamma) << '\n'
      << "tau = " << format_double(sac.tau) << '\n'
      << "batch_size = " << sac.batch_size << '\n'
      << "learning_rate = " << format_double(sac.learning_rate) << '\n'
      << "initial_alpha = " << format_double(sac.initial_alpha) << '\n'
      << "target_entropy = " << format_double(sac.target_entropy) << '\n'
      << "reward_scale = " << format_double(sac.reward_scale) << '\n';
  for (const auto& s : stages) {
    out << "\n[stage " << s.stage << "]\n"
        << "reward = " << to_string(s.env.reward_kind) << '\n'
        << "track = " << s.env.track_id << '\n'
        << "opponents = " << s.env.n_opponents << '\n'
        << "separation = " << format_double(s.env.initial_separation) << '\n'
        << "c_w = " << format_double(s.env.weights.wall) << '\n'
        << "c_c = " << format_double(s.env.weights.car) << '\n'
        << "c_r = " << format_double(s.env.weights.relative) << '\n'
        << "c_d = " << format_double(s.env.weights.detection) << '\n'
        << "steps = " << s.steps << '\n'
        << "episode_steps = " << s.env.episode_steps << '\n'
        << "carry_buffer = " << (s.carry_buffer ? "true" : "false") << '\n'
        << "reinit_exploration = " << (s.reinit_exploration ? "true" : "false") << '\n'
        << "opponent_speed_scale = " << format_double(s.env.opponent_speed_scale) << '\n'
        << "collision = " << to_string(s.env.collision_mode) << '\n';
  }
  return out.str();
}

RunManifest default_manifest() {
  RunManifest m;
  m.name = "curriculum";
  m.stages = {default_stage(1, "oval"), default_stage(2, "oval"), default_stage(3, "oval")};
  m.stages[2].env.weights.wall = 0.01;
  m.stages[2].env.weights.car = 0.01;
  return m;
}

namespace {

RunManifest with_stages(const RunManifest& base, int last_stage, double stage3_weight, const std::string& suffix) {
  RunManifest m = base;
  m.mode = TrainingMode::curriculum;
  m.name = base.name + suffix;
  m.stages.clear();
  for (int id = 1; id <= last_stage; ++id) {
    auto it = std::find_if(base.stages.begin(), base.stages.end(),
                           [&](const StageConfig& s) { return s.stage == id; });
    StageConfig s = it != base.stages.end() ? *it : default_stage(id, base.stages.empty() ? "oval" : base.stages.front().env.track_id);
    if (id == 2) {
      s.env.weights.wall = 0.005;
      s.env.weights.car = 0.005;
    }
    if (id == 3) {
      s.env.weights.wall = stage3_weight;
      s.env.weights.car = stage3_weight;
    }
    m.stages.push_back(s);
  }
  m.validate();
  return m;
}

}  // namespace

RunManifest agent1_manifest(const RunManifest& base) { return with_stages(base, 2, 0.0, "_agent1"); }
RunManifest agent2_manifest(const RunManifest& base) { return with_stages(base, 3, 0.005, "_agent2"); }
RunManifest agent3_manifest(const RunManifest& base) { return with_stages(base, 3, 0.01, "_agent3"); }

}  // namespace overtake
