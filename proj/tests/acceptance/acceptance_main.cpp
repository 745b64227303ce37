// Acceptance run: one PASS/FAIL line per criterion.
//
// Criteria 3-6 train agents and take tens of minutes on one core. Their
// outcome is reported but only counts towards the exit status with --strict;
// the exact criteria (oracles, determinism) always do.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include "overtake/curriculum.hpp"
#include "overtake/evaluation.hpp"
#include "overtake/manifest.hpp"
#include "suites.hpp"

namespace fs = std::filesystem;
using namespace overtake;

namespace {

struct Verdict {
  int id = 0;
  bool passed = false;
  std::string detail;
  bool exact = true;
};

fs::path data_source() { return OVERTAKE_DATA_SOURCE_DIR; }

RunManifest bundled_manifest(const std::string& name) {
  return load_manifest(data_source() / "manifests" / (name + ".manifest"));
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

Verdict from_suite(int id, const oracle::SuiteResult& r, double time_limit) {
  Verdict v{id, r.passed && r.seconds < time_limit, r.name + ": " + r.detail + ", " + fixed(r.seconds) + " s (limit " +
                                                         fixed(time_limit, 0) + " s)"};
  return v;
}

// Trains with the manifest as given, output under root.
std::vector<StageReport> train(const RunManifest& m, const fs::path& root, CurriculumTrainer::EpochCallback cb = {}) {
  CurriculumTrainer trainer(m, root);
  if (cb) trainer.set_epoch_callback(std::move(cb));
  return trainer.run();
}

Verdict lap_time_criterion(const fs::path& work, const std::vector<std::uint64_t>& seeds) {
  BuiltinAiPolicy ai(0.9);
  const double ai_lap = measure_lap_time(ai, "oval", nullptr);
  BuiltinAiPolicy ai_full(1.0);
  const double ai_full_lap = measure_lap_time(ai_full, "oval", nullptr);
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    RunManifest m = bundled_manifest("agent1");
    m.name = "lap_seed" + std::to_string(seed);
    m.seed = seed;
    m.stages.resize(1);
    const auto reports = train(m, work);
    LoadedAgent loaded = load_agent(reports.back().checkpoint);
    AgentPolicy policy(loaded.agent);
    const double lap = measure_lap_time(policy, "oval", &loaded.stats);
    wins += lap < ai_lap;
    per_seed += " seed " + std::to_string(seed) + "=" + fixed(lap) + " s";
  }
  return {3, wins >= 2,
          "built-in AI " + fixed(ai_lap) + " s at scale 0.9 (" + fixed(ai_full_lap) + " s at 1.0);" + per_seed + "; " +
              std::to_string(wins) + "/" + std::to_string(seeds.size()) + " faster",
          false};
}

struct StopTraining {};

// First total step count at which the greedy policy succeeds on setting A in
// at least half of the evaluation seeds, or -1 within the budget.
long long steps_to_threshold(RunManifest m, const fs::path& root, std::uint64_t eval_seed) {
  long long reached = -1;
  const auto seeds = episode_seeds(eval_seed, 10);
  const EvalSetting setting = EvalSetting::make(EvalSettingId::A);
  try {
    train(m, root, [&](const EpochRecord& rec, const CurriculumTrainer& trainer) {
      if (!trainer.stats().frozen()) return;
      AgentPolicy policy(trainer.agent());
      const EvalSummary s = summarize(evaluate(policy, setting, seeds, &trainer.stats()));
      if (2 * s.successes >= s.episodes) {
        reached = rec.total_steps;
        throw StopTraining{};
      }
    });
  } catch (const StopTraining&) {
  }
  return reached;
}

Verdict curriculum_criterion(const fs::path& work, const std::vector<std::uint64_t>& seeds) {
  int wins = 0;
  std::string per_seed;
  auto show = [](long long s) { return s < 0 ? std::string("never") : std::to_string(s); };
  for (std::uint64_t seed : seeds) {
    RunManifest cur = bundled_manifest("agent1");
    cur.name = "curriculum_seed" + std::to_string(seed);
    cur.seed = seed;
    cur.epoch_steps = 5000;
    cur.stages[0].steps = 60000;
    cur.stages[1].steps = 60000;

    RunManifest scratch = bundled_manifest("scratch");
    scratch.name = "scratch_seed" + std::to_string(seed);
    scratch.seed = seed;
    scratch.epoch_steps = 5000;
    scratch.stages[0].steps = 120000;

    const long long c = steps_to_threshold(cur, work, seed);
    const long long s = steps_to_threshold(scratch, work, seed);
    const bool win = c >= 0 && (s < 0 || c < s);
    wins += win;
    per_seed += " seed " + std::to_string(seed) + ": curriculum " + show(c) + " vs scratch " + show(s) + ";";
  }
  return {4, wins >= 2, "steps to 50% success on setting A:" + per_seed + " curriculum strictly earlier in " +
                            std::to_string(wins) + "/" + std::to_string(seeds.size()),
          false};
}

std::vector<Verdict> agent_criteria(const fs::path& work) {
  const EvalSetting setting = EvalSetting::make(EvalSettingId::A);
  const auto seeds = episode_seeds(1, 10);
  EvalSummary summary[2];
  const char* names[2] = {"agent2", "agent3"};
  for (int i = 0; i < 2; ++i) {
    const auto reports = train(bundled_manifest(names[i]), work);
    LoadedAgent loaded = load_agent(reports.back().checkpoint);
    AgentPolicy policy(loaded.agent);
    summary[i] = summarize(evaluate(policy, setting, seeds, &loaded.stats));
  }
  const double c2 = summary[0].total_collision_mean();
  const double c3 = summary[1].total_collision_mean();
  return {
      {5, summary[1].successes >= 8,
       "agent3 succeeds on setting A in " + std::to_string(summary[1].successes) + "/10 seeds (agent2 " +
           std::to_string(summary[0].successes) + "/10)",
       false},
      {6, c3 <= c2, "mean total collision time agent3 " + fixed(c3, 3) + " s, agent2 " + fixed(c2, 3) + " s", false},
  };
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism_criterion(const fs::path& work, const std::string& cli) {
  std::string metrics[2], evals[2];
  const fs::path manifest = data_source() / "manifests" / "smoke.manifest";
  for (int run = 0; run < 2; ++run) {
    const fs::path root = work / ("determinism" + std::to_string(run));
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string env = "OVERTAKE_DATA_DIR='" + root.string() + "' '" + cli + "' ";
    const fs::path log = root / "log.txt";
    const fs::path ckpt = root / "runs" / "smoke" / "stage3.ckpt";
    if (shell(env + "train --manifest '" + manifest.string() + "' --seed 7 > '" + log.string() + "' 2>&1") != 0 ||
        shell(env + "eval --checkpoint '" + ckpt.string() + "' --setting A --seed 7 >> '" + log.string() +
              "' 2>&1") != 0) {
      return {9, false, "command failed, see " + log.string()};
    }
    metrics[run] = slurp(root / "runs" / "smoke" / "metrics.csv");
    evals[run] = slurp(root / "runs" / "smoke" / "eval_A_seed7.csv");
  }
  const bool same = !metrics[0].empty() && !evals[0].empty() && metrics[0] == metrics[1] && evals[0] == evals[1];
  return {9, same,
          std::string("metrics.csv ") + (metrics[0] == metrics[1] ? "identical" : "differs") + " (" +
              std::to_string(metrics[0].size()) + " bytes), eval_A_seed7.csv " +
              (evals[0] == evals[1] ? "identical" : "differs") + " (" + std::to_string(evals[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "overtake_acceptance";
  std::vector<int> only;
  std::string cli = OVERTAKE_CLI_PATH;
  bool strict = false;
  app.add_option("--work-dir", work, "Scratch directory for training runs");
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--cli", cli, "Path to the overtake executable");
  app.add_flag("--strict", strict, "Let the learning criteria decide the exit status too");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}
                                            : std::set<int>(only.begin(), only.end());
  fs::create_directories(work);
  const std::vector<std::uint64_t> seeds = {1, 2, 3};

  bool ok = true;
  auto report = [&](const Verdict& v) {
    std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << v.id << ": " << v.detail << std::endl;
    if (!v.passed && (v.exact || strict)) ok = false;
  };
  auto timed = [&](int id, auto&& body) {
    if (!wanted.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      report({id, false, std::string("error: ") + e.what()});
    }
    std::cerr << "criterion " << id << " took "
              << fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1) << " s\n";
  };

  timed(1, [&] { report(from_suite(1, oracle::reward_oracle_suite(), 10)); });
  timed(2, [&] { report(from_suite(2, oracle::telescoping_suite(), 30)); });
  timed(3, [&] { report(lap_time_criterion(work, seeds)); });
  timed(4, [&] { report(curriculum_criterion(work, seeds)); });
  if (wanted.count(5) || wanted.count(6)) {
    timed(5, [&] {
      for (const auto& v : agent_criteria(work)) {
        if (wanted.count(v.id)) report(v);
      }
    });
  }
  timed(7, [&] { report(from_suite(7, oracle::gradient_suite(), 20)); });
  timed(8, [&] { report(from_suite(8, oracle::lidar_suite(), 20)); });
  timed(9, [&] { report(determinism_criterion(work, cli)); });
  timed(10, [&] { report(from_suite(10, oracle::buffer_suite(), 10)); });
  return ok ? 0 : 1;
}
