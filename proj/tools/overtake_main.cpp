#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "overtake/curriculum.hpp"
#include "overtake/errors.hpp"
#include "overtake/evaluation.hpp"
#include "overtake/manifest.hpp"
#include "overtake/track.hpp"
#include "suites.hpp"

namespace fs = std::filesystem;
using namespace overtake;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSelftestFailed = 3;

fs::path data_root() {
  if (const char* env = std::getenv("OVERTAKE_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return fs::current_path();
}

// Stage number encoded in a checkpoint name such as "stage2.ckpt".
int stage_of(const fs::path& checkpoint) {
  static const std::regex pattern(R"(stage(\d+))");
  std::smatch m;
  const std::string stem = checkpoint.stem().string();
  if (!std::regex_search(stem, m, pattern)) {
    throw UsageError("--resume expects a stage checkpoint named stage<k>.ckpt");
  }
  return std::stoi(m[1].str());
}

int run_train(const fs::path& manifest_path, std::optional<std::uint64_t> seed, const fs::path& resume) {
  RunManifest manifest = load_manifest(manifest_path);
  if (seed) manifest.seed = *seed;
  CurriculumTrainer trainer(manifest, data_root());
  trainer.set_progress_stream(&std::cout);
  int first_stage = manifest.stages.front().stage;
  if (!resume.empty()) {
    trainer.resume_from(resume);
    first_stage = stage_of(resume) + 1;
    std::cout << "resumed from " << resume.string() << "; continuing at stage " << first_stage << '\n';
  }
  const auto reports = trainer.run(first_stage);
  for (const auto& r : reports) {
    std::cout << "stage " << r.stage << ": " << r.steps << " steps, " << r.updates << " updates, checkpoint "
              << r.checkpoint.string() << '\n';
  }
  std::cout << "metrics: " << (trainer.output_dir() / "metrics.csv").string() << '\n';
  return kExitOk;
}

int run_eval(const fs::path& checkpoint, const std::string& setting_name, int episodes, std::uint64_t seed,
             fs::path out) {
  const EvalSetting setting = EvalSetting::parse(setting_name);
  LoadedAgent loaded = load_agent(checkpoint);
  AgentPolicy policy(loaded.agent);
  const auto results = evaluate(policy, setting, episode_seeds(seed, episodes), &loaded.stats);
  if (out.empty()) {
    out = checkpoint.parent_path() / ("eval_" + setting.name() + "_seed" + std::to_string(seed) + ".csv");
  }
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  std::ofstream csv(out);
  if (!csv) throw ConfigError("cannot write " + out.string());
  write_episode_csv(csv, results);
  const std::vector<std::string> labels{checkpoint.filename().string()};
  write_summary_table(std::cout, labels, {summarize(results)});
  std::cout << "episodes: " << out.string() << '\n';
  return kExitOk;
}

int run_compare(const std::vector<std::string>& checkpoints, const std::string& setting_name, int episodes,
                std::uint64_t seed, const fs::path& out) {
  const EvalSetting setting = EvalSetting::parse(setting_name);
  std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
  const Comparison cmp = compare_agents(paths, setting, episode_seeds(seed, episodes));
  write_summary_table(std::cout, cmp.labels, cmp.summaries);
  if (!out.empty()) {
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    std::ofstream csv(out);
    if (!csv) throw ConfigError("cannot write " + out.string());
    write_summary_csv(csv, cmp.labels, cmp.summaries);
  } else {
    write_summary_csv(std::cout, cmp.labels, cmp.summaries);
  }
  return kExitOk;
}

int run_trace(const fs::path& checkpoint, const std::string& setting_name, std::uint64_t seed,
              const fs::path& out) {
  const EvalSetting setting = EvalSetting::parse(setting_name);
  LoadedAgent loaded = load_agent(checkpoint);
  AgentPolicy policy(loaded.agent);
  const TraceExport exported = export_trace(policy, &loaded.stats, setting, seed, out);
  std::cout << "trace: " << exported.csv.string() << " (" << exported.rows << " rows)\n"
            << "plot:  " << exported.svg.string() << '\n'
            << "success " << (exported.metrics.success ? "yes" : "no") << ", travel time "
            << exported.metrics.total_travel_time << " s\n";
  return kExitOk;
}

int run_selftest() {
  bool ok = true;
  for (const auto& r : oracle::run_all_suites()) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << " (" << r.seconds << " s)\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitSelftestFailed;
}

int run_tracks(const fs::path& out) {
  fs::create_directories(out);
  for (auto name : bundled_track_names()) {
    const TrackGeometry track = bundled_track(name);
    const fs::path path = out / (std::string(name) + ".track");
    save_track(track, path);
    std::cout << path.string() << ": " << track.segment_count() << " points, length " << track.total_length()
              << " m\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum soft actor-critic for autonomous racing and overtaking", "overtake"};
  app.require_subcommand(1);

  fs::path manifest_path, resume;
  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "Run every stage of a training manifest");
  train->add_option("--manifest", manifest_path, "Manifest file")->required();
  train->add_option("--seed", train_seed, "Overrides the manifest seed");
  train->add_option("--resume", resume, "Continue after the stage stored in this checkpoint");

  fs::path checkpoint, out;
  std::string setting = "A";
  int episodes = 10;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint under setting A or B");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--setting", setting, "A (5 opponents, 50 m gaps) or B (200 m gaps)");
  eval->add_option("--episodes", episodes, "Number of evaluation episodes");
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--out", out, "Per-episode CSV (default: next to the checkpoint)");

  std::vector<std::string> checkpoints;
  auto* compare = app.add_subcommand("compare", "Evaluate several checkpoints on the same seeds");
  compare->add_option("--checkpoints", checkpoints, "Checkpoint files");
  compare->add_option("--setting", setting, "A or B");
  compare->add_option("--episodes", episodes, "Episodes per checkpoint");
  compare->add_option("--seed", seed, "Evaluation seed");
  compare->add_option("--out", out, "Summary CSV (default: stdout)");

  auto* trace = app.add_subcommand("trace", "Export one episode as a trace CSV and an SVG overlay");
  trace->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  trace->add_option("--setting", setting, "A or B");
  trace->add_option("--seed", seed, "Episode seed");
  trace->add_option("--out", out, "Output directory")->required();

  auto* selftest = app.add_subcommand("selftest", "Run the oracle property suites");

  fs::path tracks_out = "tracks";
  auto* tracks = app.add_subcommand("tracks", "Write the bundled tracks as text files");
  tracks->add_option("--out", tracks_out, "Output directory");

  if (argc <= 1) {
    std::cout << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return run_train(manifest_path, train_seed, resume);
    if (*eval) return run_eval(checkpoint, setting, episodes, seed, out);
    if (*compare) return run_compare(checkpoints, setting, episodes, seed, out);
    if (*trace) return run_trace(checkpoint, setting, seed, out);
    if (*selftest) return run_selftest();
    if (*tracks) return run_tracks(tracks_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitUsage;
}
