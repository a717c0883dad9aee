// Command-line front end: scenario runs, snapshot replay, trace metrics.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "rtpl/io.hpp"
#include "rtpl/scenario.hpp"
#include "rtpl/simulation.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kDiverged = 2, kIo = 3 };

rtpl::TrajectorySpec parse_trajectory(const std::string& text) {
  // sinusoid | growing-sinusoid | spline:SEED[:KNOTS[:DURATION]]
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw std::invalid_argument("empty trajectory");
  rtpl::TrajectorySpec spec;
  spec.kind = rtpl::trajectory_kind_from_string(parts[0]);
  if (spec.kind != rtpl::TrajectoryKind::RandomSpline) {
    if (parts.size() > 1) spec.duration = std::stod(parts[1]);
    return spec;
  }
  if (parts.size() > 1) spec.seed = std::stoull(parts[1]);
  if (parts.size() > 2) spec.knots = std::stoul(parts[2]);
  if (parts.size() > 3) spec.duration = std::stod(parts[3]);
  return spec;
}

void print_summary(const rtpl::ScenarioOutcome& out) {
  std::cout << std::left << std::setw(16) << "run" << std::right << std::setw(16) << "E(e1)" << std::setw(16)
            << "E(p~)" << std::setw(16) << "max|e1|" << '\n';
  for (const auto& r : out.manifest.summary)
    std::cout << std::left << std::setw(16) << r.name << std::right << std::setw(16) << r.metrics.ise_e1
              << std::setw(16) << r.metrics.ise_p << std::setw(16) << r.metrics.max_abs_e1 << '\n';
  if (!out.checkpoints.empty()) {
    std::cout << "\ncheckpoint  learned_for  method        E(e1)           E(p~)\n";
    for (const auto& c : out.checkpoints)
      std::cout << std::setw(10) << c.index << std::setw(13) << c.learned_for << "  " << std::left << std::setw(6)
                << c.method << std::right << std::setw(16) << c.ise_e1 << std::setw(16) << c.ise_p << '\n';
  }
}

int cmd_run(const std::string& scenario, const std::string& column, long long seed, const std::string& out_dir,
            double duration, const std::string& config_file) {
  rtpl::json cfg = rtpl::json::object();
  if (!config_file.empty()) {
    std::ifstream is(config_file);
    if (!is) {
      std::cerr << "error: cannot read config " << config_file << '\n';
      return kIo;
    }
    try {
      cfg = rtpl::json::parse(is);
    } catch (const rtpl::json::parse_error& e) {
      std::cerr << config_file << ": invalid JSON: " << e.what() << '\n';
      return kUsage;
    }
  }
  if (!scenario.empty()) cfg["scenario"] = scenario;
  if (!column.empty()) cfg["column"] = column;
  if (seed >= 0) cfg["seed"] = seed;
  if (!out_dir.empty()) cfg["out"] = out_dir;
  if (duration > 0.0) cfg["duration"] = duration;

  const auto parsed = rtpl::validate_config(cfg);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors) std::cerr << "config error " << e << '\n';
    return kUsage;
  }
  const auto outcome = rtpl::run_scenario(*parsed.spec);
  print_summary(outcome);
  std::cout << "\nwrote " << outcome.manifest.outputs.size() << " files to " << parsed.spec->out << '\n';
  return kOk;
}

int cmd_replay(const std::string& snapshot, const std::string& trajectory, const std::string& plant,
               double duration, double dt, const std::string& out_file) {
  const rtpl::SnapshotFile snap = rtpl::load_snapshot(snapshot);
  const rtpl::Trajectory traj(parse_trajectory(trajectory));

  rtpl::PlantSetting setting = rtpl::PlantSetting::Nominal;
  if (plant == "long") setting = rtpl::PlantSetting::Long;
  else if (plant == "perturbed") setting = rtpl::PlantSetting::Perturbed;
  else if (plant != "nominal") throw std::invalid_argument("unknown plant '" + plant + "'");

  rtpl::Controller c;
  c.network = snap.network();
  c.learner = rtpl::FrozenLearner{snap.knowledge.weights};
  rtpl::SimConfig cfg;
  cfg.dt = dt;
  cfg.duration = duration > 0.0 ? duration : traj.duration();
  const auto result = rtpl::run_closed_loop(rtpl::make_plant(setting), traj, c, cfg);
  const auto m = rtpl::compute_metrics(result.trace);
  if (!out_file.empty()) {
    std::ofstream os(out_file);
    if (!os) throw std::runtime_error("cannot write " + out_file);
    rtpl::write_trace_csv(os, result.trace);
  }
  std::cout << std::setprecision(10) << "method " << snap.knowledge.method << "\nise_e1 " << m.ise_e1 << "\nise_p "
            << m.ise_p << "\nmax_abs_e1 " << m.max_abs_e1 << '\n';
  return kOk;
}

int cmd_metrics(const std::string& trace_file) {
  std::ifstream is(trace_file);
  if (!is) {
    std::cerr << "error: cannot read " << trace_file << '\n';
    return kIo;
  }
  const rtpl::Trace trace = rtpl::read_trace_csv(is);
  const auto m = rtpl::compute_metrics(trace);
  std::cout << std::setprecision(17) << "rows " << trace.rows.size() << "\nise_e1 " << m.ise_e1 << "\nise_p " << m.ise_p
            << "\nmax_abs_e1 " << m.max_abs_e1 << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RBF learning-control laboratory: PD, SGDL and RTPL on the inverted pendulum"};
  app.require_subcommand(1);

  std::string scenario, column, out_dir, config_file;
  long long seed = -1;
  double duration = 0.0;
  auto* run = app.add_subcommand("run", "Run a scenario (A, B, C, D or custom)");
  run->add_option("scenario", scenario, "Scenario id; may come from --config instead");
  run->add_option("--column", column, "Hyperparameter column")->check(CLI::IsMember({"a", "b", "c"}));
  run->add_option("--seed", seed, "Seed for random trajectories");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--duration", duration, "Learning duration in seconds");
  run->add_option("--config", config_file, "JSON scenario configuration")->check(CLI::ExistingFile);

  std::string snapshot, trajectory = "sinusoid", plant = "nominal", replay_out;
  double replay_duration = 0.0, dt = 0.005;
  auto* replay = app.add_subcommand("replay", "Drive the plant with a frozen knowledge snapshot");
  replay->add_option("--snapshot", snapshot, "Knowledge snapshot file")->required()->check(CLI::ExistingFile);
  replay->add_option("--trajectory", trajectory, "sinusoid | growing-sinusoid | spline:SEED[:KNOTS[:DURATION]]");
  replay->add_option("--plant", plant, "nominal | long | perturbed");
  replay->add_option("--duration", replay_duration, "Seconds (default: whole trajectory)");
  replay->add_option("--dt", dt, "Control period");
  replay->add_option("--out", replay_out, "Trace CSV to write");

  std::string trace_file;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a trace CSV");
  metrics->add_option("--trace", trace_file, "Trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(scenario, column, seed, out_dir, duration, config_file);
    if (*replay) return cmd_replay(snapshot, trajectory, plant, replay_duration, dt, replay_out);
    if (*metrics) return cmd_metrics(trace_file);
  } catch (const rtpl::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const rtpl::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
