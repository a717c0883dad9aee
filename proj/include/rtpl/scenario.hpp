#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "rtpl/control.hpp"
#include "rtpl/dynamics.hpp"
#include "rtpl/io.hpp"
#include "rtpl/rbf_network.hpp"
#include "rtpl/simulation.hpp"
#include "rtpl/smrls.hpp"

namespace rtpl {

inline constexpr const char* kVersion = "0.1.0";

/// Learning hyperparameters of one experiment column.
struct Hyper {
  double sigma_rtpl = 0.3;
  double sigma_sgdl = 0.3;
  double eta0 = 5.0;
  double ramp = 2.0;
  double p0 = 100.0;
  double gamma = 0.1;  // Gamma = gamma * I

  bool operator==(const Hyper&) const = default;
};

inline Hyper table_column(char column) {
  switch (column) {
    case 'a': return {0.3, 0.3, 5.0, 2.0, 100.0, 0.1};
    case 'b': return {2.0, 2.0, 5.0, 2.0, 100.0, 0.005};
    case 'c': return {0.5, 0.5, 5.0, 2.0, 100.0, 0.05};
  }
  throw std::invalid_argument(std::string("unknown hyperparameter column '") + column + "'");
}

enum class ScenarioId { A, B, C, D, Custom };

inline std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::A: return "A";
    case ScenarioId::B: return "B";
    case ScenarioId::C: return "C";
    case ScenarioId::D: return "D";
    case ScenarioId::Custom: return "custom";
  }
  return "?";
}

inline std::optional<ScenarioId> scenario_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (s == "A" || s == "A-REPETITIVE") return ScenarioId::A;
  if (s == "B" || s == "B-NONREPETITIVE") return ScenarioId::B;
  if (s == "C" || s == "C-PERTURBATION") return ScenarioId::C;
  if (s == "D" || s == "D-GENERALIZATION") return ScenarioId::D;
  if (s == "CUSTOM") return ScenarioId::Custom;
  return std::nullopt;
}

enum class PlantSetting { Nominal, Perturbed, Long };

inline std::string to_string(PlantSetting p) {
  switch (p) {
    case PlantSetting::Nominal: return "nominal";
    case PlantSetting::Perturbed: return "perturbed";
    case PlantSetting::Long: return "long";
  }
  return "?";
}

inline Plant make_plant(PlantSetting p) {
  switch (p) {
    case PlantSetting::Nominal: return pendulum_plant(PendulumParams{});
    case PlantSetting::Perturbed: return pendulum_plant(ParamSchedule(perturbation_schedule));
    case PlantSetting::Long: {
      PendulumParams params;
      params.half_length = 0.8;
      return pendulum_plant(params);
    }
  }
  throw std::invalid_argument("unknown plant setting");
}

/// Fully resolved experiment description.
struct ScenarioSpec {
  ScenarioId id = ScenarioId::A;
  char column = 'a';
  Hyper hyper = table_column('a');
  std::vector<double> gains{2.0, 5.0};
  std::vector<std::string> methods{"PD", "SGDL", "RTPL"};
  bool reuse = true;
  std::uint64_t seed = 1;
  std::string out = "out";
  double dt = 0.005;
  std::size_t substeps = 1;
  std::vector<double> x0{std::numbers::pi / 60.0, 0.0};
  double duration = 100.0;
  double reuse_duration = 100.0;
  double extraction_window = 5.0;
  double checkpoint_interval = 0.0;  // 0 disables
  TrajectorySpec learn_trajectory;
  TrajectorySpec reuse_trajectory;
  PlantSetting learn_plant = PlantSetting::Nominal;
  PlantSetting reuse_plant = PlantSetting::Nominal;
  std::vector<std::size_t> lattice{5, 5};
  std::vector<std::size_t> partitions{100, 100};

  bool operator==(const ScenarioSpec&) const = default;

  bool has(const std::string& m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }
};

/// Defaults for a preset scenario before user overrides.
inline ScenarioSpec preset(ScenarioId id, std::uint64_t seed) {
  ScenarioSpec s;
  s.id = id;
  s.seed = seed;
  TrajectorySpec sinusoid{TrajectoryKind::Sinusoid, seed, 20, 100.0};
  switch (id) {
    case ScenarioId::A:
    case ScenarioId::Custom:
      s.learn_trajectory = s.reuse_trajectory = sinusoid;
      break;
    case ScenarioId::B:
      s.learn_trajectory = s.reuse_trajectory = {TrajectoryKind::RandomSpline, seed, 20, 100.0};
      break;
    case ScenarioId::C:
      s.learn_trajectory = s.reuse_trajectory = sinusoid;
      s.learn_plant = PlantSetting::Perturbed;
      s.reuse_plant = PlantSetting::Long;
      break;
    case ScenarioId::D:
      s.duration = 300.0;
      s.checkpoint_interval = 30.0;
      s.learn_trajectory = {TrajectoryKind::RandomSpline, seed, 60, 300.0};
      s.reuse_trajectory = {TrajectoryKind::GrowingSinusoid, seed, 20, 100.0};
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

using json = nlohmann::json;

inline json to_json(const TrajectorySpec& t) {
  return json{{"type", to_string(t.kind)}, {"seed", t.seed}, {"knots", t.knots}, {"duration", t.duration}};
}

/// Complete config echo; re-parses to the same spec.
inline json to_json(const ScenarioSpec& s) {
  return json{
      {"scenario", to_string(s.id)},
      {"column", std::string(1, s.column)},
      {"hyper",
       {{"sigma_rtpl", s.hyper.sigma_rtpl},
        {"sigma_sgdl", s.hyper.sigma_sgdl},
        {"eta0", s.hyper.eta0},
        {"T0", s.hyper.ramp},
        {"p0", s.hyper.p0},
        {"gamma", s.hyper.gamma}}},
      {"gains", s.gains},
      {"methods", s.methods},
      {"reuse", s.reuse},
      {"seed", s.seed},
      {"out", s.out},
      {"dt", s.dt},
      {"substeps", s.substeps},
      {"x0", s.x0},
      {"duration", s.duration},
      {"reuse_duration", s.reuse_duration},
      {"extraction_window", s.extraction_window},
      {"checkpoint_interval", s.checkpoint_interval},
      {"trajectory", to_json(s.learn_trajectory)},
      {"reuse_trajectory", to_json(s.reuse_trajectory)},
      {"plant", to_string(s.learn_plant)},
      {"reuse_plant", to_string(s.reuse_plant)},
      {"lattice", s.lattice},
      {"partitions", s.partitions},
  };
}

struct ConfigResult {
  std::optional<ScenarioSpec> spec;
  std::vector<std::string> errors;

  bool ok() const { return spec.has_value(); }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& where, const std::string& what) { errors_.push_back(where + ": " + what); }

  void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items())
      if (!allowed.count(key)) error(where + "/" + key, "unknown key");
  }

  void number(const json& obj, const std::string& key, const std::string& where, double& out, bool positive,
              bool nonneg = false) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) return error(where + "/" + key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) return error(where + "/" + key, "must be finite");
    if (positive && !(d > 0.0)) return error(where + "/" + key, "must be > 0, got " + v.dump());
    if (nonneg && d < 0.0) return error(where + "/" + key, "must be >= 0, got " + v.dump());
    out = d;
  }

  template <class Int>
  void integer(const json& obj, const std::string& key, const std::string& where, Int& out, long long min) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) return error(where + "/" + key, "expected an integer");
    if (v.is_number_unsigned() ? false : v.get<long long>() < min)
      return error(where + "/" + key, "must be >= " + std::to_string(min));
    out = v.get<Int>();
  }

  template <class T>
  void list(const json& obj, const std::string& key, const std::string& where, std::vector<T>& out,
            std::size_t size, bool positive) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_array() || v.size() != size)
      return error(where + "/" + key, "expected an array of " + std::to_string(size));
    std::vector<T> tmp;
    for (const auto& e : v) {
      if (!e.is_number()) return error(where + "/" + key, "expected numbers");
      if (positive && !(e.get<double>() > 0.0)) return error(where + "/" + key, "entries must be > 0");
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) return error(where + "/" + key, "expected integers");
      }
      tmp.push_back(e.get<T>());
    }
    out = tmp;
  }

  void trajectory(const json& obj, const std::string& key, TrajectorySpec& out) {
    if (!obj.contains(key)) return;
    const std::string where = "/" + key;
    const auto& v = obj.at(key);
    if (!v.is_object()) return error(where, "expected an object");
    check_keys(v, where, {"type", "seed", "knots", "duration"});
    if (!v.contains("type") || !v.at("type").is_string()) {
      error(where + "/type", "required string (sinusoid | growing-sinusoid | spline)");
    } else {
      try {
        out.kind = trajectory_kind_from_string(v.at("type").get<std::string>());
      } catch (const std::invalid_argument& e) {
        error(where + "/type", e.what());
      }
    }
    integer(v, "seed", where, out.seed, 0);
    integer(v, "knots", where, out.knots, 4);
    number(v, "duration", where, out.duration, true);
  }

  void plant(const json& obj, const std::string& key, PlantSetting& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "nominal") out = PlantSetting::Nominal;
    else if (s == "perturbed") out = PlantSetting::Perturbed;
    else if (s == "long") out = PlantSetting::Long;
    else error("/" + key, "expected one of nominal | perturbed | long");
  }

 private:
  std::vector<std::string>& errors_;
};

}  // namespace detail

/// Parses and range-checks a JSON scenario config. Unset fields take the
/// preset for the scenario, with hyperparameters from the chosen column.
inline ConfigResult validate_config(const json& cfg) {
  ConfigResult result;
  auto& errors = result.errors;
  detail::ConfigReader r(errors);
  if (!cfg.is_object()) {
    errors.push_back("/: expected a JSON object");
    return result;
  }
  r.check_keys(cfg, "", {"scenario", "column", "hyper", "gains", "methods", "reuse", "seed", "out", "dt",
                         "substeps", "x0", "duration", "reuse_duration", "extraction_window",
                         "checkpoint_interval", "trajectory", "reuse_trajectory", "plant", "reuse_plant",
                         "lattice", "partitions"});

  std::optional<ScenarioId> id;
  if (!cfg.contains("scenario")) {
    errors.push_back("/scenario: required field missing (A | B | C | D | custom)");
  } else if (!cfg.at("scenario").is_string() || !(id = scenario_from_string(cfg.at("scenario").get<std::string>()))) {
    errors.push_back("/scenario: expected one of A | B | C | D | custom");
  }
  if (id == ScenarioId::Custom) {
    for (const char* req : {"trajectory", "duration"})
      if (!cfg.contains(req)) errors.push_back(std::string("/") + req + ": required field missing for custom scenario");
  }

  std::uint64_t seed = 1;
  r.integer(cfg, "seed", "", seed, 0);
  ScenarioSpec s = preset(id.value_or(ScenarioId::A), seed);

  if (cfg.contains("column")) {
    const auto& c = cfg.at("column");
    if (!c.is_string() || c.get<std::string>().size() != 1 || std::string("abc").find(c.get<std::string>()[0]) == std::string::npos)
      errors.push_back("/column: expected one of a | b | c");
    else
      s.column = c.get<std::string>()[0];
  }
  s.hyper = table_column(s.column);
  if (cfg.contains("hyper")) {
    const auto& h = cfg.at("hyper");
    if (!h.is_object()) {
      errors.push_back("/hyper: expected an object");
    } else {
      r.check_keys(h, "/hyper", {"sigma_rtpl", "sigma_sgdl", "eta0", "T0", "p0", "gamma"});
      r.number(h, "sigma_rtpl", "/hyper", s.hyper.sigma_rtpl, true);
      r.number(h, "sigma_sgdl", "/hyper", s.hyper.sigma_sgdl, true);
      r.number(h, "eta0", "/hyper", s.hyper.eta0, true);
      r.number(h, "T0", "/hyper", s.hyper.ramp, true);
      r.number(h, "p0", "/hyper", s.hyper.p0, true);
      r.number(h, "gamma", "/hyper", s.hyper.gamma, true);
    }
  }
  r.list(cfg, "gains", "", s.gains, 2, true);
  if (cfg.contains("methods")) {
    const auto& m = cfg.at("methods");
    std::vector<std::string> methods;
    if (!m.is_array() || m.empty()) {
      errors.push_back("/methods: expected a nonempty array drawn from PD | SGDL | RTPL");
    } else {
      for (const auto& e : m) {
        const std::string name = e.is_string() ? e.get<std::string>() : "";
        if (name != "PD" && name != "SGDL" && name != "RTPL")
          errors.push_back("/methods: unknown method " + e.dump());
        else if (std::find(methods.begin(), methods.end(), name) == methods.end())
          methods.push_back(name);
      }
      s.methods = methods;
    }
  }
  if (cfg.contains("reuse")) {
    if (!cfg.at("reuse").is_boolean()) errors.push_back("/reuse: expected a boolean");
    else s.reuse = cfg.at("reuse").get<bool>();
  }
  if (cfg.contains("out")) {
    if (!cfg.at("out").is_string() || cfg.at("out").get<std::string>().empty()) errors.push_back("/out: expected a path");
    else s.out = cfg.at("out").get<std::string>();
  }
  r.number(cfg, "dt", "", s.dt, true);
  r.integer(cfg, "substeps", "", s.substeps, 1);
  r.list(cfg, "x0", "", s.x0, 2, false);
  r.number(cfg, "duration", "", s.duration, true);
  r.number(cfg, "reuse_duration", "", s.reuse_duration, true);
  r.number(cfg, "extraction_window", "", s.extraction_window, true);
  r.number(cfg, "checkpoint_interval", "", s.checkpoint_interval, false, true);
  r.trajectory(cfg, "trajectory", s.learn_trajectory);
  if (id == ScenarioId::Custom && !cfg.contains("reuse_trajectory")) s.reuse_trajectory = s.learn_trajectory;
  r.trajectory(cfg, "reuse_trajectory", s.reuse_trajectory);
  r.plant(cfg, "plant", s.learn_plant);
  r.plant(cfg, "reuse_plant", s.reuse_plant);
  r.list(cfg, "lattice", "", s.lattice, 2, true);
  r.list(cfg, "partitions", "", s.partitions, 2, true);

  if (errors.empty()) {
    if (s.lattice[0] < 2 || s.lattice[1] < 2) errors.push_back("/lattice: need at least 2 neurons per dimension");
    if (s.learn_trajectory.duration < s.duration * (1.0 - 1e-12))
      errors.push_back("/duration: exceeds learning trajectory duration");
    if (s.reuse && s.reuse_trajectory.duration < s.reuse_duration * (1.0 - 1e-12))
      errors.push_back("/reuse_duration: exceeds reuse trajectory duration");
    if (s.extraction_window > s.duration) errors.push_back("/extraction_window: longer than the learning run");
    if (s.checkpoint_interval > s.duration) errors.push_back("/checkpoint_interval: longer than the learning run");
    if (s.dt > s.duration) errors.push_back("/dt: longer than the learning run");
  }
  if (errors.empty()) result.spec = s;
  return result;
}

inline ConfigResult validate_config(const std::string& text) {
  json cfg;
  try {
    cfg = json::parse(text);
  } catch (const json::parse_error& e) {
    return {std::nullopt, {std::string("/: invalid JSON: ") + e.what()}};
  }
  return validate_config(cfg);
}

// ---------------------------------------------------------------------------
// Orchestration

struct RunMetrics {
  std::string name;    // e.g. "learn_RTPL"
  std::string phase;   // learn | reuse
  std::string method;  // PD | SGDL | RTPL
  std::string trace_file;
  Metrics metrics;
};

struct CheckpointRow {
  std::size_t index;  // 1-based
  double learned_for;
  std::string method;
  double ise_e1;
  double ise_p;
};

struct RunManifest {
  json config;
  std::string version = kVersion;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> outputs;
  std::vector<RunMetrics> summary;
  double rtpl_gain_lmin = kAbsent;  // smallest observed eigenvalue of P

  json to_json() const {
    json runs = json::object();
    for (const auto& r : summary)
      runs[r.name] = {{"phase", r.phase},
                      {"method", r.method},
                      {"trace", r.trace_file},
                      {"ise_e1", r.metrics.ise_e1},
                      {"ise_p", r.metrics.ise_p},
                      {"max_abs_e1", r.metrics.max_abs_e1}};
    json j{{"config", config},        {"version", version}, {"wall_clock_seconds", wall_clock_seconds},
           {"outputs", outputs},      {"summary", runs}};
    if (!std::isnan(rtpl_gain_lmin)) j["rtpl_gain_lmin_observed"] = rtpl_gain_lmin;
    return j;
  }
};

struct ScenarioOutcome {
  RunManifest manifest;
  std::map<std::string, Trace> traces;  // keyed by run name
  std::map<std::string, SnapshotFile> knowledge;  // keyed by method
  std::vector<CheckpointRow> checkpoints;

  const RunMetrics& run(const std::string& name) const {
    for (const auto& r : manifest.summary)
      if (r.name == name) return r;
    throw std::out_of_range("no run named " + name);
  }
};

namespace detail {

struct Setup {
  LatticeSpec lattice;
  PartitionGrid grid;
  Normalization normalization;  // of the learning trajectory
  Trajectory learn;
  Trajectory reuse;
  Plant learn_plant;
  Plant reuse_plant;
};

inline Setup make_setup(const ScenarioSpec& s) {
  Trajectory learn(s.learn_trajectory);
  Trajectory reuse(s.reuse_trajectory);
  return {LatticeSpec{{-1.0, -1.0}, {1.0, 1.0}, s.lattice},
          PartitionGrid{{-1.0, -1.0}, {1.0, 1.0}, s.partitions},
          learn.normalization(),
          std::move(learn),
          std::move(reuse),
          make_plant(s.learn_plant),
          make_plant(s.reuse_plant)};
}

inline SimConfig sim_config(const ScenarioSpec& s, double duration, bool keep_history) {
  SimConfig c;
  c.dt = s.dt;
  c.substeps = s.substeps;
  c.duration = duration;
  c.x0 = Eigen::Vector2d(s.x0[0], s.x0[1]);
  c.keep_weight_history = keep_history;
  return c;
}

inline Controller make_controller(const ScenarioSpec& s, const Setup& setup, const std::string& method) {
  Controller c;
  c.gains.k = s.gains;
  const double width = method == "SGDL" ? s.hyper.sigma_sgdl : s.hyper.sigma_rtpl;
  c.network = build_lattice(setup.lattice, width);
  const auto n = static_cast<Eigen::Index>(c.network.size());
  if (method == "SGDL") c.learner = SgdLearner{Eigen::VectorXd::Constant(n, s.hyper.gamma)};
  else if (method == "RTPL") c.learner = RtplLearner{{s.hyper.eta0, s.hyper.ramp}, SmrlsState(s.hyper.p0, c.network.size(), setup.grid)};
  return c;
}

inline Controller frozen_controller(const ScenarioSpec& s, const Setup& setup, const std::string& method,
                                    const Eigen::VectorXd& weights) {
  Controller c;
  c.gains.k = s.gains;
  c.network = build_lattice(setup.lattice, method == "SGDL" ? s.hyper.sigma_sgdl : s.hyper.sigma_rtpl);
  c.learner = FrozenLearner{weights};
  return c;
}

inline void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace detail

/// Learning runs for each method, knowledge extraction (windowed average for
/// SGDL, final weights for RTPL), frozen-feedforward reuse runs, optional
/// checkpoint evaluation, and file output when `write_files` is set.
inline ScenarioOutcome run_scenario(const ScenarioSpec& s, bool write_files = true) {
  const auto started = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  const detail::Setup setup = detail::make_setup(s);
  ScenarioOutcome out;
  out.manifest.config = to_json(s);

  // learning phase, one independent run per method
  std::map<std::string, std::future<RunResult>> learning;
  for (const auto& m : s.methods) {
    const bool history = m != "PD";
    learning[m] = std::async(std::launch::async, [&, m, history] {
      return run_closed_loop(setup.learn_plant, setup.learn, detail::make_controller(s, setup, m),
                             detail::sim_config(s, s.duration, history));
    });
  }
  std::map<std::string, RunResult> learned;
  for (auto& [m, f] : learning) learned.emplace(m, f.get());

  auto record = [&](const std::string& phase, const std::string& method, Trace trace) {
    const std::string name = phase + "_" + method;
    out.manifest.summary.push_back({name, phase, method, name + ".csv", compute_metrics(trace)});
    out.traces.emplace(name, std::move(trace));
  };

  for (const auto& m : s.methods) {
    RunResult& r = learned.at(m);
    if (m == "RTPL") out.manifest.rtpl_gain_lmin = r.gain_lmin_observed;
    if (m != "PD") {
      KnowledgeSnapshot k =
          m == "RTPL" ? extract_final(std::get<RtplLearner>(r.controller.learner).memory, s.duration)
                      : extract_integral(r.history, s.duration - s.extraction_window, s.extraction_window);
      out.knowledge[m] = SnapshotFile{std::move(k), setup.lattice,
                                      m == "SGDL" ? s.hyper.sigma_sgdl : s.hyper.sigma_rtpl,
                                      setup.normalization, s.hyper.p0, setup.grid};
    }
    record("learn", m, std::move(r.trace));
  }

  // reuse phase: PD baseline plus frozen learned feedforward
  if (s.reuse) {
    std::map<std::string, std::future<RunResult>> reuse;
    const SimConfig cfg = detail::sim_config(s, s.reuse_duration, false);
    for (const auto& m : s.methods) {
      Controller c = m == "PD" ? detail::make_controller(s, setup, "PD")
                               : detail::frozen_controller(s, setup, m, out.knowledge.at(m).knowledge.weights);
      reuse[m] = std::async(std::launch::async, [&, c = std::move(c)]() mutable {
        return run_closed_loop(setup.reuse_plant, setup.reuse, std::move(c), cfg);
      });
    }
    for (const auto& m : s.methods) record("reuse", m, reuse.at(m).get().trace);
  }

  // knowledge checkpoints along the learning run, each replayed on the reuse task
  if (s.checkpoint_interval > 0.0 && s.reuse) {
    const auto count = static_cast<std::size_t>(std::floor(s.duration / s.checkpoint_interval + 1e-9));
    const SimConfig cfg = detail::sim_config(s, s.reuse_duration, false);
    for (const auto& m : s.methods) {
      if (m == "PD") continue;
      const WeightHistory& h = learned.at(m).history;
      std::vector<std::future<CheckpointRow>> jobs;
      for (std::size_t c = 1; c <= count; ++c) {
        const double t = s.checkpoint_interval * static_cast<double>(c);
        Eigen::VectorXd w;
        if (m == "RTPL") {
          const auto k = static_cast<std::size_t>(std::llround(t / s.dt));
          w = h.weights.at(k);
        } else {
          w = extract_integral(h, t - s.extraction_window, s.extraction_window).weights;
        }
        jobs.push_back(std::async(std::launch::async, [&, c, t, m, w] {
          const RunResult r = run_closed_loop(setup.reuse_plant, setup.reuse, detail::frozen_controller(s, setup, m, w), cfg);
          const Metrics mm = compute_metrics(r.trace);
          return CheckpointRow{c, t, m, mm.ise_e1, mm.ise_p};
        }));
      }
      for (auto& j : jobs) out.checkpoints.push_back(j.get());
    }
  }

  out.manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (write_files) {
    const fs::path dir(s.out);
    fs::create_directories(dir);
    for (const auto& [name, trace] : out.traces) {
      detail::write_text(dir / (name + ".csv"), [&](std::ostream& os) { write_trace_csv(os, trace); });
      detail::write_text(dir / ("weights_" + name + ".csv"), [&](std::ostream& os) { write_weights_csv(os, trace.weights); });
      out.manifest.outputs.push_back(name + ".csv");
      out.manifest.outputs.push_back("weights_" + name + ".csv");
    }
    for (const auto& [m, snap] : out.knowledge) {
      const std::string file = "knowledge_" + m + ".snap";
      save_snapshot((dir / file).string(), snap);
      out.manifest.outputs.push_back(file);
    }
    detail::write_text(dir / "metrics.csv", [&](std::ostream& os) {
      os << "run,phase,method,ise_e1,ise_p,max_abs_e1\n" << std::setprecision(17);
      for (const auto& r : out.manifest.summary)
        os << r.name << ',' << r.phase << ',' << r.method << ',' << r.metrics.ise_e1 << ',' << r.metrics.ise_p << ','
           << r.metrics.max_abs_e1 << '\n';
    });
    out.manifest.outputs.push_back("metrics.csv");
    if (!out.checkpoints.empty()) {
      detail::write_text(dir / "checkpoints.csv", [&](std::ostream& os) {
        os << "checkpoint,learned_for,method,ise_e1,ise_p\n" << std::setprecision(17);
        for (const auto& c : out.checkpoints)
          os << c.index << ',' << c.learned_for << ',' << c.method << ',' << c.ise_e1 << ',' << c.ise_p << '\n';
      });
      out.manifest.outputs.push_back("checkpoints.csv");
    }
    out.manifest.outputs.push_back("manifest.json");
    detail::write_text(dir / "manifest.json", [&](std::ostream& os) { os << out.manifest.to_json().dump(2) << '\n'; });
  }
  return out;
}

}  // namespace rtpl
