#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "rtpl/io.hpp"
#include "rtpl/scenario.hpp"

using namespace rtpl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rtpl_test_" + name);
  fs::remove_all(dir);
  return dir;
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

ScenarioSpec short_custom(const fs::path& out) {
  auto r = validate_config(json{{"scenario", "custom"},
                                {"trajectory", {{"type", "spline"}, {"seed", 4}, {"knots", 8}, {"duration", 6.0}}},
                                {"duration", 6.0},
                                {"reuse_duration", 6.0},
                                {"checkpoint_interval", 3.0},
                                {"extraction_window", 2.0},
                                {"out", out.string()}});
  if (!r.ok()) throw std::runtime_error(r.errors.front());
  return *r.spec;
}

}  // namespace

TEST(TraceCsv, RoundTripIsExact) {
  Controller c;
  c.network = build_lattice({{-1, -1}, {1, 1}, {5, 5}}, 0.3);
  c.learner = RtplLearner{RtplGain{}, SmrlsState(100.0, 25, {{-1, -1}, {1, 1}, {100, 100}})};
  SimConfig cfg;
  cfg.duration = 3.0;
  const Trace trace = run_closed_loop(pendulum_plant(), Trajectory({}), c, cfg).trace;

  std::stringstream ss;
  write_trace_csv(ss, trace);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  EXPECT_EQ(header, kTraceHeader);

  const Trace back = read_trace_csv(ss);
  ASSERT_EQ(back.rows.size(), trace.rows.size());
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].t, trace.rows[i].t);
    EXPECT_EQ(back.rows[i].e, trace.rows[i].e);
    EXPECT_EQ(back.rows[i].p_err(), trace.rows[i].p_err());
    EXPECT_EQ(back.rows[i].k_e, trace.rows[i].k_e);
  }
  const auto m0 = compute_metrics(trace);
  const auto m1 = compute_metrics(back);
  EXPECT_NEAR(m1.ise_e1, m0.ise_e1, 1e-12);
  EXPECT_NEAR(m1.ise_p, m0.ise_p, 1e-12);
  EXPECT_EQ(m1.max_abs_e1, m0.max_abs_e1);
}

TEST(TraceCsv, AbsentDiagnosticsAreEmptyFields) {
  Controller pd;
  pd.network = build_lattice({{-1, -1}, {1, 1}, {2, 2}}, 0.3);
  SimConfig cfg;
  cfg.duration = 0.01;
  std::stringstream ss;
  write_trace_csv(ss, run_closed_loop(pendulum_plant(), Trajectory({}), pd, cfg).trace);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  EXPECT_EQ(line.substr(line.size() - 3), ",,,");
  ss.seekg(0);
  const Trace back = read_trace_csv(ss);
  EXPECT_TRUE(std::isnan(back.rows[0].p_lmax));
}

TEST(TraceCsv, RejectsMalformedInput) {
  std::istringstream wrong_header("t,x1\n0,1\n");
  EXPECT_THROW(read_trace_csv(wrong_header), FormatError);
  std::istringstream short_row(std::string(kTraceHeader) + "\n0,1,2\n");
  EXPECT_THROW(read_trace_csv(short_row), FormatError);
  std::istringstream bad_number(std::string(kTraceHeader) + "\n0,1,2,3,4,5,6,7,8,9,10,11,12,13,x\n");
  EXPECT_THROW(read_trace_csv(bad_number), FormatError);
}

TEST(Snapshot, RoundTrip) {
  SmrlsState memory(100.0, 4, {{-1, -1}, {1, 1}, {10, 10}});
  const auto net = build_lattice({{-1, -1}, {1, 1}, {2, 2}}, 0.7);
  for (int k = 0; k < 40; ++k) {
    const Eigen::Vector2d x(std::sin(0.3 * k), std::cos(0.7 * k));
    memory.step(net.regressor(x), 0.1 * k, x);
  }
  SnapshotFile snap{extract_final(memory, 40.0), {{-1, -1}, {1, 1}, {2, 2}}, 0.7,
                    Normalization::from_range({0.8, 1.6}), 100.0, memory.grid()};
  std::stringstream ss;
  write_snapshot(ss, snap);
  const SnapshotFile back = read_snapshot(ss);
  EXPECT_EQ(back.knowledge.weights, snap.knowledge.weights);
  EXPECT_EQ(back.knowledge.method, "RTPL");
  EXPECT_EQ(back.knowledge.learned_for, 40.0);
  EXPECT_EQ(back.width, 0.7);
  EXPECT_EQ(back.normalization, snap.normalization);
  EXPECT_EQ(back.grid, snap.grid);
  ASSERT_EQ(back.knowledge.memory.size(), snap.knowledge.memory.size());
  for (std::size_t i = 0; i < back.knowledge.memory.size(); ++i) {
    EXPECT_EQ(back.knowledge.memory[i].first, snap.knowledge.memory[i].first);
    EXPECT_EQ(back.knowledge.memory[i].second.phi, snap.knowledge.memory[i].second.phi);
    EXPECT_EQ(back.knowledge.memory[i].second.target, snap.knowledge.memory[i].second.target);
  }
  EXPECT_EQ(back.network().evaluate(Eigen::Vector2d(0.2, 0.1)), net.regressor(Eigen::Vector2d(0.2, 0.1)).dot(memory.weights()));

  // the stored memory rebuilds the learner exactly enough to continue
  const auto restored = SmrlsState::restore(back.p0, back.grid, back.knowledge.weights, back.knowledge.memory);
  EXPECT_TRUE(restored.gain().isApprox(memory.gain(), 1e-9));
}

TEST(Snapshot, RejectsBrokenFiles) {
  std::istringstream no_format("method RTPL\nweights 1\n0\n");
  EXPECT_THROW(read_snapshot(no_format), FormatError);
  std::istringstream unknown("format 1\nbogus 3\n");
  EXPECT_THROW(read_snapshot(unknown), FormatError);
  std::istringstream truncated("format 1\nlattice_lower -1 -1\nlattice_upper 1 1\nlattice_counts 2 2\nweights 4\n1\n2\n");
  EXPECT_THROW(read_snapshot(truncated), FormatError);
  std::istringstream mismatch("format 1\nlattice_lower -1 -1\nlattice_upper 1 1\nlattice_counts 2 2\nweights 2\n1\n2\n");
  EXPECT_THROW(read_snapshot(mismatch), FormatError);
}

TEST(Config, EmptyCustomListsRequiredFields) {
  const auto r = validate_config(json{{"scenario", "custom"}});
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r.errors, "/trajectory"));
  EXPECT_TRUE(mentions(r.errors, "/duration"));

  const auto none = validate_config(json::object());
  EXPECT_FALSE(none.ok());
  EXPECT_TRUE(mentions(none.errors, "/scenario"));
}

TEST(Config, RangeAndKeyErrorsCarryLocations) {
  const auto p0 = validate_config(json{{"scenario", "A"}, {"hyper", {{"p0", -1}}}});
  EXPECT_FALSE(p0.ok());
  EXPECT_TRUE(mentions(p0.errors, "/hyper/p0"));

  const auto unknown = validate_config(json{{"scenario", "A"}, {"speed", 3}});
  EXPECT_TRUE(mentions(unknown.errors, "/speed: unknown key"));

  const auto bad_traj = validate_config(
      json{{"scenario", "custom"}, {"duration", 5.0}, {"trajectory", {{"type", "zigzag"}}}});
  EXPECT_TRUE(mentions(bad_traj.errors, "/trajectory/type"));

  EXPECT_TRUE(mentions(validate_config(json{{"scenario", "E"}}).errors, "/scenario"));
  EXPECT_TRUE(mentions(validate_config(json{{"scenario", "A"}, {"column", "d"}}).errors, "/column"));
  EXPECT_TRUE(mentions(validate_config(json{{"scenario", "A"}, {"methods", {"PD", "LMS"}}}).errors, "/methods"));
  EXPECT_TRUE(mentions(validate_config(json{{"scenario", "A"}, {"duration", 500.0}}).errors, "/duration"));
  EXPECT_TRUE(mentions(validate_config(std::string("{not json")).errors, "invalid JSON"));
}

TEST(Config, ColumnResolvesHyperparameters) {
  const auto b = validate_config(json{{"scenario", "A"}, {"column", "b"}});
  ASSERT_TRUE(b.ok());
  EXPECT_EQ(b.spec->hyper.sigma_rtpl, 2.0);
  EXPECT_EQ(b.spec->hyper.sigma_sgdl, 2.0);
  EXPECT_EQ(b.spec->hyper.gamma, 0.005);
  EXPECT_EQ(b.spec->hyper.p0, 100.0);

  const auto a = validate_config(json{{"scenario", "A"}});
  ASSERT_TRUE(a.ok());
  EXPECT_EQ(a.spec->hyper, table_column('a'));
  EXPECT_EQ(a.spec->gains, (std::vector<double>{2.0, 5.0}));
  EXPECT_EQ(table_column('c').sigma_rtpl, 0.5);
  EXPECT_EQ(table_column('c').gamma, 0.05);
}

TEST(Config, PresetsDescribeScenarios) {
  const auto c = *validate_config(json{{"scenario", "C"}}).spec;
  EXPECT_EQ(c.learn_plant, PlantSetting::Perturbed);
  EXPECT_EQ(c.reuse_plant, PlantSetting::Long);
  const auto d = *validate_config(json{{"scenario", "D"}, {"seed", 3}}).spec;
  EXPECT_EQ(d.duration, 300.0);
  EXPECT_EQ(d.checkpoint_interval, 30.0);
  EXPECT_EQ(d.learn_trajectory.kind, TrajectoryKind::RandomSpline);
  EXPECT_EQ(d.learn_trajectory.seed, 3u);
  EXPECT_EQ(d.reuse_trajectory.kind, TrajectoryKind::GrowingSinusoid);
}

TEST(Config, EchoReparsesToSameSpec) {
  for (const char* id : {"A", "B", "C", "D"}) {
    const auto first = validate_config(json{{"scenario", id}, {"column", "c"}, {"seed", 9}});
    ASSERT_TRUE(first.ok());
    const auto second = validate_config(to_json(*first.spec).dump());
    ASSERT_TRUE(second.ok()) << second.errors.front();
    EXPECT_TRUE(*second.spec == *first.spec) << id;
  }
}

TEST(RunScenario, WritesEveryListedOutput) {
  const fs::path out = scratch("outputs");
  const auto spec = short_custom(out);
  const auto outcome = run_scenario(spec);
  for (const auto& f : outcome.manifest.outputs) EXPECT_TRUE(fs::exists(out / f)) << f;
  for (const char* f : {"learn_RTPL.csv", "reuse_SGDL.csv", "knowledge_RTPL.snap", "metrics.csv", "checkpoints.csv",
                        "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(outcome.checkpoints.size(), 4u);
  EXPECT_GT(outcome.manifest.rtpl_gain_lmin, 0.0);

  // manifest echo re-parses to the same ScenarioSpec
  std::ifstream is(out / "manifest.json");
  const json manifest = json::parse(is);
  const auto echoed = validate_config(manifest.at("config"));
  ASSERT_TRUE(echoed.ok());
  EXPECT_TRUE(*echoed.spec == spec);

  // every summary metric is a function of its trace file
  for (const auto& r : outcome.manifest.summary) {
    std::ifstream ts(out / r.trace_file);
    const auto m = compute_metrics(read_trace_csv(ts));
    EXPECT_NEAR(m.ise_e1, r.metrics.ise_e1, 1e-12) << r.name;
    EXPECT_NEAR(m.ise_p, r.metrics.ise_p, 1e-12) << r.name;
    EXPECT_NEAR(m.max_abs_e1, r.metrics.max_abs_e1, 1e-12) << r.name;
    EXPECT_NEAR(manifest.at("summary").at(r.name).at("ise_e1").get<double>(), r.metrics.ise_e1, 1e-12);
  }
  fs::remove_all(out);
}

TEST(RunScenario, SnapshotReplaysLikeReuseRun) {
  const fs::path out = scratch("replay");
  const auto spec = short_custom(out);
  const auto outcome = run_scenario(spec);
  const SnapshotFile snap = load_snapshot((out / "knowledge_RTPL.snap").string());
  Controller c;
  c.network = snap.network();
  c.learner = FrozenLearner{snap.knowledge.weights};
  SimConfig cfg;
  cfg.duration = spec.reuse_duration;
  const auto r = run_closed_loop(pendulum_plant(), Trajectory(spec.reuse_trajectory), c, cfg);
  EXPECT_EQ(compute_metrics(r.trace).ise_e1, outcome.run("reuse_RTPL").metrics.ise_e1);
  fs::remove_all(out);
}
