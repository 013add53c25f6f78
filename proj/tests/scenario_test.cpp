#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gridsync/scenario.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gridsync;

namespace {

ScenarioConfig corridor_base() {
    ScenarioConfig c;
    c.relax = {400.0, 1e-6};
    return c;
}

ScanOptions corridor_scan(std::size_t workers = 1) { return {300.0, 100.0, workers}; }

ControlLayers corridor_layers(const PowerGrid& g, double gp, double gi) {
    const auto n = g.num_nodes();
    auto physical = AdjacencyMatrix::from_grid(g);
    return {{physical, pin_all(n), gp}, {derive_local(physical, g.generators()), pin_generators(g), gi}};
}

void expect_replay_clean(const PowerGrid& g, const oracle::RecordedRun& run) {
    auto report = oracle::replay_overloads(g, run.samples, run.result.events);
    for (const auto& d : report.discrepancies) ADD_FAILURE() << d;
    EXPECT_EQ(report.trips_confirmed, run.result.outcome.n_c_after);
}

}  // namespace

TEST(RunScenario, IsolatedGeneratorDriftsToPOverGamma) {
    // alpha = 1 keeps the line from tripping on reconnection, so the pair can resynchronize.
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 11.0, 1.0}});
    PerturbationSchedule sched{1, 500.0, 800.0, false};
    ScenarioConfig cfg;
    cfg.sim.t_end = 1100.0;
    cfg.relax = {500.0, 1e-6};
    double omega_at_off = std::numeric_limits<double>::quiet_NaN();
    double omega_on = std::numeric_limits<double>::quiet_NaN();
    auto res = run_scenario(g, uncontrolled_layers(2), sched, cfg, false, [&](const SimState& s) {
        if (s.step == steps_for(500.0, 0.01)) omega_on = s.omega[0];
        if (s.step == steps_for(800.0, 0.01) - 1) omega_at_off = s.omega[0];
    });
    ASSERT_EQ(res.outcome.status, RunStatus::Ok);
    // Isolated: I w' = P - gamma w, so w(t) = P/gamma + (w0 - P/gamma) exp(-gamma t / I).
    const double t = 300.0 - 0.01;
    const double closed = 1.0 + (omega_on - 1.0) * std::exp(-t / 10.0);
    EXPECT_NEAR(omega_at_off, closed, 1e-9);
    EXPECT_EQ(res.outcome.n_c_after, 0u);
    EXPECT_EQ(res.outcome.n_active_final, 1u);
    ASSERT_FALSE(res.events.empty());
}

TEST(RunScenario, FrequencyReturnsAfterReconnection) {
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 11.0, 1.0}});
    PerturbationSchedule sched{1, 500.0, 800.0, false};
    ScenarioConfig cfg;
    cfg.sim.t_end = 1100.0;
    cfg.relax = {500.0, 1e-6};
    double final_omega = 1.0;
    run_scenario(g, uncontrolled_layers(2), sched, cfg, false, [&](const SimState& s) { final_omega = s.omega[0]; });
    EXPECT_LT(std::abs(final_omega), 1e-3);
}

TEST(RunScenario, RelaxationFailureIsReported) {
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 1.2, 0.8}});
    PerturbationSchedule sched{1, 500.0, 600.0, false};
    ScenarioConfig cfg;
    cfg.sim.t_end = 700.0;
    cfg.relax = {500.0, 1e-6};
    auto res = run_scenario(g, uncontrolled_layers(2), sched, cfg);
    EXPECT_EQ(res.outcome.status, RunStatus::RelaxationFailed);
    EXPECT_EQ(res.outcome.relax_status, RelaxStatus::Tripped);
    EXPECT_FALSE(res.series.empty());
}

TEST(RunScenario, ScheduleChecks) {
    auto g = fixtures::t2();
    ScenarioConfig cfg;
    EXPECT_THROW(run_scenario(g, uncontrolled_layers(2), {1, 100.0, 300.0}, cfg), std::invalid_argument);
    EXPECT_THROW(run_scenario(g, uncontrolled_layers(2), {1, 300.0, 250.0}, cfg), std::invalid_argument);
    EXPECT_THROW(run_scenario(g, uncontrolled_layers(2), {1, 300.0, 2000.0}, cfg), std::invalid_argument);
    EXPECT_THROW(run_scenario(g, uncontrolled_layers(2), {5, 300.0, 400.0}, cfg), std::out_of_range);
}

TEST(RunScenario, CorridorCascadeReplaysClean) {
    auto g = fixtures::corridor9();
    auto [sched, cfg] = scan_schedule(1, corridor_base(), corridor_scan());
    auto run = oracle::record_run(g, uncontrolled_layers(g.num_nodes()), sched, cfg);
    EXPECT_EQ(run.result.outcome.status, RunStatus::Ok);
    EXPECT_GT(run.result.outcome.n_c_during, 0u);
    EXPECT_GE(run.result.outcome.n_c_after, run.result.outcome.n_c_during);
    expect_replay_clean(g, run);
}

TEST(RunScenario, ControlledRunsReplayClean) {
    auto g = fixtures::corridor9();
    for (bool cofail : {false, true}) {
        auto [sched, cfg] = scan_schedule(2, corridor_base(), corridor_scan());
        sched.cyber_cofail = cofail;
        auto run = oracle::record_run(g, corridor_layers(g, 1.0, 0.2), sched, cfg);
        EXPECT_EQ(run.result.outcome.status, RunStatus::Ok);
        expect_replay_clean(g, run);
    }
}

TEST(RunScenario, OutcomeCoherence) {
    auto g = fixtures::corridor9();
    for (double gp : {0.0, 2.0}) {
        auto [sched, cfg] = scan_schedule(1, corridor_base(), corridor_scan());
        auto res = run_scenario(g, corridor_layers(g, gp, 0.0), sched, cfg, true);
        ASSERT_EQ(res.outcome.status, RunStatus::Ok);
        if (res.outcome.n_c_after == 0) {
            EXPECT_EQ(res.outcome.n_active_final, g.num_lines());
        }
        EXPECT_EQ(res.outcome.n_active_final + res.outcome.n_c_after, g.num_lines());
        EXPECT_EQ(res.series.back().n_failed, res.outcome.n_c_after);
    }
}

TEST(RunScenario, RecordStrideThinsSeries) {
    auto g = fixtures::corridor9();
    auto [sched, cfg] = scan_schedule(4, corridor_base(), corridor_scan());
    cfg.sim.record_stride = 100;
    auto res = run_scenario(g, uncontrolled_layers(9), sched, cfg);
    EXPECT_EQ(res.series.size(), static_cast<std::size_t>(steps_for(cfg.sim.t_end, 0.01) / 100 + 1));
    EXPECT_EQ(res.series.front().t, 0.0);
    EXPECT_DOUBLE_EQ(res.series.back().t, cfg.sim.t_end);
}

TEST(CriticalScan, CorridorRelaysAreCritical) {
    auto g = fixtures::corridor9();
    auto scan = critical_scan(g, corridor_base(), corridor_scan());
    ASSERT_EQ(scan.relax_status, RelaxStatus::Converged);
    ASSERT_EQ(scan.nodes.size(), 9u);
    EXPECT_GT(scan.nodes[1].n_c, 0u);
    for (auto c : scan.critical) EXPECT_NE(scan.nodes[c].n_c, 0u);
}

TEST(CriticalScan, WorkerCountInvariant) {
    auto g = fixtures::corridor9();
    auto a = critical_scan(g, corridor_base(), corridor_scan(1));
    auto b = critical_scan(g, corridor_base(), corridor_scan(4));
    EXPECT_EQ(a.critical, b.critical);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(a.nodes[i].outcome, b.nodes[i].outcome);
}

TEST(CriticalScan, UnboundedCapacityHasNoCriticalNodes) {
    auto g = fixtures::corridor9();
    std::vector<GridLine> lines = g.lines();
    for (auto& l : lines) l.capacity_fraction = std::numeric_limits<double>::infinity();
    auto scan = critical_scan(PowerGrid(g.nodes(), lines), corridor_base(), corridor_scan());
    EXPECT_TRUE(scan.critical.empty());
}

TEST(CriticalScan, TwoNodeGridWithGenerousCapacity) {
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 11.0, 1.0}});
    ScenarioConfig base;
    base.relax = {500.0, 1e-6};
    auto scan = critical_scan(g, base, {100.0, 50.0, 1});
    EXPECT_TRUE(scan.critical.empty());
}

TEST(CriticalScan, LeafOnlyGrid) {
    // Two disjoint generator/load pairs: every node has degree 1.
    PowerGrid g({{NodeKind::Generator, 1, 10, 1},
                 {NodeKind::Load, -1, 10, 1},
                 {NodeKind::Generator, 1, 10, 1},
                 {NodeKind::Load, -1, 10, 1}},
                {{0, 1, 11, 0.8}, {2, 3, 11, 0.8}});
    ScenarioConfig base;
    base.relax = {500.0, 1e-6};
    auto scan = critical_scan(g, base, {100.0, 0.0, 1});
    EXPECT_TRUE(scan.critical.empty());
}

TEST(GpCurve, ZeroGainMatchesScan) {
    auto g = fixtures::corridor9();
    auto scan = critical_scan(g, corridor_base(), corridor_scan());
    for (NodeIndex node : {1u, 4u}) {
        auto [sched, cfg] = scan_schedule(node, corridor_base(), corridor_scan());
        auto curve = gp_curve(g, corridor_layers(g, 0, 0).proportional, sched, {0.0}, cfg);
        ASSERT_EQ(curve.size(), 1u);
        EXPECT_EQ(curve[0].n_c, scan.nodes[node].n_c);
        EXPECT_EQ(curve[0].outcome, scan.nodes[node].outcome);
    }
}

TEST(GpCurve, ControllableCascadeReachesZero) {
    auto g = fixtures::corridor9();
    auto [sched, cfg] = scan_schedule(1, corridor_base(), corridor_scan());
    auto curve = gp_curve(g, corridor_layers(g, 0, 0).proportional, sched, {0.0, 1.0, 4.0, 16.0}, cfg, 2);
    EXPECT_GT(curve.front().n_c, 0u);
    EXPECT_EQ(curve.back().n_c, 0u);
    EXPECT_EQ(curve.back().outcome.status, RunStatus::Ok);
}

namespace {

SweepSpec corridor_sweep() {
    auto g = fixtures::corridor9();
    auto [sched, cfg] = scan_schedule(1, corridor_base(), corridor_scan());
    return {{0.0, 0.5, 2.0}, {0.0, 0.1, 0.4}, g, corridor_layers(g, 0, 0), sched, cfg};
}

}  // namespace

TEST(SweepGains, SingleCellEqualsRunScenario) {
    auto spec = corridor_sweep();
    spec.gp_values = {0.5};
    spec.gi_values = {0.1};
    auto sweep = sweep_gains(spec);
    auto direct = run_scenario(spec.grid, corridor_layers(spec.grid, 0.5, 0.1), spec.schedule, spec.config, false);
    ASSERT_EQ(sweep.cells.size(), 1u);
    EXPECT_EQ(sweep.at(0, 0), direct.outcome);
}

TEST(SweepGains, ZeroIntegralRowMatchesGpCurve) {
    auto spec = corridor_sweep();
    auto sweep = sweep_gains(spec, 2);
    auto curve = gp_curve(spec.grid, spec.layers.proportional, spec.schedule, spec.gp_values, spec.config);
    for (std::size_t a = 0; a < spec.gp_values.size(); ++a) EXPECT_EQ(sweep.at(a, 0), curve[a].outcome);
}

TEST(SweepGains, WorkerCountInvariant) {
    auto spec = corridor_sweep();
    auto one = sweep_gains(spec, 1);
    auto many = sweep_gains(spec, 3);
    EXPECT_EQ(one.cells, many.cells);
}

TEST(SweepGains, RejectsBadGainLists) {
    auto spec = corridor_sweep();
    spec.gp_values = {};
    EXPECT_THROW(sweep_gains(spec), std::invalid_argument);
    spec.gp_values = {1.0, 0.5};
    EXPECT_THROW(sweep_gains(spec), std::invalid_argument);
    spec.gp_values = {-1.0};
    EXPECT_THROW(sweep_gains(spec), std::invalid_argument);
}

TEST(SweepGains, FailedCellsStayInPlace) {
    auto spec = corridor_sweep();
    spec.config.sim.integral_form = IntegralForm::FrequencyIntegral;
    spec.gp_values = {0.0, 1e200};
    spec.gi_values = {0.0};
    auto sweep = sweep_gains(spec);
    ASSERT_EQ(sweep.cells.size(), 2u);
    EXPECT_EQ(sweep.at(0, 0).status, RunStatus::Ok);
    EXPECT_FALSE(sweep.at(1, 0).stable);
}

TEST(ParallelFor, CoversEveryIndexOnceAndPropagatesErrors) {
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }),
                 std::runtime_error);
}
