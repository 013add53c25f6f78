#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>
#include <random>

#include "gridsync/dynamics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gridsync;

namespace {

// Lightly damped grids (gamma / 2I = 0.05) need longer than the default
// relaxation to push Delta omega below 1e-6.
RelaxOptions long_relax() { return {500.0, 1e-6}; }

RelaxResult relax(const PowerGrid& g, const ControlLayers& layers, RelaxOptions opts = long_relax()) {
    SimConfig cfg{0.01, 0.0};
    return relax_to_sync(g, layers, cfg, opts);
}

PowerGrid single_node(double power, double inertia, double damping) {
    return PowerGrid({{NodeKind::Generator, power, inertia, damping}}, {});
}

}  // namespace

TEST(Flows, UnitFlowAtArcsinAngle) {
    auto g = fixtures::t2();
    auto s = SimState::initial(g);
    s.theta = {0.0, std::asin(1.0 / 11.0)};
    EXPECT_NEAR(compute_flows(g, s)[0], 1.0, 1e-15);
    std::swap(s.theta[0], s.theta[1]);
    EXPECT_NEAR(compute_flows(g, s)[0], -1.0, 1e-15);
}

TEST(Flows, OrientationFollowsIndexNotFileOrder) {
    PowerGrid g({{NodeKind::Generator, 1, 1, 1}, {NodeKind::Load, -1, 1, 1}}, {{1, 0, 2.0, 0.8}});
    auto s = SimState::initial(g);
    s.theta = {0.0, 0.5};
    EXPECT_DOUBLE_EQ(compute_flows(g, s)[0], 2.0 * std::sin(0.5));
}

TEST(Overloads, StrictInequality) {
    PowerGrid g({{NodeKind::Generator, 1, 1, 1}, {NodeKind::Load, -1, 1, 1}}, {{0, 1, 10.0, 0.5}});
    std::vector<LineStatus> status(1);
    std::vector<double> at_cap{5.0}, above{std::nextafter(5.0, 6.0)}, below{-4.9};
    EXPECT_TRUE(check_overloads(g, status, at_cap).empty());
    EXPECT_EQ(check_overloads(g, status, above).size(), 1u);
    EXPECT_TRUE(check_overloads(g, status, below).empty());
    status[0] = LineStatus::tripped(1.0);
    EXPECT_TRUE(check_overloads(g, status, above).empty());
}

TEST(Derivatives, SingleNodeHandValue) {
    auto g = single_node(0.0, 10.0, 1.0);
    auto s = SimState::initial(g);
    s.omega = {5.0};
    auto d = derivatives(g, uncontrolled_layers(1), s);
    EXPECT_EQ(d.dtheta[0], 5.0);
    EXPECT_DOUBLE_EQ(d.domega[0], -0.5);
    EXPECT_EQ(d.du_integral[0], 0.0);
}

TEST(Derivatives, VanishAtT2FixedPoint) {
    auto g = fixtures::t2();
    auto s = SimState::initial(g);
    s.theta = {std::asin(1.0 / 11.0), 0.0};
    auto d = derivatives(g, uncontrolled_layers(2), s);
    for (double x : d.domega) EXPECT_NEAR(x, 0.0, 1e-15);
}

TEST(Rk4, SingleStepOfLinearDecay) {
    // omega' = -0.1 omega; one step of h = 0.01 differs from exp by O(h^5).
    auto g = single_node(0.0, 10.0, 1.0);
    SwingModel model(g, uncontrolled_layers(1));
    auto s = SimState::initial(g);
    s.omega = {1.0};
    model.rk4_step(s, 0.01);
    EXPECT_NEAR(s.omega[0], std::exp(-0.001), 1e-12);
    EXPECT_EQ(s.step, 1);
    EXPECT_DOUBLE_EQ(s.t, 0.01);
}

TEST(Rk4, FourthOrderConvergence) {
    auto grid = random_connected_grid(10, 3, 6, 42, critical_scan_preset());
    // alpha = 1 rules out trips: |K sin| never exceeds K.
    std::vector<GridLine> lines = grid.lines();
    for (auto& l : lines) l.capacity_fraction = 1.0;
    PowerGrid g(grid.nodes(), lines);
    SwingModel model(g, uncontrolled_layers(10));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    auto start = SimState::initial(g);
    for (auto& x : start.theta) x = u(rng);
    for (auto& x : start.omega) x = u(rng);

    auto integrate = [&](double dt) {
        auto s = start;
        const auto steps = steps_for(10.0, dt);
        for (std::int64_t k = 0; k < steps; ++k) model.rk4_step(s, dt);
        EXPECT_EQ(s.trip_count(), 0u);
        return s;
    };
    auto a = integrate(0.02), b = integrate(0.01), c = integrate(0.005);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        num += std::pow(a.theta[i] - b.theta[i], 2) + std::pow(a.omega[i] - b.omega[i], 2);
        den += std::pow(b.theta[i] - c.theta[i], 2) + std::pow(b.omega[i] - c.omega[i], 2);
    }
    const double ratio = std::sqrt(num / den);
    EXPECT_GE(ratio, 12.0);
    EXPECT_LE(ratio, 20.0);
}

TEST(Rk4, TopologyFrozenAcrossStages) {
    // K = 1.2 cannot carry the unit flow below alpha K = 0.96: the line trips.
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 1.2, 0.8}});
    SwingModel model(g, uncontrolled_layers(2));
    std::vector<std::uint64_t> seen;
    model.set_stage_probe([&](int, std::uint64_t epoch) { seen.push_back(epoch); });
    auto s = SimState::initial(g);
    while (s.trip_count() == 0 && s.step < 100000) {
        seen.clear();
        model.rk4_step(s, 0.01);
    }
    ASSERT_EQ(s.trip_count(), 1u);
    ASSERT_EQ(seen.size(), 4u);
    for (auto e : seen) EXPECT_EQ(e, 0u);
    EXPECT_EQ(s.topology_epoch, 1u);
    EXPECT_TRUE(s.line_status[0].is_tripped());
    EXPECT_EQ(s.line_status[0].trip_time, s.t);
}

TEST(Rk4, NonFiniteResultAbortsWithoutTouchingState) {
    auto g = fixtures::t2();
    SwingModel model(g, uncontrolled_layers(2));
    auto s = SimState::initial(g);
    s.omega = {DBL_MAX, -DBL_MAX};
    auto before = s;
    EXPECT_THROW(model.rk4_step(s, 0.01), NumericalInstability);
    EXPECT_EQ(s.omega, before.omega);
    EXPECT_EQ(s.theta, before.theta);
    EXPECT_EQ(s.step, 0);
}

TEST(Relax, T2AnalyticFixedPoint) {
    auto g = fixtures::t2();
    auto r = relax(g, uncontrolled_layers(2));
    ASSERT_TRUE(r.ok()) << to_string(r.status) << " delta_omega=" << r.delta_omega;
    const double dtheta = r.state.theta[0] - r.state.theta[1];
    EXPECT_LT(std::abs(dtheta - std::asin(1.0 / 11.0)), 1e-6);
    EXPECT_LT(std::abs(std::abs(compute_flows(g, r.state)[0]) - 1.0), 1e-6);
}

TEST(Relax, T3BothFlowsCarryOneUnit) {
    auto g = fixtures::t3();
    auto r = relax(g, uncontrolled_layers(3));
    ASSERT_TRUE(r.ok());
    for (double f : compute_flows(g, r.state)) EXPECT_LT(std::abs(std::abs(f) - 1.0), 1e-6);
}

TEST(Relax, DefaultDurationIsTooShortForT2) {
    auto r = relax(fixtures::t2(), uncontrolled_layers(2), RelaxOptions{});
    EXPECT_EQ(r.status, RelaxStatus::NotConverged);
    EXPECT_GT(r.delta_omega, 1e-6);
}

TEST(Relax, ZeroPowerGridStaysAtRest) {
    // Not a valid grid (generator with P = 0), but the model does not care.
    PowerGrid zero({{NodeKind::Generator, 0.0, 1, 1}, {NodeKind::Load, 0.0, 1, 1}, {NodeKind::Load, 0.0, 1, 1}},
                   {{0, 1, 11, 0.8}, {1, 2, 11, 0.8}});
    auto r = relax(zero, uncontrolled_layers(3), {100.0, 1e-6});
    ASSERT_TRUE(r.ok());
    for (double x : r.state.theta) EXPECT_EQ(x, 0.0);
    for (double x : r.state.omega) EXPECT_EQ(x, 0.0);
}

TEST(Relax, UnderpoweredLineTripsAndReplayAgrees) {
    PowerGrid g({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 1.2, 0.8}});
    SwingModel model(g, uncontrolled_layers(2));
    std::vector<oracle::RecordedSample> samples;
    auto r = relax_to_sync(model, 0.01, long_relax(),
                           [&](const SimState& s) { samples.push_back({s.t, s.theta}); });
    EXPECT_EQ(r.status, RelaxStatus::Tripped);
    auto report = oracle::replay_overloads(g, samples, r.state.events);
    EXPECT_TRUE(report.discrepancies.empty()) << report.discrepancies.front();
    EXPECT_EQ(report.trips_confirmed, 1u);
}

TEST(NodeRemoval, FrozenStateIsBitwiseConstant) {
    auto g = fixtures::t3();
    ControlLayers layers{{AdjacencyMatrix::complete(3), pin_all(3), 2.0},
                         {AdjacencyMatrix::complete(3), pin_all(3), 0.5}};
    SwingModel model(g, layers);
    auto s = SimState::initial(g);
    for (int k = 0; k < 50; ++k) model.rk4_step(s, 0.01);
    apply_node_removal(s, g, 1, false);
    const double th = s.theta[1], om = s.omega[1], ui = s.u_integral[1];
    for (int k = 0; k < 300; ++k) model.rk4_step(s, 0.01);
    EXPECT_EQ(s.theta[1], th);
    EXPECT_EQ(s.omega[1], om);
    EXPECT_EQ(s.u_integral[1], ui);
    auto inputs = model.control_inputs(s);
    EXPECT_EQ(inputs.u_total[1], 0.0);
}

TEST(NodeRemoval, LineBookkeeping) {
    auto g = fixtures::t3();
    auto s = SimState::initial(g);
    s.line_status[1] = LineStatus::tripped(3.0);
    apply_node_removal(s, g, 0, true);
    EXPECT_TRUE(s.line_status[0].is_removed());
    EXPECT_TRUE(s.line_status[1].is_tripped());
    EXPECT_EQ(s.cyber_masked[0], 1);
    EXPECT_THROW(apply_node_removal(s, g, 0, false), std::logic_error);

    apply_node_reconnection(s, g, 0);
    EXPECT_TRUE(s.line_status[0].is_active());
    EXPECT_TRUE(s.line_status[1].is_tripped());  // overload trips are permanent
    EXPECT_EQ(s.cyber_masked[0], 0);
    EXPECT_THROW(apply_node_reconnection(s, g, 0), std::logic_error);
    EXPECT_THROW(apply_node_removal(s, g, 7, false), std::out_of_range);
    EXPECT_EQ(s.events.size(), 2u);
    EXPECT_EQ(s.topology_epoch, 2u);
}

TEST(NodeRemoval, CyberCofailureDropsControllerLinks) {
    auto g = fixtures::t3();
    ControlLayers layers{{AdjacencyMatrix::complete(3), pin_all(3), 1.0}, uncontrolled_layers(3).integral};
    SwingModel model(g, layers);
    auto s = SimState::initial(g);
    s.omega = {0.0, 0.0, 4.0};
    apply_node_removal(s, g, 2, true);
    auto masked = model.control_inputs(s);
    EXPECT_EQ(masked.u_p, (std::vector<double>{0.0, 0.0, 0.0}));

    auto s2 = SimState::initial(g);
    s2.omega = {0.0, 0.0, 4.0};
    apply_node_removal(s2, g, 2, false);
    auto kept = model.control_inputs(s2);
    EXPECT_EQ(kept.u_p, (std::vector<double>{4.0, 4.0, 0.0}));
}

TEST(ControlInvariants, SumsVanishAlongTrajectory) {
    auto g = random_connected_grid(40, 10, 20, 3, controlled_default_preset());
    ControlLayers layers{{gen_er(40, 0.1, 5), pin_all(40), 3.0}, {gen_er(40, 0.1, 6), pin_all(40), 0.7}};
    SwingModel model(g, layers);
    auto s = SimState::initial(g);
    for (int k = 0; k < 2000; ++k) {
        model.rk4_step(s, 0.01);
        auto in = model.control_inputs(s);
        auto d = model.derivatives(s);
        double sp = 0.0, si = 0.0;
        for (std::size_t i = 0; i < 40; ++i) {
            sp += in.u_p[i];
            si += d.du_integral[i];
        }
        ASSERT_LE(std::abs(sp), 1e-10);
        ASSERT_LE(std::abs(si), 1e-10);
    }
}

TEST(PhaseDifferenceForm, HasNoIntegralState) {
    auto g = fixtures::t3();
    ControlLayers layers{uncontrolled_layers(3).proportional, {AdjacencyMatrix::complete(3), pin_all(3), 1.0}};
    SwingModel model(g, layers, IntegralForm::PhaseDifference);
    auto s = SimState::initial(g);
    s.theta = {0.0, 1.0, 2.0};
    auto d = model.derivatives(s);
    for (double x : d.du_integral) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(model.control_inputs(s).u_i, (std::vector<double>{3.0, 0.0, -3.0}));
}

TEST(SwingModel, RejectsMismatchedLayers) {
    auto g = fixtures::t2();
    EXPECT_THROW(SwingModel(g, uncontrolled_layers(3)), std::invalid_argument);
    ControlLayers bad = uncontrolled_layers(2);
    bad.proportional.gain = -1.0;
    EXPECT_THROW(SwingModel(g, bad), std::invalid_argument);
}
