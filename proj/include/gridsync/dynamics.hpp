#pragma once

// Controlled swing-equation dynamics with overload line tripping.
//
// State per node: phase theta, frequency omega and the integral-control input u^I.
//   dtheta_i/dt = omega_i
//   I_i domega_i/dt = P_i - gamma_i omega_i + sum_{active (i,j)} K_ij sin(theta_j - theta_i) + u^P_i + u^I_i
//   du^I_i/dt = G_I xi^I_i sum_j a^I_ij (omega_j - omega_i)
// Integration is classical fixed-step RK4. Line topology is frozen during a step;
// overloads |F_ij| > alpha K_ij are checked once on every post-step state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsync/controllers.hpp"
#include "gridsync/grid.hpp"
#include "gridsync/metrics.hpp"
#include "gridsync/topology.hpp"

namespace gridsync {

enum class IntegralForm {
    FrequencyIntegral,  // u^I is an ODE state driven by frequency differences
    PhaseDifference,    // u^I_i = G_I xi^I_i sum_j a^I_ij (theta_j - theta_i), no extra state
};

inline const char* to_string(IntegralForm form) {
    return form == IntegralForm::FrequencyIntegral ? "frequency-integral" : "phase-difference";
}

struct SimConfig {
    double dt = 0.01;
    double t_end = 0.0;
    std::size_t record_stride = 1;
    IntegralForm integral_form = IntegralForm::FrequencyIntegral;
    MetricsScope metrics_scope = MetricsScope::ActiveNodesOnly;

    void check() const {
        if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
        if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be >= 0");
        if (record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
    }
};

/// Number of fixed steps that lands on time t.
inline std::int64_t steps_for(double t, double dt) { return std::llround(t / dt); }

enum class EventKind { LineTripped, NodeRemoved, NodeReconnected };

inline const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::LineTripped: return "line_tripped";
        case EventKind::NodeRemoved: return "node_removed";
        case EventKind::NodeReconnected: return "node_reconnected";
    }
    return "unknown";
}

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::LineTripped;
    std::size_t subject = 0;  // line index for trips, node index otherwise

    bool operator==(const Event&) const = default;
};

struct ControlLayers {
    ControlLayer proportional;
    ControlLayer integral;
};

/// Layers with no edges and zero gain: the uncontrolled grid.
inline ControlLayers uncontrolled_layers(std::size_t n) {
    return {{AdjacencyMatrix(n), std::vector<std::uint8_t>(n, 0), 0.0},
            {AdjacencyMatrix(n), std::vector<std::uint8_t>(n, 0), 0.0}};
}

struct SimState {
    std::int64_t step = 0;
    double t = 0.0;
    std::vector<double> theta;
    std::vector<double> omega;
    std::vector<double> u_integral;
    std::vector<LineStatus> line_status;
    std::vector<std::uint8_t> removed;       // physical node out of service
    std::vector<std::uint8_t> cyber_masked;  // controller node out of service
    std::vector<Event> events;
    std::uint64_t topology_epoch = 0;  // bumped on every line-status or node-set change

    /// theta = omega = u^I = 0, all lines active.
    static SimState initial(const PowerGrid& grid) {
        SimState s;
        const auto n = grid.num_nodes();
        s.theta.assign(n, 0.0);
        s.omega.assign(n, 0.0);
        s.u_integral.assign(n, 0.0);
        s.line_status.assign(grid.num_lines(), LineStatus::active());
        s.removed.assign(n, 0);
        s.cyber_masked.assign(n, 0);
        return s;
    }

    [[nodiscard]] std::vector<NodeIndex> removed_nodes() const {
        std::vector<NodeIndex> out;
        for (NodeIndex i = 0; i < removed.size(); ++i)
            if (removed[i]) out.push_back(i);
        return out;
    }

    [[nodiscard]] std::size_t trip_count() const {
        std::size_t n = 0;
        for (const auto& e : events) n += e.kind == EventKind::LineTripped;
        return n;
    }
};

class NumericalInstability : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Signed flows, oriented from the lower to the higher node index:
/// F = K sin(theta_high - theta_low). Lines that are not active report 0.
inline std::vector<double> compute_flows(const PowerGrid& grid, const SimState& state) {
    std::vector<double> flows(grid.num_lines(), 0.0);
    for (LineIndex l = 0; l < grid.num_lines(); ++l) {
        const auto& line = grid.line(l);
        if (!state.line_status[l].is_active() || state.removed[line.from] || state.removed[line.to]) continue;
        const auto lo = std::min(line.from, line.to);
        const auto hi = std::max(line.from, line.to);
        flows[l] = line.coupling * std::sin(state.theta[hi] - state.theta[lo]);
    }
    return flows;
}

/// Active lines with |F| strictly above alpha K.
inline std::vector<LineIndex> check_overloads(const PowerGrid& grid, std::span<const LineStatus> status,
                                              std::span<const double> flows) {
    std::vector<LineIndex> out;
    for (LineIndex l = 0; l < grid.num_lines(); ++l)
        if (status[l].is_active() && std::abs(flows[l]) > grid.line(l).capacity()) out.push_back(l);
    return out;
}

/// Marks every overloaded active line as tripped at state.t. Returns the number tripped.
inline std::size_t trip_overloaded_lines(const PowerGrid& grid, SimState& state) {
    const auto flows = compute_flows(grid, state);
    const auto violators = check_overloads(grid, state.line_status, flows);
    for (auto l : violators) {
        state.line_status[l] = LineStatus::tripped(state.t);
        state.events.push_back({state.t, EventKind::LineTripped, l});
    }
    if (!violators.empty()) ++state.topology_epoch;
    return violators.size();
}

struct Derivatives {
    std::vector<double> dtheta;
    std::vector<double> domega;
    std::vector<double> du_integral;
};

/// The controlled swing equations bound to one grid and one pair of control layers.
/// The grid must outlive the model.
class SwingModel {
public:
    using StageProbe = std::function<void(int stage, std::uint64_t topology_epoch)>;

    SwingModel(const PowerGrid& grid, const ControlLayers& layers,
               IntegralForm form = IntegralForm::FrequencyIntegral)
        : grid_(&grid), proportional_(layers.proportional), integral_(layers.integral), form_(form) {
        const auto n = grid.num_nodes();
        if (proportional_.size() != n || integral_.size() != n)
            throw std::invalid_argument("control layers do not match the grid size");
        for (const auto* layer : {&layers.proportional, &layers.integral}) {
            auto issues = validate_layer(*layer, n);
            if (!issues.empty()) throw std::invalid_argument("invalid control layer: " + issues.front());
        }
        scratch_.resize(n);
        control_.resize(n);
    }

    [[nodiscard]] const PowerGrid& grid() const { return *grid_; }
    [[nodiscard]] std::size_t size() const { return grid_->num_nodes(); }
    [[nodiscard]] IntegralForm integral_form() const { return form_; }
    [[nodiscard]] const LayerStencil& proportional() const { return proportional_; }
    [[nodiscard]] const LayerStencil& integral() const { return integral_; }

    /// Observes the topology epoch seen by each RK4 stage.
    void set_stage_probe(StageProbe probe) { probe_ = std::move(probe); }

    /// Evaluates the vector field at (theta, omega, uI) using the topology of `topo`.
    void evaluate(std::span<const double> theta, std::span<const double> omega, std::span<const double> u_int,
                  const SimState& topo, std::span<double> dtheta, std::span<double> domega,
                  std::span<double> du_int) const {
        const auto& grid = *grid_;
        const auto n = grid.num_nodes();
        for (NodeIndex i = 0; i < n; ++i) domega[i] = 0.0;

        for (LineIndex l = 0; l < grid.num_lines(); ++l) {
            if (!topo.line_status[l].is_active()) continue;
            const auto& line = grid.line(l);
            if (topo.removed[line.from] || topo.removed[line.to]) continue;
            const double f = line.coupling * std::sin(theta[line.to] - theta[line.from]);
            domega[line.from] += f;
            domega[line.to] -= f;
        }

        proportional_.apply(omega, control_, topo.cyber_masked);
        for (NodeIndex i = 0; i < n; ++i) domega[i] += control_[i];

        if (form_ == IntegralForm::FrequencyIntegral) {
            integral_.apply(omega, du_int, topo.cyber_masked);
            for (NodeIndex i = 0; i < n; ++i) domega[i] += u_int[i];
        } else {
            integral_.apply(theta, control_, topo.cyber_masked);
            for (NodeIndex i = 0; i < n; ++i) {
                domega[i] += control_[i];
                du_int[i] = 0.0;
            }
        }

        for (NodeIndex i = 0; i < n; ++i) {
            if (topo.removed[i]) {
                dtheta[i] = domega[i] = du_int[i] = 0.0;
                continue;
            }
            const auto& node = grid.node(i);
            dtheta[i] = omega[i];
            domega[i] = (node.power - node.damping * omega[i] + domega[i]) / node.inertia;
        }
    }

    [[nodiscard]] Derivatives derivatives(const SimState& state) const {
        const auto n = size();
        require_shape(state);
        Derivatives d{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
        evaluate(state.theta, state.omega, state.u_integral, state, d.dtheta, d.domega, d.du_integral);
        return d;
    }

    /// Control inputs acting on the physical nodes at `state`; removed nodes receive none.
    [[nodiscard]] ControlInputs control_inputs(const SimState& state) const {
        const auto n = size();
        std::vector<double> up(n), ui(n);
        proportional_.apply(state.omega, up, state.cyber_masked);
        if (form_ == IntegralForm::FrequencyIntegral)
            ui = state.u_integral;
        else
            integral_.apply(state.theta, ui, state.cyber_masked);
        for (NodeIndex i = 0; i < n; ++i)
            if (state.removed[i]) up[i] = ui[i] = 0.0;
        return combine_inputs(std::move(up), std::move(ui));
    }

    /// One classical RK4 step of (theta, omega, u^I) with frozen topology, then
    /// the overload check on the new state. Throws NumericalInstability on a
    /// non-finite result, leaving `state` untouched.
    void rk4_step(SimState& state, double dt) const {
        if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be > 0");
        require_shape(state);
        const auto n = size();
        auto& s = scratch_;
        const double half = 0.5 * dt;

        auto stage = [&](int k, std::span<const double> th, std::span<const double> om,
                         std::span<const double> ui) {
            if (probe_) probe_(k, state.topology_epoch);
            evaluate(th, om, ui, state, s.kth[k], s.kom[k], s.kui[k]);
        };
        auto offset = [&](int k, double h) {
            for (NodeIndex i = 0; i < n; ++i) {
                s.th[i] = state.theta[i] + h * s.kth[k][i];
                s.om[i] = state.omega[i] + h * s.kom[k][i];
                s.ui[i] = state.u_integral[i] + h * s.kui[k][i];
            }
        };

        stage(0, state.theta, state.omega, state.u_integral);
        offset(0, half);
        stage(1, s.th, s.om, s.ui);
        offset(1, half);
        stage(2, s.th, s.om, s.ui);
        offset(2, dt);
        stage(3, s.th, s.om, s.ui);

        const double w = dt / 6.0;
        bool finite = true;
        for (NodeIndex i = 0; i < n; ++i) {
            s.th[i] = state.theta[i] + w * (s.kth[0][i] + 2.0 * s.kth[1][i] + 2.0 * s.kth[2][i] + s.kth[3][i]);
            s.om[i] = state.omega[i] + w * (s.kom[0][i] + 2.0 * s.kom[1][i] + 2.0 * s.kom[2][i] + s.kom[3][i]);
            s.ui[i] = state.u_integral[i] + w * (s.kui[0][i] + 2.0 * s.kui[1][i] + 2.0 * s.kui[2][i] + s.kui[3][i]);
            finite = finite && std::isfinite(s.th[i]) && std::isfinite(s.om[i]) && std::isfinite(s.ui[i]);
        }
        if (!finite)
            throw NumericalInstability("non-finite state after step at t = " + std::to_string(state.t));

        state.theta.swap(s.th);
        state.omega.swap(s.om);
        state.u_integral.swap(s.ui);
        s.th.resize(n);
        s.om.resize(n);
        s.ui.resize(n);
        ++state.step;
        state.t = static_cast<double>(state.step) * dt;
        trip_overloaded_lines(*grid_, state);
    }

private:
    struct Scratch {
        std::vector<double> kth[4], kom[4], kui[4];
        std::vector<double> th, om, ui;
        void resize(std::size_t n) {
            for (int k = 0; k < 4; ++k) {
                kth[k].resize(n);
                kom[k].resize(n);
                kui[k].resize(n);
            }
            th.resize(n);
            om.resize(n);
            ui.resize(n);
        }
    };

    void require_shape(const SimState& state) const {
        const auto n = size();
        if (state.theta.size() != n || state.omega.size() != n || state.u_integral.size() != n ||
            state.removed.size() != n || state.cyber_masked.size() != n ||
            state.line_status.size() != grid_->num_lines())
            throw std::invalid_argument("simulation state does not match the grid dimensions");
    }

    const PowerGrid* grid_;
    LayerStencil proportional_;
    LayerStencil integral_;
    IntegralForm form_;
    StageProbe probe_;
    mutable Scratch scratch_;
    mutable std::vector<double> control_;
};

/// Free-function form of SwingModel::derivatives.
inline Derivatives derivatives(const PowerGrid& grid, const ControlLayers& layers, const SimState& state,
                               IntegralForm form = IntegralForm::FrequencyIntegral) {
    return SwingModel(grid, layers, form).derivatives(state);
}

/// Takes `node` out of service: its active lines become RemovedByNodeFault and
/// its state freezes. With `cyber_cofail`, its controllers drop out of both layers.
inline void apply_node_removal(SimState& state, const PowerGrid& grid, NodeIndex node, bool cyber_cofail) {
    if (node >= grid.num_nodes()) throw std::out_of_range("node index out of range");
    if (state.removed[node]) throw std::logic_error("node " + std::to_string(node + 1) + " is already removed");
    state.removed[node] = 1;
    for (LineIndex l = 0; l < grid.num_lines(); ++l) {
        const auto& line = grid.line(l);
        if ((line.from == node || line.to == node) && state.line_status[l].is_active())
            state.line_status[l] = LineStatus::removed_by_fault();
    }
    if (cyber_cofail) state.cyber_masked[node] = 1;
    state.events.push_back({state.t, EventKind::NodeRemoved, node});
    ++state.topology_epoch;
}

/// Returns `node` to service. Only its RemovedByNodeFault lines come back;
/// overload trips stay. Dynamics resume from the frozen state.
inline void apply_node_reconnection(SimState& state, const PowerGrid& grid, NodeIndex node) {
    if (node >= grid.num_nodes()) throw std::out_of_range("node index out of range");
    if (!state.removed[node]) throw std::logic_error("node " + std::to_string(node + 1) + " is not removed");
    state.removed[node] = 0;
    state.cyber_masked[node] = 0;
    for (LineIndex l = 0; l < grid.num_lines(); ++l) {
        const auto& line = grid.line(l);
        const auto other = line.from == node ? line.to : line.from;
        if ((line.from == node || line.to == node) && state.line_status[l].is_removed() && !state.removed[other])
            state.line_status[l] = LineStatus::active();
    }
    state.events.push_back({state.t, EventKind::NodeReconnected, node});
    ++state.topology_epoch;
}

// ---------------------------------------------------------------------------
// Relaxation to the synchronous operating point
// ---------------------------------------------------------------------------

struct RelaxOptions {
    double duration = 200.0;
    double delta_omega_threshold = 1e-6;
};

enum class RelaxStatus { Converged, NotConverged, Tripped, Unstable };

inline const char* to_string(RelaxStatus status) {
    switch (status) {
        case RelaxStatus::Converged: return "converged";
        case RelaxStatus::NotConverged: return "not-converged";
        case RelaxStatus::Tripped: return "tripped";
        case RelaxStatus::Unstable: return "unstable";
    }
    return "unknown";
}

struct RelaxResult {
    SimState state;
    RelaxStatus status = RelaxStatus::NotConverged;
    double delta_omega = 0.0;

    [[nodiscard]] bool ok() const { return status == RelaxStatus::Converged; }
};

/// Integrates from theta = omega = u^I = 0 with controllers active for
/// `options.duration`. Stops at the first overload trip.
/// `on_step` sees the initial state and every post-step state.
inline RelaxResult relax_to_sync(const SwingModel& model, double dt, const RelaxOptions& options,
                                 const std::function<void(const SimState&)>& on_step = {}) {
    RelaxResult result{SimState::initial(model.grid())};
    auto& state = result.state;
    const auto scope = all_nodes(model.size());
    if (trip_overloaded_lines(model.grid(), state) > 0) {
        result.status = RelaxStatus::Tripped;
        return result;
    }
    if (on_step) on_step(state);
    const auto steps = steps_for(options.duration, dt);
    try {
        for (std::int64_t k = 0; k < steps; ++k) {
            model.rk4_step(state, dt);
            if (on_step) on_step(state);
            if (state.trip_count() > 0) {
                result.status = RelaxStatus::Tripped;
                result.delta_omega = freq_std(state.omega, scope);
                return result;
            }
        }
    } catch (const NumericalInstability&) {
        result.status = RelaxStatus::Unstable;
        result.delta_omega = std::numeric_limits<double>::infinity();
        return result;
    }
    result.delta_omega = freq_std(state.omega, scope);
    result.status =
        result.delta_omega < options.delta_omega_threshold ? RelaxStatus::Converged : RelaxStatus::NotConverged;
    return result;
}

inline RelaxResult relax_to_sync(const PowerGrid& grid, const ControlLayers& layers, const SimConfig& config,
                                 const RelaxOptions& options = {}) {
    config.check();
    SwingModel model(grid, layers, config.integral_form);
    return relax_to_sync(model, config.dt, options);
}

}  // namespace gridsync
