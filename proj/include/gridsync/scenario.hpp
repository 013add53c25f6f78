#pragma once

// Node-fault experiments: a single removal/reconnection run, the uncontrolled
// critical-node scan, proportional-gain curves and (G_P, G_I) sweeps.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gridsync/dynamics.hpp"
#include "gridsync/metrics.hpp"
#include "gridsync/topology.hpp"

namespace gridsync {

struct PerturbationSchedule {
    NodeIndex node = 0;
    double t_on = 200.0;
    double t_off = 1200.0;
    bool cyber_cofail = false;
};

struct ScenarioConfig {
    SimConfig sim{0.01, 1400.0};
    RelaxOptions relax{};
};

inline void check_schedule(const PerturbationSchedule& schedule, const ScenarioConfig& config,
                           std::size_t num_nodes) {
    config.sim.check();
    if (schedule.node >= num_nodes) throw std::out_of_range("faulted node index out of range");
    if (!(schedule.t_on >= 0.0 && schedule.t_on < schedule.t_off && schedule.t_off <= config.sim.t_end))
        throw std::invalid_argument("schedule must satisfy 0 <= t_on < t_off <= t_end");
    if (schedule.t_on < config.relax.duration)
        throw std::invalid_argument("removal time precedes the end of the relaxation phase");
}

enum class RunStatus { Ok, RelaxationFailed, Unstable };

inline const char* to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Ok: return "ok";
        case RunStatus::RelaxationFailed: return "relaxation-failed";
        case RunStatus::Unstable: return "unstable";
    }
    return "unknown";
}

/// Two-phase summary of a fault run. The "during" window is [t_on, t_off),
/// the "after" window [t_off, t_end]; Delta omega is averaged over every step in a window.
struct RunOutcome {
    std::size_t n_c_during = 0;
    std::size_t n_c_after = 0;
    std::size_t n_active_final = 0;
    double mean_delta_omega_during = 0.0;
    double mean_delta_omega_after = 0.0;
    double final_r = 0.0;
    bool stable = true;
    RunStatus status = RunStatus::Ok;
    RelaxStatus relax_status = RelaxStatus::Converged;

    bool operator==(const RunOutcome&) const = default;
};

struct ScenarioResult {
    RunOutcome outcome;
    std::vector<MetricsSample> series;
    std::vector<Event> events;
};

using StateObserver = std::function<void(const SimState&)>;

inline MetricsSample sample_metrics(const SwingModel& model, const SimState& state, MetricsScope scope) {
    const auto nodes = scope_nodes(state.removed, scope);
    const auto op = order_parameter(state.theta, nodes);
    const auto counts = count_failures(state.line_status);
    const auto inputs = model.control_inputs(state);
    MetricsSample s;
    s.t = state.t;
    s.r = op.r;
    s.phi = op.phi;
    s.delta_omega = freq_std(state.omega, nodes);
    s.mean_omega = mean_over(state.omega, nodes);
    s.power_loss = model.grid().num_loads() > 0 ? power_loss(model.grid(), inputs.u_total) : 0.0;
    s.n_failed = counts.n_failed;
    s.n_active_links = counts.n_active;
    return s;
}

namespace detail {

/// Drives a relaxed state through the removal/reconnection schedule to t_end.
class FaultRun {
public:
    FaultRun(const SwingModel& model, const PerturbationSchedule& schedule, const ScenarioConfig& config,
             bool keep_series, const StateObserver& observer)
        : model_(model),
          schedule_(schedule),
          config_(config),
          keep_series_(keep_series),
          observer_(observer),
          on_(steps_for(schedule.t_on, config.sim.dt)),
          off_(steps_for(schedule.t_off, config.sim.dt)),
          end_(steps_for(config.sim.t_end, config.sim.dt)) {}

    /// Records a relaxation-phase state (no events, no window statistics).
    void observe_relaxation(const SimState& state) { record(state); }

    ScenarioResult take_partial() { return std::move(result_); }

    ScenarioResult run_from(SimState state) {
        auto& out = result_.outcome;
        try {
            process(state);
            while (state.step < end_) {
                model_.rk4_step(state, config_.sim.dt);
                process(state);
            }
        } catch (const NumericalInstability&) {
            out.stable = false;
            out.status = RunStatus::Unstable;
        }
        finish(state);
        return std::move(result_);
    }

private:
    void process(SimState& state) {
        if (state.step == on_) {
            apply_node_removal(state, model_.grid(), schedule_.node, schedule_.cyber_cofail);
            trip_overloaded_lines(model_.grid(), state);
        }
        if (state.step == off_) {
            apply_node_reconnection(state, model_.grid(), schedule_.node);
            trip_overloaded_lines(model_.grid(), state);
        }
        const auto nodes = scope_nodes(state.removed, config_.sim.metrics_scope);
        const double dw = freq_std(state.omega, nodes);
        if (state.step >= on_ && state.step < off_) {
            sum_during_ += dw;
            ++count_during_;
        } else if (state.step >= off_) {
            sum_after_ += dw;
            ++count_after_;
        }
        record(state);
    }

    void record(const SimState& state) {
        if (state.step % static_cast<std::int64_t>(config_.sim.record_stride) != 0) return;
        if (keep_series_) result_.series.push_back(sample_metrics(model_, state, config_.sim.metrics_scope));
        if (observer_) observer_(state);
    }

    void finish(const SimState& state) {
        auto& out = result_.outcome;
        for (const auto& e : state.events) {
            if (e.kind != EventKind::LineTripped) continue;
            ++out.n_c_after;
            const auto k = steps_for(e.t, config_.sim.dt);
            if (k >= on_ && k < off_) ++out.n_c_during;
        }
        out.n_active_final = count_failures(state.line_status).n_active;
        out.mean_delta_omega_during = count_during_ ? sum_during_ / static_cast<double>(count_during_) : 0.0;
        out.mean_delta_omega_after = count_after_ ? sum_after_ / static_cast<double>(count_after_) : 0.0;
        out.final_r = order_parameter(state.theta, scope_nodes(state.removed, config_.sim.metrics_scope)).r;
        result_.events = state.events;
    }

    const SwingModel& model_;
    PerturbationSchedule schedule_;
    ScenarioConfig config_;
    bool keep_series_;
    StateObserver observer_;
    std::int64_t on_, off_, end_;
    double sum_during_ = 0.0, sum_after_ = 0.0;
    std::size_t count_during_ = 0, count_after_ = 0;
    ScenarioResult result_;
};

inline ScenarioResult relaxation_failure(const RelaxResult& relaxed, ScenarioResult partial) {
    partial.outcome.status = RunStatus::RelaxationFailed;
    partial.outcome.relax_status = relaxed.status;
    partial.outcome.stable = relaxed.status != RelaxStatus::Unstable;
    partial.outcome.n_c_after = relaxed.state.trip_count();
    partial.outcome.n_active_final = count_failures(relaxed.state.line_status).n_active;
    partial.events = relaxed.state.events;
    return partial;
}

}  // namespace detail

/// Relax, remove the faulted node at t_on, reconnect it at t_off, integrate to t_end.
/// A relaxation that trips a line or misses the Delta omega threshold marks the run
/// RelaxationFailed and stops there.
inline ScenarioResult run_scenario(const PowerGrid& grid, const ControlLayers& layers,
                                   const PerturbationSchedule& schedule, const ScenarioConfig& config,
                                   bool keep_series = true, const StateObserver& observer = {}) {
    check_schedule(schedule, config, grid.num_nodes());
    SwingModel model(grid, layers, config.sim.integral_form);
    detail::FaultRun run(model, schedule, config, keep_series, observer);
    const auto relax_steps = steps_for(config.relax.duration, config.sim.dt);
    auto relaxed = relax_to_sync(model, config.sim.dt, config.relax, [&](const SimState& s) {
        if (s.step < relax_steps) run.observe_relaxation(s);
    });
    if (!relaxed.ok()) return detail::relaxation_failure(relaxed, run.take_partial());
    return run.run_from(std::move(relaxed.state));
}

// ---------------------------------------------------------------------------
// Parallel task helper
// ---------------------------------------------------------------------------

inline std::size_t resolve_workers(std::size_t workers) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    return workers;
}

/// Runs task(i) for i in [0, count) on `workers` threads. Tasks write to their
/// own slot, so results do not depend on the worker count or completion order.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task) {
    workers = std::min(resolve_workers(workers), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Critical-node scan
// ---------------------------------------------------------------------------

struct ScanOptions {
    double removal_window = 1000.0;
    double observation_after = 200.0;
    std::size_t workers = 1;
};

struct NodeScan {
    NodeIndex node = 0;
    std::size_t n_c = 0;  // overload trips while the node is out of service
    RunOutcome outcome;
};

struct CriticalScanResult {
    std::vector<NodeScan> nodes;
    std::vector<NodeIndex> critical;
    RelaxStatus relax_status = RelaxStatus::Converged;
};

/// Schedule used by the scan: removal right after relaxation, fixed window, fixed tail.
inline std::pair<PerturbationSchedule, ScenarioConfig> scan_schedule(NodeIndex node, const ScenarioConfig& base,
                                                                     const ScanOptions& options) {
    PerturbationSchedule schedule{node, base.relax.duration, base.relax.duration + options.removal_window, false};
    ScenarioConfig config = base;
    config.sim.t_end = schedule.t_off + options.observation_after;
    return {schedule, config};
}

/// Removes each node in turn from the uncontrolled grid; a node is critical when
/// its removal trips at least one line. Trips after reconnection are kept in the
/// outcome but do not count toward n_c. The relaxed operating point is shared.
inline CriticalScanResult critical_scan(const PowerGrid& grid, const ScenarioConfig& base,
                                        const ScanOptions& options = {}) {
    const auto n = grid.num_nodes();
    const auto layers = uncontrolled_layers(n);
    SwingModel relax_model(grid, layers, base.sim.integral_form);
    auto relaxed = relax_to_sync(relax_model, base.sim.dt, base.relax);

    CriticalScanResult result;
    result.relax_status = relaxed.status;
    result.nodes.resize(n);
    parallel_for(n, options.workers, [&](std::size_t i) {
        auto [schedule, config] = scan_schedule(i, base, options);
        check_schedule(schedule, config, n);
        NodeScan& slot = result.nodes[i];
        slot.node = i;
        if (!relaxed.ok()) {
            slot.outcome = detail::relaxation_failure(relaxed, {}).outcome;
            slot.n_c = slot.outcome.n_c_after;  // trips during relaxation
            return;
        }
        SwingModel model(grid, layers, config.sim.integral_form);
        detail::FaultRun run(model, schedule, config, false, {});
        slot.outcome = run.run_from(relaxed.state).outcome;
        slot.n_c = slot.outcome.n_c_during;
    });
    for (const auto& s : result.nodes)
        if (s.n_c != 0 && s.outcome.status == RunStatus::Ok) result.critical.push_back(s.node);
    return result;
}

// ---------------------------------------------------------------------------
// Gain curves and sweeps
// ---------------------------------------------------------------------------

struct GpPoint {
    double gp = 0.0;
    std::size_t n_c = 0;  // same count as NodeScan::n_c
    RunOutcome outcome;
};

inline ControlLayer with_gain(ControlLayer layer, double gain) {
    layer.gain = gain;
    return layer;
}

/// Proportional-only control (G_I = 0): n_c of one fault scenario per G_P value.
inline std::vector<GpPoint> gp_curve(const PowerGrid& grid, const ControlLayer& proportional,
                                     const PerturbationSchedule& schedule, const std::vector<double>& gp_values,
                                     const ScenarioConfig& config, std::size_t workers = 1) {
    const auto n = grid.num_nodes();
    ControlLayer integral{AdjacencyMatrix(n), std::vector<std::uint8_t>(n, 0), 0.0};
    std::vector<GpPoint> out(gp_values.size());
    parallel_for(gp_values.size(), workers, [&](std::size_t k) {
        ControlLayers layers{with_gain(proportional, gp_values[k]), integral};
        auto res = run_scenario(grid, layers, schedule, config, false);
        const auto& o = res.outcome;
        out[k] = {gp_values[k], o.status == RunStatus::RelaxationFailed ? o.n_c_after : o.n_c_during, o};
    });
    return out;
}

struct SweepSpec {
    std::vector<double> gp_values;
    std::vector<double> gi_values;
    PowerGrid grid;
    ControlLayers layers;  // gains are overwritten per cell
    PerturbationSchedule schedule;
    ScenarioConfig config;
};

inline void check_gain_list(const std::vector<double>& values, const char* name) {
    if (values.empty()) throw std::invalid_argument(std::string(name) + " list is empty");
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values[k] >= 0.0)) throw std::invalid_argument(std::string(name) + " values must be >= 0");
        if (k > 0 && !(values[k] > values[k - 1]))
            throw std::invalid_argument(std::string(name) + " values must be strictly increasing");
    }
}

struct SweepResult {
    std::vector<double> gp_values;
    std::vector<double> gi_values;
    std::vector<RunOutcome> cells;  // row-major: gp index outer, gi index inner

    [[nodiscard]] const RunOutcome& at(std::size_t gp_index, std::size_t gi_index) const {
        return cells.at(gp_index * gi_values.size() + gi_index);
    }
};

/// One fault run per (G_P, G_I) pair. Failed runs stay in their cell.
inline SweepResult sweep_gains(const SweepSpec& spec, std::size_t workers = 1) {
    check_gain_list(spec.gp_values, "G_P");
    check_gain_list(spec.gi_values, "G_I");
    check_schedule(spec.schedule, spec.config, spec.grid.num_nodes());
    SweepResult result{spec.gp_values, spec.gi_values,
                       std::vector<RunOutcome>(spec.gp_values.size() * spec.gi_values.size())};
    const auto n_gi = spec.gi_values.size();
    parallel_for(result.cells.size(), workers, [&](std::size_t cell) {
        const auto gp = spec.gp_values[cell / n_gi];
        const auto gi = spec.gi_values[cell % n_gi];
        ControlLayers layers{with_gain(spec.layers.proportional, gp), with_gain(spec.layers.integral, gi)};
        try {
            result.cells[cell] = run_scenario(spec.grid, layers, spec.schedule, spec.config, false).outcome;
        } catch (const std::exception&) {
            RunOutcome failed;
            failed.stable = false;
            failed.status = RunStatus::Unstable;
            result.cells[cell] = failed;
        }
    });
    return result;
}

}  // namespace gridsync
