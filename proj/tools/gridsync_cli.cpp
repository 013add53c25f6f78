// gridsync: command-line front end for grid fault experiments.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gridsync/gridsync.hpp"

using namespace gridsync;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvalid = 2, kNumerical = 3 };

struct Common {
    std::string preset = "none";
    std::string generator_power = "balanced";
    double dt = 0.01;
    std::uint64_t seed = 1;
    std::string grid_path;
};

struct RunOptions {
    std::string prop_layer, int_layer;
    double gp = 0.0, gi = 0.0;
    std::size_t node = 1;
    double t_on = 200.0, t_off = 1200.0, t_end = 1400.0;
    double relax = 200.0, relax_threshold = 1e-6;
    bool cofail = false;
    std::string integral_form = "frequency-integral";
    std::string scope = "active";
    std::size_t stride = 1;
    std::size_t workers = 1;
};

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a(ss.str())));
    return buf;
}

PowerGrid load_grid(const Common& c) {
    auto grid = io::load_grid(c.grid_path);
    if (c.preset != "none") {
        auto mode = c.generator_power == "literal" ? GeneratorPowerMode::Literal : GeneratorPowerMode::Balanced;
        grid = apply_preset(grid, preset_by_name(c.preset), mode);
        if (auto v = validate(grid); !v.empty()) throw io::ValidationError(v);
    }
    return grid;
}

io::RunManifest manifest(const Common& c, nlohmann::json config) {
    io::RunManifest m;
    m.preset = c.preset;
    m.seeds["seed"] = c.seed;
    if (!c.grid_path.empty()) m.datasets["grid"] = c.grid_path + "@fnv1a:" + file_digest(c.grid_path);
    config["preset_generator_power"] = c.generator_power;
    m.config = std::move(config);
    return m;
}

ControlLayer load_or_default(const std::string& path, const ControlLayer& fallback, std::size_t n) {
    if (path.empty()) return fallback;
    auto layer = io::load_layer(path);
    if (auto v = validate_layer(layer, n); !v.empty()) throw io::ValidationError(v);
    return layer;
}

/// Default layers: proportional on the physical topology with every node pinned,
/// integral on its generator-local derivation pinned at generators.
ControlLayers resolve_layers(const PowerGrid& grid, const RunOptions& o) {
    const auto n = grid.num_nodes();
    auto physical = AdjacencyMatrix::from_grid(grid);
    ControlLayer prop{physical, pin_all(n), 0.0};
    ControlLayer integ{derive_local(physical, grid.generators()), pin_generators(grid), 0.0};
    ControlLayers layers{load_or_default(o.prop_layer, prop, n), load_or_default(o.int_layer, integ, n)};
    layers.proportional.gain = o.gp;
    layers.integral.gain = o.gi;
    return layers;
}

ScenarioConfig scenario_config(const Common& c, const RunOptions& o) {
    ScenarioConfig cfg;
    cfg.sim.dt = c.dt;
    cfg.sim.t_end = o.t_end;
    cfg.sim.record_stride = o.stride;
    cfg.sim.integral_form =
        o.integral_form == "phase-difference" ? IntegralForm::PhaseDifference : IntegralForm::FrequencyIntegral;
    cfg.sim.metrics_scope = o.scope == "all" ? MetricsScope::AllNodes : MetricsScope::ActiveNodesOnly;
    cfg.relax = {o.relax, o.relax_threshold};
    return cfg;
}

PerturbationSchedule schedule_of(const PowerGrid& grid, const RunOptions& o) {
    if (o.node < 1 || o.node > grid.num_nodes())
        throw std::invalid_argument("--node must be in 1.." + std::to_string(grid.num_nodes()));
    return {o.node - 1, o.t_on, o.t_off, o.cofail};
}

std::ofstream open_out(const std::string& path) { return io::detail::open_out(path); }

nlohmann::json outcome_json(const RunOutcome& r) {
    return {{"n_c_during", r.n_c_during},
            {"n_c_after", r.n_c_after},
            {"n_active_final", r.n_active_final},
            {"mean_delta_omega_during", r.mean_delta_omega_during},
            {"mean_delta_omega_after", r.mean_delta_omega_after},
            {"final_r", r.final_r},
            {"stable", r.stable},
            {"status", to_string(r.status)},
            {"relax_status", to_string(r.relax_status)}};
}

void add_common(CLI::App* app, Common& c, bool needs_grid) {
    app->add_option("--preset", c.preset, "Parameter preset applied to the grid")
        ->check(CLI::IsMember({"none", "controlled-default", "critical-scan"}));
    app->add_option("--generator-power", c.generator_power, "Generator power under a preset")
        ->check(CLI::IsMember({"balanced", "literal"}));
    app->add_option("--dt", c.dt, "Integration step")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "Seed recorded in the manifest (used by gen-er)");
    auto* g = app->add_option("--grid", c.grid_path, "Grid file");
    if (needs_grid) g->required()->check(CLI::ExistingFile);
}

void add_run(CLI::App* app, RunOptions& o) {
    app->add_option("--prop-layer", o.prop_layer, "Proportional layer file (default: physical topology)")
        ->check(CLI::ExistingFile);
    app->add_option("--int-layer", o.int_layer, "Integral layer file (default: generator-local)")
        ->check(CLI::ExistingFile);
    app->add_option("--node", o.node, "Faulted node (1-based)");
    app->add_option("--t-on", o.t_on, "Removal time");
    app->add_option("--t-off", o.t_off, "Reconnection time");
    app->add_option("--t-end", o.t_end, "End time");
    app->add_option("--relax", o.relax, "Relaxation duration");
    app->add_option("--relax-threshold", o.relax_threshold, "Delta omega threshold after relaxation");
    app->add_flag("--cyber-cofail", o.cofail, "Drop the node's controllers while it is removed");
    app->add_option("--integral-form", o.integral_form)
        ->check(CLI::IsMember({"frequency-integral", "phase-difference"}));
    app->add_option("--metrics-scope", o.scope)->check(CLI::IsMember({"active", "all"}));
    app->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
}

int run_simulate(const Common& c, const RunOptions& o, const std::string& ts_path, const std::string& ev_path) {
    auto grid = load_grid(c);
    auto layers = resolve_layers(grid, o);
    auto cfg = scenario_config(c, o);
    auto sched = schedule_of(grid, o);
    auto res = run_scenario(grid, layers, sched, cfg, !ts_path.empty());
    auto config = io::config_json(cfg);
    config["schedule"] = io::schedule_json(sched);
    config["gp"] = o.gp;
    config["gi"] = o.gi;
    auto m = manifest(c, config);
    if (!o.prop_layer.empty()) m.datasets["prop_layer"] = o.prop_layer + "@fnv1a:" + file_digest(o.prop_layer);
    if (!o.int_layer.empty()) m.datasets["int_layer"] = o.int_layer + "@fnv1a:" + file_digest(o.int_layer);
    if (!ts_path.empty()) {
        auto out = open_out(ts_path);
        io::write_timeseries(out, res.series, m);
    }
    if (!ev_path.empty()) {
        auto out = open_out(ev_path);
        io::write_events(out, grid, res.events, m);
    }
    std::cout << outcome_json(res.outcome).dump(2) << '\n';
    if (!res.outcome.stable) return kNumerical;
    return kOk;
}

int run_scan(const Common& c, const RunOptions& o, double window, double after, const std::string& out_path) {
    auto grid = load_grid(c);
    auto cfg = scenario_config(c, o);
    auto scan = critical_scan(grid, cfg, {window, after, o.workers});
    auto config = io::config_json(cfg);
    config["removal_window"] = window;
    config["observation_after"] = after;
    auto m = manifest(c, config);
    if (!out_path.empty()) {
        auto out = open_out(out_path);
        io::write_manifest_comment(out, m);
        out << "node,n_c,n_c_total,n_active_final,critical,status\n";
        for (const auto& s : scan.nodes)
            out << s.node + 1 << ',' << s.n_c << ',' << s.outcome.n_c_after << ',' << s.outcome.n_active_final
                << ',' << (s.n_c != 0 && s.outcome.status == RunStatus::Ok ? 1 : 0) << ','
                << to_string(s.outcome.status) << '\n';
    }
    std::cout << "relaxation: " << to_string(scan.relax_status) << "\ncritical nodes (" << scan.critical.size()
              << "):";
    for (auto i : scan.critical) std::cout << ' ' << i + 1;
    std::cout << '\n';
    return scan.relax_status == RelaxStatus::Unstable ? kNumerical : kOk;
}

int run_gp_curve(const Common& c, const RunOptions& o, const std::vector<double>& gp, const std::string& out_path) {
    check_gain_list(gp, "G_P");
    auto grid = load_grid(c);
    auto layers = resolve_layers(grid, o);
    auto cfg = scenario_config(c, o);
    auto sched = schedule_of(grid, o);
    auto curve = gp_curve(grid, layers.proportional, sched, gp, cfg, o.workers);
    auto config = io::config_json(cfg);
    config["schedule"] = io::schedule_json(sched);
    config["gp_values"] = gp;
    auto m = manifest(c, config);
    auto emit = [&](std::ostream& out) {
        io::write_manifest_comment(out, m);
        out << "gp,n_c,n_c_total,n_active_final,stable,status\n";
        for (const auto& p : curve)
            out << io::format_real(p.gp) << ',' << p.n_c << ',' << p.outcome.n_c_after << ','
                << p.outcome.n_active_final << ',' << (p.outcome.stable ? 1 : 0) << ',' << to_string(p.outcome.status)
                << '\n';
    };
    if (out_path.empty()) {
        emit(std::cout);
    } else {
        auto out = open_out(out_path);
        emit(out);
    }
    return kOk;
}

int run_sweep(const Common& c, const RunOptions& o, const std::vector<double>& gp, const std::vector<double>& gi,
              const std::string& out_path) {
    auto grid = load_grid(c);
    SweepSpec spec{gp, gi, grid, resolve_layers(grid, o), schedule_of(grid, o), scenario_config(c, o)};
    auto sweep = sweep_gains(spec, o.workers);
    auto config = io::config_json(spec.config);
    config["schedule"] = io::schedule_json(spec.schedule);
    config["gp_values"] = gp;
    config["gi_values"] = gi;
    auto m = manifest(c, config);
    if (out_path.empty()) {
        io::write_sweep(std::cout, sweep, m);
    } else {
        auto out = open_out(out_path);
        io::write_sweep(out, sweep, m);
    }
    return kOk;
}

std::vector<std::uint8_t> pinning_for(const std::string& mode, std::size_t n, const PowerGrid* grid) {
    if (mode == "all") return pin_all(n);
    if (mode == "none") return std::vector<std::uint8_t>(n, 0);
    if (!grid) throw std::invalid_argument("--pinning generators needs --grid");
    return pin_generators(*grid);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridsync: controlled swing-equation grids under node faults"};
    app.require_subcommand(1);

    Common common;
    RunOptions run;
    std::string ts_path, ev_path, out_path;
    std::vector<double> gp_values, gi_values;
    double window = 1000.0, after = 200.0;

    auto* sim = app.add_subcommand("simulate", "Relax, remove a node, reconnect it, report the outcome");
    add_common(sim, common, true);
    add_run(sim, run);
    sim->add_option("--gp", run.gp, "Proportional gain")->check(CLI::NonNegativeNumber);
    sim->add_option("--gi", run.gi, "Integral gain")->check(CLI::NonNegativeNumber);
    sim->add_option("--stride", run.stride, "Record every n-th step")->check(CLI::PositiveNumber);
    sim->add_option("--timeseries", ts_path, "Time-series CSV output");
    sim->add_option("--events", ev_path, "Event log JSON output");

    auto* scan = app.add_subcommand("critical-scan", "Remove each node of the uncontrolled grid in turn");
    add_common(scan, common, true);
    add_run(scan, run);
    scan->add_option("--window", window, "Removal window length");
    scan->add_option("--after", after, "Observation time after reconnection");
    scan->add_option("--out", out_path, "Per-node CSV output");

    auto* curve = app.add_subcommand("gp-curve", "n_c against the proportional gain (G_I = 0)");
    add_common(curve, common, true);
    add_run(curve, run);
    curve->add_option("--gp", gp_values, "Comma-separated G_P values")->required()->delimiter(',');
    curve->add_option("--out", out_path, "CSV output (default: stdout)");

    auto* sweep = app.add_subcommand("sweep", "Dense (G_P, G_I) sweep of one fault scenario");
    add_common(sweep, common, true);
    add_run(sweep, run);
    sweep->add_option("--gp", gp_values, "Comma-separated G_P values")->required()->delimiter(',');
    sweep->add_option("--gi", gi_values, "Comma-separated G_I values")->required()->delimiter(',');
    sweep->add_option("--out", out_path, "CSV output (default: stdout)");

    std::string derive_mode, base_path, pin_mode = "generators";
    auto* derive = app.add_subcommand("derive-topology", "Generator-local or extended layer from a base layer");
    add_common(derive, common, true);
    derive->add_option("mode", derive_mode, "local or extended")->required()->check(CLI::IsMember({"local", "extended"}));
    derive->add_option("--base", base_path, "Base layer file")->required()->check(CLI::ExistingFile);
    derive->add_option("--pinning", pin_mode)->check(CLI::IsMember({"generators", "all", "none"}));
    derive->add_option("--out", out_path, "Output layer file")->required();

    std::size_t er_n = 0;
    double er_p = 0.0;
    auto* er = app.add_subcommand("gen-er", "Erdos-Renyi control layer");
    add_common(er, common, false);
    er->add_option("--n", er_n, "Number of nodes")->required()->check(CLI::PositiveNumber);
    er->add_option("--p", er_p, "Edge probability")->required()->check(CLI::Range(0.0, 1.0));
    er->add_option("--pinning", pin_mode)->check(CLI::IsMember({"generators", "all", "none"}));
    er->add_option("--out", out_path, "Output layer file")->required();

    std::string layer_path;
    auto* val = app.add_subcommand("validate", "Check a grid file (and optionally a layer file)");
    add_common(val, common, true);
    val->add_option("--layer", layer_path, "Layer file to check against the grid")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*sim) return run_simulate(common, run, ts_path, ev_path);
        if (*scan) return run_scan(common, run, window, after, out_path);
        if (*curve) return run_gp_curve(common, run, gp_values, out_path);
        if (*sweep) return run_sweep(common, run, gp_values, gi_values, out_path);
        if (*derive) {
            auto grid = load_grid(common);
            auto base = io::load_layer(base_path);
            if (base.size() != grid.num_nodes()) throw std::invalid_argument("base layer and grid sizes differ");
            const auto gens = grid.generators();
            ControlLayer out{derive_mode == "local" ? derive_local(base.adjacency, gens)
                                                    : derive_extended(base.adjacency, gens),
                             pinning_for(pin_mode, grid.num_nodes(), &grid), 0.0};
            io::save_layer(out_path, out);
            std::cout << derive_mode << " layer: " << out.adjacency.edge_count() << " edges\n";
            return kOk;
        }
        if (*er) {
            std::optional<PowerGrid> grid;
            if (!common.grid_path.empty()) grid = load_grid(common);
            if (pin_mode == "generators" && !grid) pin_mode = "all";
            ControlLayer out{gen_er(er_n, er_p, common.seed), pinning_for(pin_mode, er_n, grid ? &*grid : nullptr),
                             0.0};
            io::save_layer(out_path, out);
            std::cout << kErGeneratorVersion << " n=" << er_n << " p=" << io::format_real(er_p)
                      << " seed=" << common.seed << " edges=" << out.adjacency.edge_count() << '\n';
            return kOk;
        }
        if (*val) {
            auto grid = load_grid(common);
            std::cout << "N=" << grid.num_nodes() << " E=" << grid.num_lines() << " N_g=" << grid.num_generators()
                      << " imbalance=" << io::format_real(power_imbalance(grid)) << '\n';
            if (!layer_path.empty()) {
                auto layer = io::load_layer(layer_path);
                if (auto v = validate_layer(layer, grid.num_nodes()); !v.empty()) throw io::ValidationError(v);
                std::cout << "layer: " << layer.adjacency.edge_count() << " edges, "
                          << connected_components(layer.adjacency) << " component(s)\n";
            }
            return kOk;
        }
    } catch (const io::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const io::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const NumericalInstability& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    }
    return kUsage;
}
