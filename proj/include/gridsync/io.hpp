#pragma once

// Text file formats and run manifests.
//
// Grid files:
//     version 1.0
//     node <id> <generator|load> <P> <I> <gamma>
//     edge <i> <j> <K> <alpha>
// Layer files:
//     version 1.0
//     xi <id> <0|1>
//     edge <i> <j>
// Ids are 1-based; '#' starts a comment. Output CSV files start with a
// '# manifest ' comment line carrying the run manifest as JSON.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gridsync/grid.hpp"
#include "gridsync/scenario.hpp"
#include "gridsync/topology.hpp"

namespace gridsync::io {

inline constexpr int kFormatMajor = 1;
inline constexpr const char* kFormatVersion = "1.0";

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
    [[nodiscard]] const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "validation failed";
        for (const auto& s : v) out += "\n  " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

/// Shortest round-trip-safe rendering: 17 significant digits.
inline std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct RunManifest {
    std::string preset = "none";
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> datasets;
    nlohmann::json config = nlohmann::json::object();

    [[nodiscard]] std::string config_hash() const {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
        return buf;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"format_version", kFormatVersion}, {"preset", preset},       {"seeds", seeds},
                {"datasets", datasets},             {"config", config},       {"config_hash", config_hash()}};
    }
};

inline nlohmann::json config_json(const ScenarioConfig& config) {
    return {{"dt", config.sim.dt},
            {"t_end", config.sim.t_end},
            {"record_stride", config.sim.record_stride},
            {"integral_form", to_string(config.sim.integral_form)},
            {"metrics_scope", to_string(config.sim.metrics_scope)},
            {"relax_duration", config.relax.duration},
            {"relax_delta_omega_threshold", config.relax.delta_omega_threshold},
            {"window_aggregation", "time-average per step; during=[t_on,t_off), after=[t_off,t_end]"}};
}

inline nlohmann::json schedule_json(const PerturbationSchedule& s) {
    return {{"node", s.node + 1}, {"t_on", s.t_on}, {"t_off", s.t_off}, {"cyber_cofail", s.cyber_cofail}};
}

// ---------------------------------------------------------------------------
// Line-oriented text parsing
// ---------------------------------------------------------------------------

namespace detail {

struct Line {
    std::size_t number;
    std::vector<std::string> tokens;
};

inline std::vector<Line> tokenize(std::istream& in) {
    std::vector<Line> out;
    std::string text;
    std::size_t number = 0;
    while (std::getline(in, text)) {
        ++number;
        if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
        std::istringstream ss(text);
        Line line{number, {}};
        for (std::string tok; ss >> tok;) line.tokens.push_back(tok);
        if (!line.tokens.empty()) out.push_back(std::move(line));
    }
    return out;
}

inline double parse_real(const std::string& source, const Line& line, const std::string& tok) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used == tok.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(source, line.number, "expected a number, got '" + tok + "'");
}

inline std::size_t parse_id(const std::string& source, const Line& line, const std::string& tok) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(tok, &used);
        if (used == tok.size() && v >= 1) return static_cast<std::size_t>(v - 1);
    } catch (const std::exception&) {
    }
    throw ParseError(source, line.number, "expected a 1-based node id, got '" + tok + "'");
}

inline void check_version(const std::string& source, const Line& line) {
    if (line.tokens.size() != 2) throw ParseError(source, line.number, "expected 'version <major>.<minor>'");
    const auto& v = line.tokens[1];
    int major = -1;
    try {
        major = std::stoi(v.substr(0, v.find('.')));
    } catch (const std::exception&) {
        throw ParseError(source, line.number, "malformed version '" + v + "'");
    }
    if (major != kFormatMajor)
        throw ParseError(source, line.number, "unsupported format major version " + std::to_string(major));
}

inline void expect_arity(const std::string& source, const Line& line, std::size_t n) {
    if (line.tokens.size() != n)
        throw ParseError(source, line.number,
                         "'" + line.tokens[0] + "' expects " + std::to_string(n - 1) + " fields");
}

/// Checks that declared ids are exactly 1..n.
inline void require_contiguous(const std::string& source, const std::map<std::size_t, std::size_t>& first_seen,
                               const char* what) {
    std::size_t expect = 0;
    for (const auto& [id, line] : first_seen) {
        if (id != expect)
            throw ParseError(source, line, std::string(what) + " ids must be 1.." + std::to_string(first_seen.size()));
        ++expect;
    }
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grid files
// ---------------------------------------------------------------------------

inline PowerGrid parse_grid(std::istream& in, const std::string& source = "<grid>") {
    using detail::parse_id;
    using detail::parse_real;
    std::map<std::size_t, GridNode> nodes;
    std::map<std::size_t, std::size_t> declared;
    std::vector<std::pair<GridLine, std::size_t>> lines;
    for (const auto& line : detail::tokenize(in)) {
        const auto& kw = line.tokens[0];
        if (kw == "version") {
            detail::check_version(source, line);
        } else if (kw == "node") {
            detail::expect_arity(source, line, 6);
            const auto id = parse_id(source, line, line.tokens[1]);
            GridNode node;
            if (line.tokens[2] == "generator")
                node.kind = NodeKind::Generator;
            else if (line.tokens[2] == "load")
                node.kind = NodeKind::Load;
            else
                throw ParseError(source, line.number, "node kind must be 'generator' or 'load'");
            node.power = parse_real(source, line, line.tokens[3]);
            node.inertia = parse_real(source, line, line.tokens[4]);
            node.damping = parse_real(source, line, line.tokens[5]);
            if (!declared.emplace(id, line.number).second)
                throw ParseError(source, line.number, "node " + std::to_string(id + 1) + " declared twice");
            nodes[id] = node;
        } else if (kw == "edge") {
            detail::expect_arity(source, line, 5);
            GridLine gl{parse_id(source, line, line.tokens[1]), parse_id(source, line, line.tokens[2]),
                        parse_real(source, line, line.tokens[3]), parse_real(source, line, line.tokens[4])};
            lines.emplace_back(gl, line.number);
        } else {
            throw ParseError(source, line.number, "unknown record '" + kw + "'");
        }
    }
    detail::require_contiguous(source, declared, "node");
    const auto n = nodes.size();
    for (const auto& [gl, number] : lines)
        if (gl.from >= n || gl.to >= n)
            throw ParseError(source, number,
                             "edge references node " + std::to_string(std::max(gl.from, gl.to) + 1) +
                                 " but the grid has " + std::to_string(n) + " nodes");
    std::vector<GridNode> node_list;
    for (auto& [id, node] : nodes) node_list.push_back(node);
    std::vector<GridLine> line_list;
    for (auto& [gl, number] : lines) line_list.push_back(gl);
    PowerGrid grid(std::move(node_list), std::move(line_list));
    if (auto violations = validate(grid); !violations.empty()) throw ValidationError(std::move(violations));
    return grid;
}

inline PowerGrid load_grid(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_grid(in, path);
}

inline void write_grid(std::ostream& out, const PowerGrid& grid) {
    out << "version " << kFormatVersion << "\n";
    for (NodeIndex i = 0; i < grid.num_nodes(); ++i) {
        const auto& node = grid.node(i);
        out << "node " << i + 1 << ' ' << to_string(node.kind) << ' ' << format_real(node.power) << ' '
            << format_real(node.inertia) << ' ' << format_real(node.damping) << '\n';
    }
    for (const auto& line : grid.lines())
        out << "edge " << line.from + 1 << ' ' << line.to + 1 << ' ' << format_real(line.coupling) << ' '
            << format_real(line.capacity_fraction) << '\n';
}

inline void save_grid(const std::string& path, const PowerGrid& grid) {
    auto out = detail::open_out(path);
    write_grid(out, grid);
}

// ---------------------------------------------------------------------------
// Layer files (gain is supplied at run time)
// ---------------------------------------------------------------------------

inline ControlLayer parse_layer(std::istream& in, const std::string& source = "<layer>") {
    using detail::parse_id;
    std::map<std::size_t, std::uint8_t> xi;
    std::map<std::size_t, std::size_t> declared;
    std::vector<std::pair<std::pair<NodeIndex, NodeIndex>, std::size_t>> edges;
    for (const auto& line : detail::tokenize(in)) {
        const auto& kw = line.tokens[0];
        if (kw == "version") {
            detail::check_version(source, line);
        } else if (kw == "xi") {
            detail::expect_arity(source, line, 3);
            const auto id = parse_id(source, line, line.tokens[1]);
            const auto& v = line.tokens[2];
            if (v != "0" && v != "1") throw ParseError(source, line.number, "xi value must be 0 or 1");
            if (!declared.emplace(id, line.number).second)
                throw ParseError(source, line.number, "xi for node " + std::to_string(id + 1) + " given twice");
            xi[id] = v == "1" ? 1 : 0;
        } else if (kw == "edge") {
            detail::expect_arity(source, line, 3);
            edges.push_back({{parse_id(source, line, line.tokens[1]), parse_id(source, line, line.tokens[2])},
                             line.number});
        } else {
            throw ParseError(source, line.number, "unknown record '" + kw + "'");
        }
    }
    detail::require_contiguous(source, declared, "xi");
    const auto n = xi.size();
    ControlLayer layer{AdjacencyMatrix(n), {}, 0.0};
    for (auto& [id, v] : xi) layer.pinning.push_back(v);
    for (const auto& [e, number] : edges) {
        if (e.first >= n || e.second >= n)
            throw ParseError(source, number, "edge references a node outside 1.." + std::to_string(n));
        if (e.first == e.second) throw ParseError(source, number, "self-loop");
        layer.adjacency.connect(e.first, e.second);
    }
    return layer;
}

inline ControlLayer load_layer(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_layer(in, path);
}

inline void write_layer(std::ostream& out, const ControlLayer& layer) {
    out << "version " << kFormatVersion << "\n";
    for (std::size_t i = 0; i < layer.pinning.size(); ++i)
        out << "xi " << i + 1 << ' ' << static_cast<int>(layer.pinning[i]) << '\n';
    for (auto [i, j] : layer.adjacency.edges()) out << "edge " << i + 1 << ' ' << j + 1 << '\n';
}

inline void save_layer(const std::string& path, const ControlLayer& layer) {
    auto out = detail::open_out(path);
    write_layer(out, layer);
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

inline constexpr const char* kTimeseriesHeader = "t,r,phi,delta_omega,mean_omega,power_loss,n_failed,n_active_links";
inline constexpr const char* kSweepHeader =
    "gp,gi,n_c_during,n_c_after,n_active_final,mean_delta_omega_during,mean_delta_omega_after,final_r,stable,status";

inline void write_manifest_comment(std::ostream& out, const RunManifest& manifest) {
    out << "# manifest " << manifest.to_json().dump() << '\n';
}

inline void write_timeseries(std::ostream& out, const std::vector<MetricsSample>& series,
                             const RunManifest& manifest) {
    write_manifest_comment(out, manifest);
    out << kTimeseriesHeader << '\n';
    for (const auto& s : series)
        out << format_real(s.t) << ',' << format_real(s.r) << ',' << format_real(s.phi) << ','
            << format_real(s.delta_omega) << ',' << format_real(s.mean_omega) << ',' << format_real(s.power_loss)
            << ',' << s.n_failed << ',' << s.n_active_links << '\n';
}

inline void write_sweep(std::ostream& out, const SweepResult& sweep, const RunManifest& manifest) {
    write_manifest_comment(out, manifest);
    out << kSweepHeader << '\n';
    for (std::size_t a = 0; a < sweep.gp_values.size(); ++a)
        for (std::size_t b = 0; b < sweep.gi_values.size(); ++b) {
            const auto& c = sweep.at(a, b);
            out << format_real(sweep.gp_values[a]) << ',' << format_real(sweep.gi_values[b]) << ',' << c.n_c_during
                << ',' << c.n_c_after << ',' << c.n_active_final << ',' << format_real(c.mean_delta_omega_during)
                << ',' << format_real(c.mean_delta_omega_after) << ',' << format_real(c.final_r) << ','
                << (c.stable ? 1 : 0) << ',' << to_string(c.status) << '\n';
        }
}

inline nlohmann::json events_json(const PowerGrid& grid, const std::vector<Event>& events,
                                  const RunManifest& manifest) {
    auto list = nlohmann::json::array();
    for (const auto& e : events) {
        nlohmann::json j{{"t", e.t}, {"kind", to_string(e.kind)}};
        if (e.kind == EventKind::LineTripped) {
            const auto& line = grid.line(e.subject);
            j["line"] = e.subject + 1;
            j["endpoints"] = {line.from + 1, line.to + 1};
        } else {
            j["node"] = e.subject + 1;
        }
        list.push_back(std::move(j));
    }
    return {{"format_version", kFormatVersion}, {"manifest", manifest.to_json()}, {"events", std::move(list)}};
}

inline void write_events(std::ostream& out, const PowerGrid& grid, const std::vector<Event>& events,
                         const RunManifest& manifest) {
    out << events_json(grid, events, manifest).dump(2) << '\n';
}

}  // namespace gridsync::io
