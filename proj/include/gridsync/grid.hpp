#pragma once

// Physical layer of the grid: generator/load nodes and transmission lines.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridsync {

using NodeIndex = std::size_t;
using LineIndex = std::size_t;

enum class NodeKind { Generator, Load };

inline const char* to_string(NodeKind kind) {
    return kind == NodeKind::Generator ? "generator" : "load";
}

struct GridNode {
    NodeKind kind = NodeKind::Load;
    double power = 0.0;    // P_i, per unit
    double inertia = 1.0;  // I_i
    double damping = 1.0;  // gamma_i
};

struct GridLine {
    NodeIndex from = 0;
    NodeIndex to = 0;
    double coupling = 0.0;           // K_ij
    double capacity_fraction = 1.0;  // alpha

    [[nodiscard]] double capacity() const { return capacity_fraction * coupling; }
};

/// Operating state of one line during a run. TrippedOverload is absorbing;
/// RemovedByNodeFault is undone only by reconnecting the faulted node.
struct LineStatus {
    enum class Kind : std::uint8_t { Active, TrippedOverload, RemovedByNodeFault };

    Kind kind = Kind::Active;
    double trip_time = 0.0;  // meaningful for TrippedOverload only

    static LineStatus active() { return {}; }
    static LineStatus tripped(double t) { return {Kind::TrippedOverload, t}; }
    static LineStatus removed_by_fault() { return {Kind::RemovedByNodeFault, 0.0}; }

    [[nodiscard]] bool is_active() const { return kind == Kind::Active; }
    [[nodiscard]] bool is_tripped() const { return kind == Kind::TrippedOverload; }
    [[nodiscard]] bool is_removed() const { return kind == Kind::RemovedByNodeFault; }

    bool operator==(const LineStatus&) const = default;
};

/// Immutable once built; line status lives in SimState.
class PowerGrid {
public:
    PowerGrid() = default;
    PowerGrid(std::vector<GridNode> nodes, std::vector<GridLine> lines)
        : nodes_(std::move(nodes)), lines_(std::move(lines)) {}

    [[nodiscard]] std::size_t num_nodes() const { return nodes_.size(); }
    [[nodiscard]] std::size_t num_lines() const { return lines_.size(); }

    [[nodiscard]] std::size_t num_generators() const {
        std::size_t n = 0;
        for (const auto& node : nodes_) n += node.kind == NodeKind::Generator;
        return n;
    }
    [[nodiscard]] std::size_t num_loads() const { return num_nodes() - num_generators(); }

    [[nodiscard]] const std::vector<GridNode>& nodes() const { return nodes_; }
    [[nodiscard]] const std::vector<GridLine>& lines() const { return lines_; }
    [[nodiscard]] const GridNode& node(NodeIndex i) const { return nodes_.at(i); }
    [[nodiscard]] const GridLine& line(LineIndex l) const { return lines_.at(l); }

    [[nodiscard]] std::vector<NodeIndex> generators() const {
        std::vector<NodeIndex> out;
        for (NodeIndex i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].kind == NodeKind::Generator) out.push_back(i);
        return out;
    }

    [[nodiscard]] std::size_t degree(NodeIndex i) const {
        std::size_t d = 0;
        for (const auto& line : lines_) d += (line.from == i || line.to == i);
        return d;
    }

private:
    std::vector<GridNode> nodes_;
    std::vector<GridLine> lines_;
};

/// Returns every structural violation as a readable message (1-based node ids).
/// A load with zero power is accepted (zero-injection bus).
inline std::vector<std::string> validate(const PowerGrid& grid) {
    std::vector<std::string> out;
    const auto n = grid.num_nodes();
    for (NodeIndex i = 0; i < n; ++i) {
        const auto& node = grid.node(i);
        const auto id = std::to_string(i + 1);
        if (node.kind == NodeKind::Generator && !(node.power > 0.0))
            out.push_back("node " + id + ": generator must have power > 0");
        if (node.kind == NodeKind::Load && !(node.power <= 0.0))
            out.push_back("node " + id + ": load must have power <= 0");
        if (!(node.inertia > 0.0)) out.push_back("node " + id + ": inertia must be > 0");
        if (!(node.damping > 0.0)) out.push_back("node " + id + ": damping must be > 0");
    }
    std::map<std::pair<NodeIndex, NodeIndex>, LineIndex> seen;
    for (LineIndex l = 0; l < grid.num_lines(); ++l) {
        const auto& line = grid.line(l);
        const auto tag = "line " + std::to_string(l + 1) + " (" + std::to_string(line.from + 1) + "," +
                         std::to_string(line.to + 1) + ")";
        if (line.from >= n || line.to >= n) {
            out.push_back(tag + ": endpoint index out of range for " + std::to_string(n) + " nodes");
            continue;
        }
        if (line.from == line.to) out.push_back(tag + ": self-loop");
        if (!(line.coupling >= 0.0)) out.push_back(tag + ": coupling must be >= 0");
        if (!(line.capacity_fraction >= 0.0 && line.capacity_fraction <= 1.0))
            out.push_back(tag + ": capacity fraction must lie in [0,1]");
        auto key = std::minmax(line.from, line.to);
        auto [it, inserted] = seen.emplace(key, l);
        if (!inserted)
            out.push_back(tag + ": duplicate of line " + std::to_string(it->second + 1));
    }
    return out;
}

/// Sum of node powers. With `include_removed == false`, nodes flagged in `removed` are skipped.
inline double power_imbalance(const PowerGrid& grid, const std::vector<bool>& removed = {},
                              bool include_removed = true) {
    double sum = 0.0;
    for (NodeIndex i = 0; i < grid.num_nodes(); ++i) {
        if (!include_removed && i < removed.size() && removed[i]) continue;
        sum += grid.node(i).power;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Parameter presets
// ---------------------------------------------------------------------------

struct ParameterPreset {
    std::string name;
    double inertia;
    double damping;
    double coupling;
    double capacity_fraction;
    double load_power;
};

inline ParameterPreset controlled_default_preset() {
    return {"controlled-default", 10.0, 1.0, 11.0, 0.8, -1.0};
}

inline ParameterPreset critical_scan_preset() {
    return {"critical-scan", 1.0, 0.1, 11.0, 0.8, -1.0};
}

inline ParameterPreset preset_by_name(const std::string& name) {
    if (name == "controlled-default") return controlled_default_preset();
    if (name == "critical-scan") return critical_scan_preset();
    throw std::invalid_argument("unknown preset: " + name);
}

enum class GeneratorPowerMode {
    Balanced,  // P_gen = -N_l * P_load / N_g, so the grid sums to zero
    Literal,   // P_gen = 2.735 as printed for the 127-node case study
};

inline constexpr double kLiteralGeneratorPower = 2.735;

/// Applies homogeneous parameters to a topology, keeping node kinds and line endpoints.
inline PowerGrid apply_preset(const PowerGrid& grid, const ParameterPreset& preset,
                              GeneratorPowerMode mode = GeneratorPowerMode::Balanced) {
    const auto n_gen = grid.num_generators();
    const auto n_load = grid.num_loads();
    double gen_power = kLiteralGeneratorPower;
    if (mode == GeneratorPowerMode::Balanced && n_gen > 0)
        gen_power = -static_cast<double>(n_load) * preset.load_power / static_cast<double>(n_gen);

    std::vector<GridNode> nodes = grid.nodes();
    for (auto& node : nodes) {
        node.inertia = preset.inertia;
        node.damping = preset.damping;
        node.power = node.kind == NodeKind::Generator ? gen_power : preset.load_power;
    }
    std::vector<GridLine> lines = grid.lines();
    for (auto& line : lines) {
        line.coupling = preset.coupling;
        line.capacity_fraction = preset.capacity_fraction;
    }
    return PowerGrid(std::move(nodes), std::move(lines));
}

/// Connected random test grid: a random spanning tree plus `extra_lines` chords,
/// with `n_generators` generators chosen uniformly and powers balanced.
inline PowerGrid random_connected_grid(std::size_t n, std::size_t n_generators, std::size_t extra_lines,
                                       std::uint64_t seed, const ParameterPreset& preset) {
    if (n < 2 || n_generators == 0 || n_generators >= n)
        throw std::invalid_argument("random_connected_grid: need n >= 2 and 0 < n_generators < n");
    std::mt19937_64 rng(seed);
    auto uniform_below = [&rng](std::size_t bound) { return static_cast<std::size_t>(rng() % bound); };

    std::vector<GridNode> nodes(n);
    std::vector<NodeIndex> order(n);
    for (NodeIndex i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_below(i + 1)]);
    for (std::size_t k = 0; k < n_generators; ++k) nodes[order[k]].kind = NodeKind::Generator;

    std::vector<GridLine> lines;
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    auto add = [&](NodeIndex a, NodeIndex b) {
        if (a == b || adj[a][b]) return false;
        adj[a][b] = adj[b][a] = true;
        lines.push_back({std::min(a, b), std::max(a, b), preset.coupling, preset.capacity_fraction});
        return true;
    };
    for (NodeIndex i = 1; i < n; ++i) add(i, uniform_below(i));
    const std::size_t max_lines = n * (n - 1) / 2;
    for (std::size_t added = 0; added < extra_lines && lines.size() < max_lines;)
        added += add(uniform_below(n), uniform_below(n));

    return apply_preset(PowerGrid(std::move(nodes), std::move(lines)), preset);
}

}  // namespace gridsync
