#pragma once

// Control-layer topologies: binary symmetric adjacency matrices, pinning masks,
// random (Erdos-Renyi) layers and the generator-local / generator-extended derivations.

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridsync/grid.hpp"

namespace gridsync {

class AdjacencyMatrix {
public:
    AdjacencyMatrix() = default;
    explicit AdjacencyMatrix(std::size_t n) : n_(n), cells_(n * n, 0) {}

    static AdjacencyMatrix from_edges(std::size_t n, std::span<const std::pair<NodeIndex, NodeIndex>> edges) {
        AdjacencyMatrix m(n);
        for (auto [i, j] : edges) m.connect(i, j);
        return m;
    }

    /// Physical-layer connectivity as a binary matrix.
    static AdjacencyMatrix from_grid(const PowerGrid& grid) {
        AdjacencyMatrix m(grid.num_nodes());
        for (const auto& line : grid.lines()) m.connect(line.from, line.to);
        return m;
    }

    static AdjacencyMatrix complete(std::size_t n) {
        AdjacencyMatrix m(n);
        for (NodeIndex i = 0; i < n; ++i)
            for (NodeIndex j = i + 1; j < n; ++j) m.connect(i, j);
        return m;
    }

    [[nodiscard]] std::size_t size() const { return n_; }

    [[nodiscard]] bool operator()(NodeIndex i, NodeIndex j) const { return cells_[i * n_ + j] != 0; }

    /// Sets a single directed cell; prefer connect() to keep the matrix symmetric.
    void set(NodeIndex i, NodeIndex j, bool value) { cells_.at(i * n_ + j) = value ? 1 : 0; }

    void connect(NodeIndex i, NodeIndex j) {
        if (i >= n_ || j >= n_) throw std::out_of_range("adjacency index out of range");
        if (i == j) throw std::invalid_argument("adjacency: self-loop on node " + std::to_string(i + 1));
        set(i, j, true);
        set(j, i, true);
    }

    [[nodiscard]] bool is_symmetric() const {
        for (NodeIndex i = 0; i < n_; ++i)
            for (NodeIndex j = i + 1; j < n_; ++j)
                if ((*this)(i, j) != (*this)(j, i)) return false;
        return true;
    }

    [[nodiscard]] bool has_zero_diagonal() const {
        for (NodeIndex i = 0; i < n_; ++i)
            if ((*this)(i, i)) return false;
        return true;
    }

    /// Upper-triangle edges (i < j) in row-major order.
    [[nodiscard]] std::vector<std::pair<NodeIndex, NodeIndex>> edges() const {
        std::vector<std::pair<NodeIndex, NodeIndex>> out;
        for (NodeIndex i = 0; i < n_; ++i)
            for (NodeIndex j = i + 1; j < n_; ++j)
                if ((*this)(i, j)) out.emplace_back(i, j);
        return out;
    }

    [[nodiscard]] std::size_t edge_count() const { return edges().size(); }

    [[nodiscard]] std::vector<NodeIndex> neighbors(NodeIndex i) const {
        std::vector<NodeIndex> out;
        for (NodeIndex j = 0; j < n_; ++j)
            if ((*this)(i, j)) out.push_back(j);
        return out;
    }

    bool operator==(const AdjacencyMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> cells_;
};

struct ControlLayer {
    AdjacencyMatrix adjacency;
    std::vector<std::uint8_t> pinning;  // xi_i in {0,1}
    double gain = 0.0;

    [[nodiscard]] std::size_t size() const { return adjacency.size(); }
};

inline std::vector<std::uint8_t> pin_all(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

inline std::vector<std::uint8_t> pin_nodes(std::size_t n, std::span<const NodeIndex> nodes) {
    std::vector<std::uint8_t> xi(n, 0);
    for (auto i : nodes) xi.at(i) = 1;
    return xi;
}

inline std::vector<std::uint8_t> pin_generators(const PowerGrid& grid) {
    auto gens = grid.generators();
    return pin_nodes(grid.num_nodes(), gens);
}

inline std::vector<std::string> validate_layer(const ControlLayer& layer, std::size_t n) {
    std::vector<std::string> out;
    const auto& a = layer.adjacency;
    if (a.size() != n)
        out.push_back("adjacency is " + std::to_string(a.size()) + "x" + std::to_string(a.size()) +
                      ", expected " + std::to_string(n));
    for (NodeIndex i = 0; i < a.size(); ++i) {
        if (a(i, i)) out.push_back("diagonal entry set at node " + std::to_string(i + 1));
        for (NodeIndex j = i + 1; j < a.size(); ++j)
            if (a(i, j) != a(j, i))
                out.push_back("asymmetric entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
    }
    if (layer.pinning.size() != n)
        out.push_back("pinning vector has length " + std::to_string(layer.pinning.size()) + ", expected " +
                      std::to_string(n));
    for (std::size_t i = 0; i < layer.pinning.size(); ++i)
        if (layer.pinning[i] > 1)
            out.push_back("pinning entry at node " + std::to_string(i + 1) + " is not 0/1");
    if (!(layer.gain >= 0.0)) out.push_back("gain must be >= 0");
    return out;
}

namespace detail {

inline void require_symmetric_base(const AdjacencyMatrix& base) {
    if (!base.is_symmetric()) throw std::invalid_argument("base adjacency is not symmetric");
    if (!base.has_zero_diagonal()) throw std::invalid_argument("base adjacency has a nonzero diagonal");
}

inline std::vector<bool> membership(std::size_t n, std::span<const NodeIndex> nodes) {
    std::vector<bool> in(n, false);
    for (auto i : nodes) {
        if (i >= n) throw std::out_of_range("generator index out of range");
        in[i] = true;
    }
    return in;
}

}  // namespace detail

/// Keeps the base edges that touch at least one generator.
inline AdjacencyMatrix derive_local(const AdjacencyMatrix& base, std::span<const NodeIndex> generators) {
    detail::require_symmetric_base(base);
    const auto n = base.size();
    const auto gen = detail::membership(n, generators);
    AdjacencyMatrix out(n);
    for (NodeIndex i = 0; i < n; ++i)
        for (NodeIndex j = 0; j < n; ++j)
            if ((gen[i] || gen[j]) && base(i, j)) out.set(i, j, true);
    return out;
}

/// derive_local plus a clique over the generators.
inline AdjacencyMatrix derive_extended(const AdjacencyMatrix& base, std::span<const NodeIndex> generators) {
    auto out = derive_local(base, generators);
    const auto gen = detail::membership(base.size(), generators);
    for (NodeIndex i = 0; i < base.size(); ++i)
        for (NodeIndex j = 0; j < base.size(); ++j)
            if (i != j && gen[i] && gen[j]) out.set(i, j, true);
    return out;
}

/// Identifier of the pair-sampling scheme used by gen_er. Bump when the scheme changes.
inline constexpr const char* kErGeneratorVersion = "er-mt19937_64-v1";

/// Each pair i < j (row-major) is kept when a 53-bit uniform drawn from
/// std::mt19937_64(seed) is below p. Output is identical on every conforming platform.
inline AdjacencyMatrix gen_er(std::size_t n, double p, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_er: n must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("gen_er: p must lie in [0,1]");
    std::mt19937_64 rng(seed);
    AdjacencyMatrix out(n);
    for (NodeIndex i = 0; i < n; ++i)
        for (NodeIndex j = i + 1; j < n; ++j) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            if (u < p) out.connect(i, j);
        }
    return out;
}

inline std::size_t connected_components(const AdjacencyMatrix& a) {
    const auto n = a.size();
    std::vector<NodeIndex> parent(n);
    std::iota(parent.begin(), parent.end(), NodeIndex{0});
    auto find = [&parent](NodeIndex x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::size_t components = n;
    for (auto [i, j] : a.edges()) {
        auto ri = find(i), rj = find(j);
        if (ri != rj) {
            parent[ri] = rj;
            --components;
        }
    }
    return components;
}

}  // namespace gridsync
