#pragma once

// Synchronization and failure observables.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gridsync/grid.hpp"

namespace gridsync {

enum class MetricsScope { ActiveNodesOnly, AllNodes };

inline const char* to_string(MetricsScope scope) {
    return scope == MetricsScope::ActiveNodesOnly ? "active-nodes-only" : "all-nodes";
}

struct MetricsSample {
    double t = 0.0;
    double r = 0.0;
    double phi = 0.0;
    double delta_omega = 0.0;
    double mean_omega = 0.0;
    double power_loss = 0.0;
    std::size_t n_failed = 0;
    std::size_t n_active_links = 0;
};

struct OrderParameter {
    double r = 0.0;
    double phi = 0.0;
};

inline std::vector<NodeIndex> all_nodes(std::size_t n) {
    std::vector<NodeIndex> out(n);
    for (NodeIndex i = 0; i < n; ++i) out[i] = i;
    return out;
}

/// Nodes not flagged as removed, or every node when scope is AllNodes.
inline std::vector<NodeIndex> scope_nodes(std::span<const std::uint8_t> removed, MetricsScope scope) {
    std::vector<NodeIndex> out;
    for (NodeIndex i = 0; i < removed.size(); ++i)
        if (scope == MetricsScope::AllNodes || !removed[i]) out.push_back(i);
    return out;
}

/// Modulus and argument of the mean unit phasor over `scope`.
inline OrderParameter order_parameter(std::span<const double> theta, std::span<const NodeIndex> scope) {
    if (scope.empty()) throw std::invalid_argument("order_parameter: empty node scope");
    double re = 0.0, im = 0.0;
    for (auto i : scope) {
        re += std::cos(theta[i]);
        im += std::sin(theta[i]);
    }
    const double inv = 1.0 / static_cast<double>(scope.size());
    re *= inv;
    im *= inv;
    return {std::hypot(re, im), std::atan2(im, re)};
}

inline double mean_over(std::span<const double> x, std::span<const NodeIndex> scope) {
    if (scope.empty()) throw std::invalid_argument("mean_over: empty node scope");
    double sum = 0.0;
    for (auto i : scope) sum += x[i];
    return sum / static_cast<double>(scope.size());
}

/// Population standard deviation (divides by |scope|).
inline double freq_std(std::span<const double> omega, std::span<const NodeIndex> scope) {
    const double mean = mean_over(omega, scope);
    double ss = 0.0;
    for (auto i : scope) {
        const double d = omega[i] - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(scope.size()));
}

/// Mean effective load power minus mean nominal load power. Kept in the
/// two-sum form rather than reduced to the mean of u over loads.
inline double power_loss(const PowerGrid& grid, std::span<const double> u_total) {
    if (u_total.size() != grid.num_nodes()) throw std::invalid_argument("power_loss: dimension mismatch");
    const auto n_loads = grid.num_loads();
    if (n_loads == 0) throw std::invalid_argument("power_loss: grid has no load nodes");
    double effective = 0.0, nominal = 0.0;
    for (NodeIndex i = 0; i < grid.num_nodes(); ++i) {
        const auto& node = grid.node(i);
        if (node.kind != NodeKind::Load) continue;
        effective += node.power + u_total[i];
        nominal += node.power;
    }
    const double inv = 1.0 / static_cast<double>(n_loads);
    return inv * effective - inv * nominal;
}

struct FailureCounts {
    std::size_t n_failed = 0;
    std::size_t n_active = 0;
    std::size_t n_removed_by_fault = 0;
};

inline FailureCounts count_failures(std::span<const LineStatus> statuses) {
    FailureCounts c;
    for (const auto& s : statuses) {
        switch (s.kind) {
            case LineStatus::Kind::Active: ++c.n_active; break;
            case LineStatus::Kind::TrippedOverload: ++c.n_failed; break;
            case LineStatus::Kind::RemovedByNodeFault: ++c.n_removed_by_fault; break;
        }
    }
    return c;
}

}  // namespace gridsync
