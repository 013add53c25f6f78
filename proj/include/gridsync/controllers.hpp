#pragma once

// Distributed proportional and integral control laws.
//
// Both layers apply the same diffusive consensus operator
//     out_i = G * xi_i * sum_j a_ij (x_j - x_i)
// to the node frequencies: the proportional layer uses it as the input itself,
// the integral layer as the time derivative of its input state.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsync/topology.hpp"

namespace gridsync {

/// Compressed neighbor lists of a control layer. Neighbor order is ascending,
/// so reductions run in a fixed order.
class LayerStencil {
public:
    LayerStencil() = default;
    explicit LayerStencil(const ControlLayer& layer)
        : gain_(layer.gain), pinning_(layer.pinning), offsets_(layer.size() + 1, 0) {
        const auto n = layer.size();
        if (pinning_.size() != n) throw std::invalid_argument("pinning length does not match adjacency size");
        for (NodeIndex i = 0; i < n; ++i) {
            for (NodeIndex j = 0; j < n; ++j)
                if (layer.adjacency(i, j)) neighbors_.push_back(j);
            offsets_[i + 1] = neighbors_.size();
        }
    }

    [[nodiscard]] std::size_t size() const { return pinning_.size(); }
    [[nodiscard]] double gain() const { return gain_; }
    [[nodiscard]] bool pinned(NodeIndex i) const { return pinning_[i] != 0; }
    [[nodiscard]] std::span<const NodeIndex> neighbors(NodeIndex i) const {
        return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    /// Writes G * xi_i * sum_j a_ij (x_j - x_i) into `out`. Nodes flagged in
    /// `masked` neither receive an input nor contribute to their neighbors'.
    void apply(std::span<const double> x, std::span<double> out, std::span<const std::uint8_t> masked = {}) const {
        const auto n = size();
        for (NodeIndex i = 0; i < n; ++i) {
            if (!pinned(i) || gain_ == 0.0 || (!masked.empty() && masked[i])) {
                out[i] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (auto j : neighbors(i)) {
                if (!masked.empty() && masked[j]) continue;
                acc += x[j] - x[i];
            }
            out[i] = gain_ * acc;
        }
    }

private:
    double gain_ = 0.0;
    std::vector<std::uint8_t> pinning_;
    std::vector<std::size_t> offsets_;
    std::vector<NodeIndex> neighbors_;
};

namespace detail {

inline void require_dimension(const ControlLayer& layer, std::size_t n) {
    if (layer.size() != n || layer.pinning.size() != n)
        throw std::invalid_argument("control layer has size " + std::to_string(layer.size()) +
                                    " but the frequency vector has length " + std::to_string(n));
}

}  // namespace detail

/// u^P_i = G_P xi^P_i sum_j a^P_ij (omega_j - omega_i)
inline std::vector<double> proportional_input(const ControlLayer& layer, std::span<const double> omega) {
    detail::require_dimension(layer, omega.size());
    std::vector<double> out(omega.size());
    LayerStencil(layer).apply(omega, out);
    return out;
}

/// du^I_i/dt = G_I xi^I_i sum_j a^I_ij (omega_j - omega_i)
inline std::vector<double> integral_state_derivative(const ControlLayer& layer, std::span<const double> omega) {
    detail::require_dimension(layer, omega.size());
    std::vector<double> out(omega.size());
    LayerStencil(layer).apply(omega, out);
    return out;
}

struct ControlInputs {
    std::vector<double> u_p;
    std::vector<double> u_i;
    std::vector<double> u_total;
};

inline ControlInputs combine_inputs(std::vector<double> u_p, std::vector<double> u_i) {
    if (u_p.size() != u_i.size()) throw std::invalid_argument("control input lengths differ");
    ControlInputs out{std::move(u_p), std::move(u_i), {}};
    out.u_total.resize(out.u_p.size());
    for (std::size_t k = 0; k < out.u_total.size(); ++k) out.u_total[k] = out.u_p[k] + out.u_i[k];
    return out;
}

}  // namespace gridsync
