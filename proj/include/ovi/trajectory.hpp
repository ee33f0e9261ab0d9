#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ovi/real_array.hpp"

namespace ovi {

/// Observed demonstration: T state rows and T action rows.
struct Trajectory {
    RealArray states;   // [T, d_s]
    RealArray actions;  // [T, d_a]
    std::optional<int> task_id;

    std::size_t length() const { return states.rank() == 2 ? states.dim(0) : 0; }
    std::size_t state_dim() const { return states.rank() == 2 ? states.dim(1) : 0; }
    std::size_t action_dim() const { return actions.rank() == 2 ? actions.dim(1) : 0; }

    std::span<const double> state(std::size_t t) const {
        return states.span().subspan(t * state_dim(), state_dim());
    }
    std::span<const double> action(std::size_t t) const {
        return actions.span().subspan(t * action_dim(), action_dim());
    }
    std::span<double> state(std::size_t t) { return states.span().subspan(t * state_dim(), state_dim()); }
    std::span<double> action(std::size_t t) { return actions.span().subspan(t * action_dim(), action_dim()); }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

Trajectory make_trajectory(const std::vector<std::vector<double>>& states,
                           const std::vector<std::vector<double>>& actions,
                           std::optional<int> task_id = std::nullopt);

/// Contiguous sub-trajectory [start, start + length).
Trajectory slice_trajectory(const Trajectory& traj, std::size_t start, std::size_t length);

/// Option sequence ζ: latent codes z_t and termination flags b_t.
/// `noise` holds the scaled noise draw used at each switch step (zeros elsewhere).
struct LatentSequence {
    std::vector<std::vector<double>> z;
    std::vector<int> b;
    std::vector<std::vector<double>> noise;

    std::size_t length() const { return b.size(); }
    friend bool operator==(const LatentSequence&, const LatentSequence&) = default;
};

/// True when b_1 = 1 and every continuation step copies z bitwise.
bool satisfies_latent_invariants(const LatentSequence& zeta);

} // namespace ovi
