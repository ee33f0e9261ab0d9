#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/rng.hpp"
#include "ovi/trajectory.hpp"

namespace ovi {

/// Deterministic transition rule s_{t+1} = step(s_t, a_t).
struct Dynamics {
    std::function<std::vector<double>(std::span<const double>, std::span<const double>)> step;
};

/// s_{t+1} = s_t + a_t.
Dynamics integration_dynamics();
/// Integration carried out in raw units for states and actions expressed in
/// the normalized coordinates of `stats`.
Dynamics normalized_integration_dynamics(const NormalizationStats& stats);

enum class RolloutMode { stochastic, greedy };
enum class ReconstructMode { teacher_forced, open_loop };
RolloutMode parse_rollout_mode(std::string_view s);

struct Rollout {
    Trajectory traj;
    LatentSequence zeta;
};

/// Option-driven generation: η proposes (z_t, b_t) given the history, b_1 = 1,
/// non-switch steps keep z_{t−1}, π emits a_t, dynamics give s_{t+1}. Greedy
/// mode takes means and argmax terminations (0.5 resolves to terminate).
Rollout generate(PolicyTriple& triple, const Dynamics& dynamics, std::span<const double> s1, std::size_t T,
                 RolloutMode mode, Rng& rng, std::optional<int> task_id = std::nullopt);

/// Greedy ζ from q's outputs: b_1 = 1, b_t = [p_b,t ≥ 0.5], z = μ at switches.
LatentSequence greedy_zeta(const OptionOutput& q_out);
/// Greedy ζ of q on `traj`.
LatentSequence infer_zeta(const Trajectory& traj, PolicyTriple& triple);

/// Rolls π out with q's greedy latents. Teacher-forced mode conditions π on
/// the demonstration's states and past actions and predicts s_{t+1} from the
/// true s_t; open-loop mode feeds back its own states. Returned actions are
/// π's means; states start from the demonstration's s_1.
Trajectory reconstruct(const Trajectory& traj, PolicyTriple& triple, const Dynamics& dynamics, ReconstructMode mode);

/// JSON Lines dump; each line carries the trajectory plus a `zeta` object
/// with `z` rows and `b` flags.
void save_rollouts_jsonl(const std::vector<Rollout>& rollouts, const std::filesystem::path& path);

} // namespace ovi
