#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ovi/netstack.hpp"
#include "ovi/rng.hpp"
#include "ovi/tape.hpp"
#include "ovi/trajectory.hpp"

namespace ovi {

/// Weights on the option-likelihood term and on the −log q (entropy) term.
struct LossWeights {
    double w_eta = 1.0;
    double w_ent = 0.01;
};

/// Per-trajectory decomposition of the weighted objective.
struct ObjectiveBreakdown {
    double sum_log_pi = 0.0;
    double sum_log_eta = 0.0;
    double neg_log_q = 0.0;
    double J_weighted = 0.0;
    double w_eta = 0.0;
    double w_ent = 0.0;

    double recompute() const { return sum_log_pi + w_eta * sum_log_eta + w_ent * neg_log_q; }
};

/// Draws ζ from q's outputs. b_1 = 1; afterwards each b_t is, with
/// probability 1 − epsilon, a Bernoulli(p_b,t) draw and otherwise a fair coin.
/// Switch steps take z_t = μ_t + σ_t·(1 + epsilon)·n_t with n_t ~ N(0, I);
/// other steps copy z_{t−1}.
LatentSequence sample_zeta(const OptionOutput& q_out, double epsilon, Rng& rng);

/// ζ for a given termination pattern and per-step noise (noise rows are used
/// only at switch steps).
LatentSequence make_zeta(const OptionOutput& q_out, std::span<const int> b,
                         const std::vector<std::vector<double>>& noise);

/// Reparameterized z_t Vars on q's path: switch steps go through
/// reparameterize(), continuation steps reuse the previous Var.
std::vector<Var> latent_vars(const OptionOutput& q_out, const LatentSequence& zeta);

/// Σ_t log Bernoulli(b_t; p_b,t) + Σ_{t: b_t=1} log N(z_t; μ_t, var_t).
Var log_q(const OptionOutput& q_out, const LatentSequence& zeta, std::span<const Var> z);
/// Same scoring convention as log_q, under η's outputs.
Var log_eta(const OptionOutput& eta_out, const LatentSequence& zeta, std::span<const Var> z);
/// Σ_t log N(a_t; μ_a,t, var_a,t).
Var log_pi(const ActionOutput& pi_out, std::span<const Var> actions);
/// Σ_{t≥2} log Bernoulli(b_t; p_b,t) under q: the log-probability of the
/// sampled termination pattern (b_1 is fixed, not sampled).
Var log_q_terminations(const OptionOutput& q_out, const LatentSequence& zeta);

/// Everything recorded while evaluating the objective on one tape.
struct ObjectiveGraph {
    OptionOutput q_out;
    OptionOutput eta_out;
    ActionOutput pi_out;
    std::vector<Var> z;
    Var log_pi;
    Var log_eta;
    Var log_q;
    Var log_q_b;
    Var J;
    ObjectiveBreakdown breakdown;
};

/// η inputs ζ_{t−1} for each step: zero code and b = 1 at t = 1.
struct ShiftedZeta {
    std::vector<Var> z_prev;
    std::vector<int> b_prev;
};
ShiftedZeta shift_zeta(Tape& tape, std::span<const Var> z, std::span<const int> b, std::size_t latent_dim);

/// Records J = Σ log π + w_eta Σ log η − w_ent log q on `tape` given q's
/// outputs for `traj`. No dynamics or initial-state term is included.
/// `dynamics_log_prob_per_step`, when nonzero, adds that fixed constant per
/// step to the returned J Var (breakdown unaffected).
ObjectiveGraph build_objective(Tape& tape, const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                               const LossWeights& weights, const OptionOutput& q_out, const TrajectoryInputs& inputs,
                               double dynamics_log_prob_per_step = 0.0);

/// Evaluates the objective for a given ζ (q is re-run on `traj`).
ObjectiveBreakdown objective(const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                             const LossWeights& weights);

/// Zeroes all three stores' gradients and fills them with ∂J/∂(θ, φ, ω)
/// along the reparameterized path.
ObjectiveBreakdown pathwise_gradients(const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                                      const LossWeights& weights, double dynamics_log_prob_per_step = 0.0);

/// Score-function estimate of the termination-sampling gradient over q's
/// parameters (flattened in store order), with per-coordinate sample variance.
struct ReinforceEstimate {
    std::vector<double> mean;
    std::vector<double> variance;
    std::size_t samples = 0;

    double standard_error(std::size_t i) const;
};

/// Average over n_samples of (J(b) − baseline)·∇_ω log q(b). z noise is held
/// fixed (`noise`, T × d_z) so J depends on b only.
ReinforceEstimate reinforce_b_gradients(const Trajectory& traj, PolicyTriple& triple, const LossWeights& weights,
                                        std::size_t n_samples, double baseline,
                                        const std::vector<std::vector<double>>& noise, Rng& rng,
                                        double epsilon = 0.0);

/// Exact expectation over every termination pattern (b_1 = 1, T ≤ 6).
struct OracleGradient {
    std::vector<double> score;     // Σ_b q(b)(J(b) − baseline) ∇_ω log q(b), over q's parameters
    std::vector<double> pathwise;  // Σ_b q(b) ∇J(b), over q, π, η parameters in that order
    std::vector<double> total;     // pathwise with score added on q's coordinates
    double expected_J = 0.0;
    std::size_t sequences = 0;
};

inline constexpr std::size_t kMaxOracleLength = 6;

OracleGradient enumerate_b_oracle(const Trajectory& traj, PolicyTriple& triple, const LossWeights& weights,
                                  double baseline, const std::vector<std::vector<double>>& noise);

/// Fresh standard-normal noise rows (T × d).
std::vector<std::vector<double>> draw_noise(std::size_t T, std::size_t d, Rng& rng);

} // namespace ovi
