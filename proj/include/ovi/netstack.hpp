#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ovi/param_store.hpp"
#include "ovi/rng.hpp"
#include "ovi/tape.hpp"
#include "ovi/trajectory.hpp"

namespace ovi {

enum class Direction { causal, bidirectional };

/// Depth and width of every recurrent stack in a PolicyTriple.
struct NetConfig {
    std::size_t layers = 2;
    std::size_t hidden = 64;

    static NetConfig desk() { return {2, 64}; }
    static NetConfig paper() { return {8, 128}; }
};

struct Dims {
    std::size_t state = 2;
    std::size_t action = 2;
    std::size_t latent = 64;
    std::size_t task = 0;
};

/// One gated recurrent cell. Weight has shape [input + hidden, 4 * hidden]
/// with gate blocks ordered input, forget, candidate, output.
struct LstmCell {
    ParamId weight;
    ParamId bias;
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
};

/// Registers a cell's parameters in `store`, initialized uniformly in
/// [−1/√fan_in, 1/√fan_in].
LstmCell make_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng);

/// Cell state is one Var of length 2H holding [h, c].
Var cell_step(Tape& tape, ParamStore& store, const LstmCell& cell, Var input, Var state_prev);
Var hidden_part(Var state, std::size_t hidden_size);
Var zero_cell_state(Tape& tape, std::size_t hidden_size);

class RecurrentStack {
public:
    /// Running state of a causal stack, one cell state per layer.
    struct State {
        std::vector<Var> layers;
    };

    RecurrentStack() = default;
    RecurrentStack(ParamStore& store, const std::string& prefix, std::size_t input_size, const NetConfig& cfg,
                   Direction direction, Rng& rng);

    Direction direction() const noexcept { return direction_; }
    std::size_t input_size() const noexcept { return input_size_; }
    std::size_t hidden_size() const noexcept { return hidden_; }
    std::size_t num_layers() const noexcept { return forward_.size(); }
    std::size_t output_size() const noexcept {
        return direction_ == Direction::bidirectional ? 2 * hidden_ : hidden_;
    }

    State initial_state(Tape& tape) const;
    /// One causal step; returns the top layer's hidden output.
    Var step(Tape& tape, ParamStore& store, State& state, Var input) const;
    /// Whole-sequence evaluation. Bidirectional stacks concatenate forward and
    /// backward hidden outputs per layer.
    std::vector<Var> run(Tape& tape, ParamStore& store, std::span<const Var> inputs) const;

private:
    Direction direction_ = Direction::causal;
    std::size_t input_size_ = 0;
    std::size_t hidden_ = 0;
    std::vector<LstmCell> forward_;
    std::vector<LstmCell> backward_;
};

/// Mean projection (no activation) and variance projection (softplus).
struct GaussianHead {
    ParamId mean_weight, mean_bias, var_weight, var_bias;
    std::size_t input_size = 0;
    std::size_t output_size = 0;

    static GaussianHead make(ParamStore& store, const std::string& prefix, std::size_t input_size,
                             std::size_t output_size, Rng& rng);
    std::pair<Var, Var> apply(Tape& tape, ParamStore& store, Var features) const;
};

/// Two logits normalized by softmax; index 1 is the probability of terminating.
struct TerminationHead {
    ParamId weight, bias;
    std::size_t input_size = 0;

    static TerminationHead make(ParamStore& store, const std::string& prefix, std::size_t input_size, Rng& rng);
    Var apply(Tape& tape, ParamStore& store, Var features) const;
};

/// Per-step Gaussian latent parameters plus termination probabilities.
struct OptionOutput {
    std::vector<Var> mu;
    std::vector<Var> var;
    std::vector<Var> probs;  // length-2 [continue, terminate]

    std::size_t length() const { return mu.size(); }
    /// Termination probability p_b at step t (as a scalar Var).
    Var p_terminate(std::size_t t) const { return slice(probs.at(t), 1, 1); }
    double p_terminate_value(std::size_t t) const { return probs.at(t).value()[1]; }
};

struct ActionOutput {
    std::vector<Var> mu;
    std::vector<Var> var;

    std::size_t length() const { return mu.size(); }
};

struct QNetwork {
    RecurrentStack stack;
    GaussianHead z_head;
    TerminationHead termination;
};

struct PiNetwork {
    RecurrentStack stack;
    GaussianHead action_head;
};

struct EtaNetwork {
    RecurrentStack stack;
    GaussianHead z_head;
    TerminationHead termination;
};

/// The variational network q (ω), low-level policy π (θ) and high-level
/// policy η (φ), each with its own ParamStore. Tapes hold pointers into the
/// stores, so a triple must outlive every tape it was bound to.
class PolicyTriple {
public:
    PolicyTriple(const Dims& dims, const NetConfig& net, std::uint64_t seed);

    const Dims& dims() const noexcept { return dims_; }
    const NetConfig& net_config() const noexcept { return net_; }

    ParamStore q_params{"q"};
    ParamStore pi_params{"pi"};
    ParamStore eta_params{"eta"};

    const QNetwork& q() const noexcept { return q_; }
    const PiNetwork& pi() const noexcept { return pi_; }
    const EtaNetwork& eta() const noexcept { return eta_; }

    std::size_t pi_input_size() const { return dims_.state + dims_.action + dims_.latent; }
    std::size_t eta_input_size() const { return dims_.state + dims_.action + dims_.latent + 2 + dims_.task; }
    std::size_t q_input_size() const { return dims_.state + dims_.action; }

    std::size_t parameter_count() const;

private:
    Dims dims_;
    NetConfig net_;
    QNetwork q_;
    PiNetwork pi_;
    EtaNetwork eta_;
};

/// Pure function of the architecture; agrees with PolicyTriple::parameter_count().
std::size_t expected_parameter_count(const Dims& dims, const NetConfig& net);

/// Per-step constants for a trajectory: s_t, a_t, and a_{t−1} with a_0 = 0.
struct TrajectoryInputs {
    std::vector<Var> states;
    std::vector<Var> actions;
    std::vector<Var> actions_prev;
};
TrajectoryInputs trajectory_inputs(Tape& tape, const Trajectory& traj);

/// q(ζ | τ): bidirectional over the concatenated [s_t, a_t] sequence.
OptionOutput q_forward(Tape& tape, PolicyTriple& triple, const Trajectory& traj);
OptionOutput q_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states, std::span<const Var> actions);

/// π(a_t | s_{1:t}, a_{1:t−1}, z_{1:t}).
ActionOutput pi_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states,
                        std::span<const Var> actions_prev, std::span<const Var> zs);

/// η(ζ_t | s_{1:t}, a_{1:t−1}, ζ_{1:t−1}). `zs_prev[t]` / `bs_prev[t]` hold
/// ζ_{t−1}; at t = 0 callers pass the zero code and b = 1.
OptionOutput eta_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states,
                         std::span<const Var> actions_prev, std::span<const Var> zs_prev,
                         std::span<const int> bs_prev, Var task_cond);

/// Incremental π / η evaluation for rollouts.
class PolicyStepper {
public:
    PolicyStepper(Tape& tape, PolicyTriple& triple);

    std::pair<Var, Var> pi_step(Var state, Var action_prev, Var z);
    /// Returns (mu_z, var_z, probs).
    std::tuple<Var, Var, Var> eta_step(Var state, Var action_prev, Var z_prev, int b_prev, Var task_cond);

private:
    Tape& tape_;
    PolicyTriple& triple_;
    RecurrentStack::State pi_state_;
    RecurrentStack::State eta_state_;
};

/// [1 − b, b] one-hot encoding of a termination flag.
Var termination_one_hot(Tape& tape, int b);
Var task_condition(Tape& tape, const Dims& dims, std::optional<int> task_id);

} // namespace ovi
