#include "ovi/netstack.hpp"

#include <cmath>
#include <string>

#include "ovi/errors.hpp"

namespace ovi {

namespace {

RealArray uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    RealArray a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : a.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return a;
}

std::size_t cell_param_count(std::size_t in, std::size_t h) { return (in + h) * 4 * h + 4 * h; }

std::size_t stack_param_count(std::size_t in, const NetConfig& net, Direction dir) {
    const std::size_t dirs = dir == Direction::bidirectional ? 2 : 1;
    std::size_t n = 0;
    std::size_t layer_in = in;
    for (std::size_t l = 0; l < net.layers; ++l) {
        n += dirs * cell_param_count(layer_in, net.hidden);
        layer_in = dirs * net.hidden;
    }
    return n;
}

std::size_t gaussian_head_count(std::size_t in, std::size_t out) { return 2 * (in * out + out); }
std::size_t termination_head_count(std::size_t in) { return in * 2 + 2; }

void require_length(const char* what, std::size_t got, std::size_t expected) {
    if (got != expected) {
        throw InputError(std::string(what) + ": sequence length " + std::to_string(got) + " does not match " +
                         std::to_string(expected));
    }
}

} // namespace

LstmCell make_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng) {
    const std::size_t fan_in = input_size + hidden_size;
    LstmCell cell;
    cell.input_size = input_size;
    cell.hidden_size = hidden_size;
    cell.weight = store.add(prefix + ".weight", uniform_init({fan_in, 4 * hidden_size}, fan_in, rng));
    cell.bias = store.add(prefix + ".bias", uniform_init({4 * hidden_size}, fan_in, rng));
    return cell;
}

Var zero_cell_state(Tape& tape, std::size_t hidden_size) {
    return tape.constant(std::vector<double>(2 * hidden_size, 0.0));
}

Var hidden_part(Var state, std::size_t hidden_size) { return slice(state, 0, hidden_size); }

Var cell_step(Tape& tape, ParamStore& store, const LstmCell& cell, Var input, Var state_prev) {
    const std::size_t n_in = cell.input_size;
    const std::size_t H = cell.hidden_size;
    if (input.size() != n_in) {
        throw DimensionError("cell_step: input width " + std::to_string(input.size()) + " != cell input size " +
                             std::to_string(n_in));
    }
    if (state_prev.size() != 2 * H) {
        throw DimensionError("cell_step: state width " + std::to_string(state_prev.size()) + " != " +
                             std::to_string(2 * H));
    }
    Var W = tape.param(store, cell.weight);
    Var b = tape.param(store, cell.bias);
    const std::size_t G = 4 * H;
    auto xv = input.value();
    auto sv = state_prev.value();
    auto wv = W.value();
    auto bv = b.value();

    std::vector<double> pre(bv.begin(), bv.end());
    auto accumulate_row = [&](std::size_t row, double coeff) {
        if (coeff == 0.0) return;
        const double* w = wv.data() + row * G;
        for (std::size_t j = 0; j < G; ++j) pre[j] += coeff * w[j];
    };
    for (std::size_t i = 0; i < n_in; ++i) accumulate_row(i, xv[i]);
    for (std::size_t i = 0; i < H; ++i) accumulate_row(n_in + i, sv[i]);

    // aux layout: gates i, f, g, o (4H) then tanh(c) (H).
    std::vector<double> aux(5 * H);
    std::vector<double> out(2 * H);
    for (std::size_t k = 0; k < H; ++k) {
        const double ig = sigmoid_value(pre[k]);
        const double fg = sigmoid_value(pre[H + k]);
        const double gg = std::tanh(pre[2 * H + k]);
        const double og = sigmoid_value(pre[3 * H + k]);
        const double c = fg * sv[H + k] + ig * gg;
        const double tc = std::tanh(c);
        aux[k] = ig;
        aux[H + k] = fg;
        aux[2 * H + k] = gg;
        aux[3 * H + k] = og;
        aux[4 * H + k] = tc;
        out[k] = og * tc;
        out[H + k] = c;
    }

    return tape.make(
        "cell_step", {2 * H}, std::move(out), {input, state_prev, W, b},
        [n_in, H, G](Tape& t, std::size_t self) {
            const auto& node = t.node(self);
            const std::size_t ix = node.inputs[0], is = node.inputs[1], iw = node.inputs[2], ib = node.inputs[3];
            const auto& a = node.aux;
            const auto& gout = node.grad;
            const auto& sprev = t.node(is).value;
            std::vector<double> dpre(G);
            std::vector<double> dc_prev(H);
            for (std::size_t k = 0; k < H; ++k) {
                const double ig = a[k], fg = a[H + k], gg = a[2 * H + k], og = a[3 * H + k], tc = a[4 * H + k];
                const double dh = gout[k];
                const double dc = gout[H + k] + dh * og * (1.0 - tc * tc);
                dpre[k] = dc * gg * ig * (1.0 - ig);
                dpre[H + k] = dc * sprev[H + k] * fg * (1.0 - fg);
                dpre[2 * H + k] = dc * ig * (1.0 - gg * gg);
                dpre[3 * H + k] = dh * tc * og * (1.0 - og);
                dc_prev[k] = dc * fg;
            }
            if (t.node(ib).requires_grad) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t j = 0; j < G; ++j) gb[j] += dpre[j];
            }
            const auto& xval = t.node(ix).value;
            if (t.node(iw).requires_grad) {
                auto& gw = t.grad_buffer(iw);
                auto add_row = [&](std::size_t row, double coeff) {
                    if (coeff == 0.0) return;
                    double* g = gw.data() + row * G;
                    for (std::size_t j = 0; j < G; ++j) g[j] += coeff * dpre[j];
                };
                for (std::size_t i = 0; i < n_in; ++i) add_row(i, xval[i]);
                for (std::size_t i = 0; i < H; ++i) add_row(n_in + i, sprev[i]);
            }
            const auto& wval = t.node(iw).value;
            auto row_dot = [&](std::size_t row) {
                const double* w = wval.data() + row * G;
                double acc = 0.0;
                for (std::size_t j = 0; j < G; ++j) acc += w[j] * dpre[j];
                return acc;
            };
            if (t.node(ix).requires_grad) {
                auto& gx = t.grad_buffer(ix);
                for (std::size_t i = 0; i < n_in; ++i) gx[i] += row_dot(i);
            }
            if (t.node(is).requires_grad) {
                auto& gs = t.grad_buffer(is);
                for (std::size_t i = 0; i < H; ++i) gs[i] += row_dot(n_in + i);
                for (std::size_t k = 0; k < H; ++k) gs[H + k] += dc_prev[k];
            }
        },
        std::move(aux));
}

RecurrentStack::RecurrentStack(ParamStore& store, const std::string& prefix, std::size_t input_size,
                               const NetConfig& cfg, Direction direction, Rng& rng)
    : direction_(direction), input_size_(input_size), hidden_(cfg.hidden) {
    if (cfg.layers == 0 || cfg.hidden == 0) throw ConfigError("RecurrentStack: layers and hidden must be positive");
    std::size_t layer_in = input_size;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        forward_.push_back(make_lstm_cell(store, base + ".fwd", layer_in, cfg.hidden, rng));
        if (direction == Direction::bidirectional) {
            backward_.push_back(make_lstm_cell(store, base + ".bwd", layer_in, cfg.hidden, rng));
        }
        layer_in = output_size();
    }
}

RecurrentStack::State RecurrentStack::initial_state(Tape& tape) const {
    State s;
    Var zero = zero_cell_state(tape, hidden_);
    s.layers.assign(forward_.size(), zero);
    return s;
}

Var RecurrentStack::step(Tape& tape, ParamStore& store, State& state, Var input) const {
    if (direction_ != Direction::causal) throw InputError("RecurrentStack::step requires a causal stack");
    Var x = input;
    for (std::size_t l = 0; l < forward_.size(); ++l) {
        state.layers[l] = cell_step(tape, store, forward_[l], x, state.layers[l]);
        x = hidden_part(state.layers[l], hidden_);
    }
    return x;
}

std::vector<Var> RecurrentStack::run(Tape& tape, ParamStore& store, std::span<const Var> inputs) const {
    const std::size_t T = inputs.size();
    std::vector<Var> layer_in(inputs.begin(), inputs.end());
    Var zero = zero_cell_state(tape, hidden_);
    for (std::size_t l = 0; l < forward_.size(); ++l) {
        std::vector<Var> fwd(T);
        Var s = zero;
        for (std::size_t t = 0; t < T; ++t) {
            s = cell_step(tape, store, forward_[l], layer_in[t], s);
            fwd[t] = hidden_part(s, hidden_);
        }
        if (direction_ == Direction::causal) {
            layer_in = std::move(fwd);
            continue;
        }
        std::vector<Var> bwd(T);
        s = zero;
        for (std::size_t t = T; t-- > 0;) {
            s = cell_step(tape, store, backward_[l], layer_in[t], s);
            bwd[t] = hidden_part(s, hidden_);
        }
        for (std::size_t t = 0; t < T; ++t) {
            const Var parts[] = {fwd[t], bwd[t]};
            layer_in[t] = concat(parts);
        }
    }
    return layer_in;
}

GaussianHead GaussianHead::make(ParamStore& store, const std::string& prefix, std::size_t input_size,
                                std::size_t output_size, Rng& rng) {
    GaussianHead h;
    h.input_size = input_size;
    h.output_size = output_size;
    h.mean_weight = store.add(prefix + ".mean.weight", uniform_init({input_size, output_size}, input_size, rng));
    h.mean_bias = store.add(prefix + ".mean.bias", uniform_init({output_size}, input_size, rng));
    h.var_weight = store.add(prefix + ".var.weight", uniform_init({input_size, output_size}, input_size, rng));
    h.var_bias = store.add(prefix + ".var.bias", uniform_init({output_size}, input_size, rng));
    return h;
}

std::pair<Var, Var> GaussianHead::apply(Tape& tape, ParamStore& store, Var features) const {
    Var mu = affine(features, tape.param(store, mean_weight), tape.param(store, mean_bias));
    Var var = activation(affine(features, tape.param(store, var_weight), tape.param(store, var_bias)),
                         Activation::softplus);
    return {mu, var};
}

TerminationHead TerminationHead::make(ParamStore& store, const std::string& prefix, std::size_t input_size,
                                      Rng& rng) {
    TerminationHead h;
    h.input_size = input_size;
    h.weight = store.add(prefix + ".weight", uniform_init({input_size, 2}, input_size, rng));
    h.bias = store.add(prefix + ".bias", uniform_init({2}, input_size, rng));
    return h;
}

Var TerminationHead::apply(Tape& tape, ParamStore& store, Var features) const {
    return softmax(affine(features, tape.param(store, weight), tape.param(store, bias)));
}

PolicyTriple::PolicyTriple(const Dims& dims, const NetConfig& net, std::uint64_t seed) : dims_(dims), net_(net) {
    if (dims.state == 0 || dims.action == 0 || dims.latent == 0) {
        throw ConfigError("PolicyTriple: state, action and latent dimensions must be positive");
    }
    Rng q_rng(seed, 1), pi_rng(seed, 2), eta_rng(seed, 3);
    q_.stack = RecurrentStack(q_params, "stack", q_input_size(), net, Direction::bidirectional, q_rng);
    q_.z_head = GaussianHead::make(q_params, "z_head", q_.stack.output_size(), dims.latent, q_rng);
    q_.termination = TerminationHead::make(q_params, "termination", q_.stack.output_size(), q_rng);

    pi_.stack = RecurrentStack(pi_params, "stack", pi_input_size(), net, Direction::causal, pi_rng);
    pi_.action_head = GaussianHead::make(pi_params, "action_head", pi_.stack.output_size(), dims.action, pi_rng);

    eta_.stack = RecurrentStack(eta_params, "stack", eta_input_size(), net, Direction::causal, eta_rng);
    eta_.z_head = GaussianHead::make(eta_params, "z_head", eta_.stack.output_size(), dims.latent, eta_rng);
    eta_.termination = TerminationHead::make(eta_params, "termination", eta_.stack.output_size(), eta_rng);
}

std::size_t PolicyTriple::parameter_count() const {
    return q_params.scalar_count() + pi_params.scalar_count() + eta_params.scalar_count();
}

std::size_t expected_parameter_count(const Dims& dims, const NetConfig& net) {
    const std::size_t q_in = dims.state + dims.action;
    const std::size_t pi_in = dims.state + dims.action + dims.latent;
    const std::size_t eta_in = pi_in + 2 + dims.task;
    const std::size_t q = stack_param_count(q_in, net, Direction::bidirectional) +
                          gaussian_head_count(2 * net.hidden, dims.latent) + termination_head_count(2 * net.hidden);
    const std::size_t pi = stack_param_count(pi_in, net, Direction::causal) +
                           gaussian_head_count(net.hidden, dims.action);
    const std::size_t eta = stack_param_count(eta_in, net, Direction::causal) +
                            gaussian_head_count(net.hidden, dims.latent) + termination_head_count(net.hidden);
    return q + pi + eta;
}

TrajectoryInputs trajectory_inputs(Tape& tape, const Trajectory& traj) {
    const std::size_t T = traj.length();
    TrajectoryInputs in;
    in.states.reserve(T);
    in.actions.reserve(T);
    in.actions_prev.reserve(T);
    Var zero_action = tape.constant(std::vector<double>(traj.action_dim(), 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        auto s = traj.state(t);
        auto a = traj.action(t);
        in.states.push_back(tape.constant(std::vector<double>(s.begin(), s.end())));
        in.actions.push_back(tape.constant(std::vector<double>(a.begin(), a.end())));
        in.actions_prev.push_back(t == 0 ? zero_action : in.actions[t - 1]);
    }
    return in;
}

OptionOutput q_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states, std::span<const Var> actions) {
    if (states.empty()) throw InputError("q_forward: empty trajectory");
    require_length("q_forward actions", actions.size(), states.size());
    const QNetwork& q = triple.q();
    std::vector<Var> inputs(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
        const Var parts[] = {states[t], actions[t]};
        inputs[t] = concat(parts);
    }
    auto features = q.stack.run(tape, triple.q_params, inputs);
    OptionOutput out;
    for (const Var& f : features) {
        auto [mu, var] = q.z_head.apply(tape, triple.q_params, f);
        out.mu.push_back(mu);
        out.var.push_back(var);
        out.probs.push_back(q.termination.apply(tape, triple.q_params, f));
    }
    return out;
}

OptionOutput q_forward(Tape& tape, PolicyTriple& triple, const Trajectory& traj) {
    if (traj.length() == 0) throw InputError("q_forward: empty trajectory");
    auto in = trajectory_inputs(tape, traj);
    return q_forward(tape, triple, in.states, in.actions);
}

ActionOutput pi_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states,
                        std::span<const Var> actions_prev, std::span<const Var> zs) {
    if (states.empty()) throw InputError("pi_forward: empty sequence");
    require_length("pi_forward actions_prev", actions_prev.size(), states.size());
    require_length("pi_forward zs", zs.size(), states.size());
    const PiNetwork& pi = triple.pi();
    std::vector<Var> inputs(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
        const Var parts[] = {states[t], actions_prev[t], zs[t]};
        inputs[t] = concat(parts);
    }
    auto features = pi.stack.run(tape, triple.pi_params, inputs);
    ActionOutput out;
    for (const Var& f : features) {
        auto [mu, var] = pi.action_head.apply(tape, triple.pi_params, f);
        out.mu.push_back(mu);
        out.var.push_back(var);
    }
    return out;
}

Var termination_one_hot(Tape& tape, int b) {
    if (b != 0 && b != 1) throw DomainError("termination flag " + std::to_string(b) + " not in {0,1}");
    return tape.constant(std::vector<double>{b == 1 ? 0.0 : 1.0, b == 1 ? 1.0 : 0.0});
}

Var task_condition(Tape& tape, const Dims& dims, std::optional<int> task_id) {
    std::vector<double> c(dims.task, 0.0);
    if (dims.task > 0 && task_id) {
        if (*task_id < 0 || static_cast<std::size_t>(*task_id) >= dims.task) {
            throw InputError("task id " + std::to_string(*task_id) + " outside conditioning width " +
                             std::to_string(dims.task));
        }
        c[static_cast<std::size_t>(*task_id)] = 1.0;
    }
    return tape.constant(std::move(c));
}

OptionOutput eta_forward(Tape& tape, PolicyTriple& triple, std::span<const Var> states,
                         std::span<const Var> actions_prev, std::span<const Var> zs_prev,
                         std::span<const int> bs_prev, Var task_cond) {
    if (states.empty()) throw InputError("eta_forward: empty sequence");
    require_length("eta_forward actions_prev", actions_prev.size(), states.size());
    require_length("eta_forward zs_prev", zs_prev.size(), states.size());
    require_length("eta_forward bs_prev", bs_prev.size(), states.size());
    if (task_cond.size() != triple.dims().task) {
        throw DimensionError("eta_forward: task conditioning width " + std::to_string(task_cond.size()) +
                             " != " + std::to_string(triple.dims().task));
    }
    const EtaNetwork& eta = triple.eta();
    std::vector<Var> inputs(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
        std::vector<Var> parts{states[t], actions_prev[t], zs_prev[t], termination_one_hot(tape, bs_prev[t])};
        if (task_cond.size() > 0) parts.push_back(task_cond);
        inputs[t] = concat(parts);
    }
    auto features = eta.stack.run(tape, triple.eta_params, inputs);
    OptionOutput out;
    for (const Var& f : features) {
        auto [mu, var] = eta.z_head.apply(tape, triple.eta_params, f);
        out.mu.push_back(mu);
        out.var.push_back(var);
        out.probs.push_back(eta.termination.apply(tape, triple.eta_params, f));
    }
    return out;
}

PolicyStepper::PolicyStepper(Tape& tape, PolicyTriple& triple)
    : tape_(tape), triple_(triple), pi_state_(triple.pi().stack.initial_state(tape)),
      eta_state_(triple.eta().stack.initial_state(tape)) {}

std::pair<Var, Var> PolicyStepper::pi_step(Var state, Var action_prev, Var z) {
    const Var parts[] = {state, action_prev, z};
    Var f = triple_.pi().stack.step(tape_, triple_.pi_params, pi_state_, concat(parts));
    return triple_.pi().action_head.apply(tape_, triple_.pi_params, f);
}

std::tuple<Var, Var, Var> PolicyStepper::eta_step(Var state, Var action_prev, Var z_prev, int b_prev, Var task_cond) {
    std::vector<Var> parts{state, action_prev, z_prev, termination_one_hot(tape_, b_prev)};
    if (task_cond.size() > 0) parts.push_back(task_cond);
    const EtaNetwork& eta = triple_.eta();
    Var f = eta.stack.step(tape_, triple_.eta_params, eta_state_, concat(parts));
    auto [mu, var] = eta.z_head.apply(tape_, triple_.eta_params, f);
    return {mu, var, eta.termination.apply(tape_, triple_.eta_params, f)};
}

} // namespace ovi
