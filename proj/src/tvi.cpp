#include "ovi/tvi.hpp"

#include <cmath>
#include <string>

#include "ovi/errors.hpp"

namespace ovi {

namespace {

void require_zeta_matches(const char* who, std::size_t outputs, const LatentSequence& zeta) {
    if (zeta.length() != outputs || zeta.z.size() != outputs) {
        throw InputError(std::string(who) + ": latent sequence length " + std::to_string(zeta.length()) +
                         " does not match " + std::to_string(outputs) + " network steps");
    }
    if (!satisfies_latent_invariants(zeta)) {
        throw InputError(std::string(who) + ": latent sequence violates b_1 = 1 / continuation invariants");
    }
}

Var score_options(const char* who, const OptionOutput& out, const LatentSequence& zeta, std::span<const Var> z) {
    require_zeta_matches(who, out.length(), zeta);
    if (z.size() != zeta.length()) throw InputError(std::string(who) + ": z Var count mismatch");
    std::vector<Var> terms;
    terms.reserve(2 * zeta.length());
    for (std::size_t t = 0; t < zeta.length(); ++t) {
        terms.push_back(bernoulli_log_prob(zeta.b[t], out.p_terminate(t)));
        if (zeta.b[t] == 1) terms.push_back(gaussian_log_prob(z[t], out.mu[t], out.var[t]));
    }
    return add_n(terms);
}

void check_term(const char* name, double v) {
    if (!std::isfinite(v)) throw NumericError(std::string("objective term ") + name + " is not finite");
}

} // namespace

std::vector<std::vector<double>> draw_noise(std::size_t T, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> n(T, std::vector<double>(d));
    for (auto& row : n) {
        for (double& v : row) v = rng.normal();
    }
    return n;
}

LatentSequence make_zeta(const OptionOutput& q_out, std::span<const int> b,
                         const std::vector<std::vector<double>>& noise) {
    const std::size_t T = q_out.length();
    if (b.size() != T || noise.size() != T) throw InputError("make_zeta: length mismatch");
    if (T == 0 || b[0] != 1) throw InputError("make_zeta: b_1 must be 1");
    LatentSequence zeta;
    zeta.b.assign(b.begin(), b.end());
    zeta.z.resize(T);
    zeta.noise.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        auto mu = q_out.mu[t].value();
        auto var = q_out.var[t].value();
        if (b[t] == 1) {
            if (noise[t].size() != mu.size()) throw DimensionError("make_zeta: noise width mismatch");
            zeta.noise[t] = noise[t];
            zeta.z[t].resize(mu.size());
            for (std::size_t i = 0; i < mu.size(); ++i) {
                zeta.z[t][i] = reparameterize_value(mu[i], var[i], noise[t][i]);
            }
        } else {
            zeta.noise[t].assign(mu.size(), 0.0);
            zeta.z[t] = zeta.z[t - 1];
        }
    }
    return zeta;
}

LatentSequence sample_zeta(const OptionOutput& q_out, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw InputError("sample_zeta: epsilon must lie in [0, 1]");
    const std::size_t T = q_out.length();
    if (T == 0) throw InputError("sample_zeta: empty q output");
    const std::size_t d = q_out.mu[0].size();
    std::vector<int> b(T, 1);
    std::vector<std::vector<double>> noise(T, std::vector<double>(d, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) {
            if (rng.uniform() < epsilon) {
                b[t] = rng.bernoulli(0.5) ? 1 : 0;
            } else {
                b[t] = rng.bernoulli(q_out.p_terminate_value(t)) ? 1 : 0;
            }
        }
        if (b[t] == 1) {
            for (double& v : noise[t]) v = (1.0 + epsilon) * rng.normal();
        }
    }
    return make_zeta(q_out, b, noise);
}

std::vector<Var> latent_vars(const OptionOutput& q_out, const LatentSequence& zeta) {
    require_zeta_matches("latent_vars", q_out.length(), zeta);
    std::vector<Var> z(zeta.length());
    for (std::size_t t = 0; t < zeta.length(); ++t) {
        z[t] = zeta.b[t] == 1 ? reparameterize(q_out.mu[t], q_out.var[t], zeta.noise[t]) : z[t - 1];
    }
    return z;
}

Var log_q(const OptionOutput& q_out, const LatentSequence& zeta, std::span<const Var> z) {
    return score_options("log_q", q_out, zeta, z);
}

Var log_eta(const OptionOutput& eta_out, const LatentSequence& zeta, std::span<const Var> z) {
    return score_options("log_eta", eta_out, zeta, z);
}

Var log_pi(const ActionOutput& pi_out, std::span<const Var> actions) {
    if (actions.empty()) throw InputError("log_pi: empty action sequence");
    if (actions.size() != pi_out.length()) {
        throw InputError("log_pi: " + std::to_string(actions.size()) + " actions for " +
                         std::to_string(pi_out.length()) + " policy steps");
    }
    std::vector<Var> terms;
    terms.reserve(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) {
        terms.push_back(gaussian_log_prob(actions[t], pi_out.mu[t], pi_out.var[t]));
    }
    return add_n(terms);
}

Var log_q_terminations(const OptionOutput& q_out, const LatentSequence& zeta) {
    require_zeta_matches("log_q_terminations", q_out.length(), zeta);
    Tape& tape = *q_out.mu.front().tape();
    std::vector<Var> terms;
    for (std::size_t t = 1; t < zeta.length(); ++t) terms.push_back(bernoulli_log_prob(zeta.b[t], q_out.p_terminate(t)));
    if (terms.empty()) return tape.constant(std::vector<double>{0.0});
    return add_n(terms);
}

ShiftedZeta shift_zeta(Tape& tape, std::span<const Var> z, std::span<const int> b, std::size_t latent_dim) {
    ShiftedZeta s;
    s.z_prev.reserve(z.size());
    s.b_prev.reserve(z.size());
    Var zero = tape.constant(std::vector<double>(latent_dim, 0.0));
    for (std::size_t t = 0; t < z.size(); ++t) {
        s.z_prev.push_back(t == 0 ? zero : z[t - 1]);
        s.b_prev.push_back(t == 0 ? 1 : b[t - 1]);
    }
    return s;
}

ObjectiveGraph build_objective(Tape& tape, const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                               const LossWeights& weights, const OptionOutput& q_out, const TrajectoryInputs& inputs,
                               double dynamics_log_prob_per_step) {
    if (weights.w_eta < 0.0 || weights.w_ent < 0.0) throw ConfigError("loss weights must be nonnegative");
    ObjectiveGraph g;
    g.q_out = q_out;
    g.z = latent_vars(q_out, zeta);
    g.pi_out = pi_forward(tape, triple, inputs.states, inputs.actions_prev, g.z);
    auto shifted = shift_zeta(tape, g.z, zeta.b, triple.dims().latent);
    Var task = task_condition(tape, triple.dims(), traj.task_id);
    g.eta_out = eta_forward(tape, triple, inputs.states, inputs.actions_prev, shifted.z_prev, shifted.b_prev, task);

    g.log_pi = log_pi(g.pi_out, inputs.actions);
    g.log_eta = log_eta(g.eta_out, zeta, g.z);
    g.log_q = log_q(q_out, zeta, g.z);
    g.log_q_b = log_q_terminations(q_out, zeta);

    Var neg_log_q = scale(g.log_q, -1.0);
    const Var terms[] = {g.log_pi, scale(g.log_eta, weights.w_eta), scale(neg_log_q, weights.w_ent)};
    g.J = add_n(terms);

    auto& b = g.breakdown;
    b.sum_log_pi = g.log_pi.scalar();
    b.sum_log_eta = g.log_eta.scalar();
    b.neg_log_q = neg_log_q.scalar();
    b.w_eta = weights.w_eta;
    b.w_ent = weights.w_ent;
    b.J_weighted = g.J.scalar();
    check_term("sum_log_pi", b.sum_log_pi);
    check_term("sum_log_eta", b.sum_log_eta);
    check_term("neg_log_q", b.neg_log_q);
    check_term("J_weighted", b.J_weighted);

    if (dynamics_log_prob_per_step != 0.0) {
        g.J = add_constant(g.J, dynamics_log_prob_per_step * static_cast<double>(traj.length()));
    }
    return g;
}

ObjectiveBreakdown objective(const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                             const LossWeights& weights) {
    Tape tape;
    auto inputs = trajectory_inputs(tape, traj);
    auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
    return build_objective(tape, traj, zeta, triple, weights, q_out, inputs).breakdown;
}

ObjectiveBreakdown pathwise_gradients(const Trajectory& traj, const LatentSequence& zeta, PolicyTriple& triple,
                                      const LossWeights& weights, double dynamics_log_prob_per_step) {
    Tape tape;
    auto inputs = trajectory_inputs(tape, traj);
    auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
    auto g = build_objective(tape, traj, zeta, triple, weights, q_out, inputs, dynamics_log_prob_per_step);
    triple.q_params.zero_grad();
    triple.pi_params.zero_grad();
    triple.eta_params.zero_grad();
    tape.backward(g.J);
    return g.breakdown;
}

double ReinforceEstimate::standard_error(std::size_t i) const {
    return samples > 0 ? std::sqrt(variance.at(i) / static_cast<double>(samples)) : 0.0;
}

ReinforceEstimate reinforce_b_gradients(const Trajectory& traj, PolicyTriple& triple, const LossWeights& weights,
                                        std::size_t n_samples, double baseline,
                                        const std::vector<std::vector<double>>& noise, Rng& rng, double epsilon) {
    if (n_samples < 1) throw InputError("reinforce_b_gradients: n_samples must be >= 1");
    const std::size_t T = traj.length();
    if (noise.size() != T) throw InputError("reinforce_b_gradients: noise must have one row per step");
    const std::size_t n = triple.q_params.scalar_count();
    ReinforceEstimate est;
    est.mean.assign(n, 0.0);
    std::vector<double> m2(n, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Tape tape;
        auto inputs = trajectory_inputs(tape, traj);
        auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
        std::vector<int> b(T, 1);
        for (std::size_t t = 1; t < T; ++t) {
            const double p = rng.uniform() < epsilon ? 0.5 : q_out.p_terminate_value(t);
            b[t] = rng.bernoulli(p) ? 1 : 0;
        }
        auto zeta = make_zeta(q_out, b, noise);
        auto g = build_objective(tape, traj, zeta, triple, weights, q_out, inputs);
        const double advantage = g.J.scalar() - baseline;
        triple.q_params.zero_grad();
        tape.backward(g.log_q_b);
        const auto score = triple.q_params.flat_grads();
        // Welford running mean / variance per coordinate.
        const double k = static_cast<double>(s + 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = advantage * score[i];
            const double delta = x - est.mean[i];
            est.mean[i] += delta / k;
            m2[i] += delta * (x - est.mean[i]);
        }
    }
    triple.q_params.zero_grad();
    est.samples = n_samples;
    est.variance.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        est.variance[i] = n_samples > 1 ? m2[i] / static_cast<double>(n_samples - 1) : 0.0;
    }
    return est;
}

OracleGradient enumerate_b_oracle(const Trajectory& traj, PolicyTriple& triple, const LossWeights& weights,
                                  double baseline, const std::vector<std::vector<double>>& noise) {
    const std::size_t T = traj.length();
    if (T == 0) throw InputError("enumerate_b_oracle: empty trajectory");
    if (T > kMaxOracleLength) {
        throw InputError("enumerate_b_oracle: T = " + std::to_string(T) + " exceeds the enumeration limit of " +
                         std::to_string(kMaxOracleLength));
    }
    if (noise.size() != T) throw InputError("enumerate_b_oracle: noise must have one row per step");
    const std::size_t nq = triple.q_params.scalar_count();
    const std::size_t npi = triple.pi_params.scalar_count();
    const std::size_t neta = triple.eta_params.scalar_count();
    OracleGradient out;
    out.score.assign(nq, 0.0);
    out.pathwise.assign(nq + npi + neta, 0.0);
    const std::size_t patterns = std::size_t{1} << (T - 1);
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        std::vector<int> b(T, 1);
        for (std::size_t t = 1; t < T; ++t) b[t] = static_cast<int>((mask >> (t - 1)) & 1U);
        Tape tape;
        auto inputs = trajectory_inputs(tape, traj);
        auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
        auto zeta = make_zeta(q_out, b, noise);
        auto g = build_objective(tape, traj, zeta, triple, weights, q_out, inputs);
        const double prob = std::exp(g.log_q_b.scalar());
        const double J = g.J.scalar();
        out.expected_J += prob * J;

        triple.q_params.zero_grad();
        triple.pi_params.zero_grad();
        triple.eta_params.zero_grad();
        tape.backward(g.J);
        std::size_t k = 0;
        for (ParamStore* store : {&triple.q_params, &triple.pi_params, &triple.eta_params}) {
            for (double v : store->flat_grads()) out.pathwise[k++] += prob * v;
        }

        triple.q_params.zero_grad();
        tape.backward(g.log_q_b);
        const auto score = triple.q_params.flat_grads();
        for (std::size_t i = 0; i < nq; ++i) out.score[i] += prob * (J - baseline) * score[i];
        ++out.sequences;
    }
    triple.q_params.zero_grad();
    triple.pi_params.zero_grad();
    triple.eta_params.zero_grad();
    out.total = out.pathwise;
    for (std::size_t i = 0; i < nq; ++i) out.total[i] += out.score[i];
    return out;
}

} // namespace ovi
