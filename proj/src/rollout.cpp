#include "ovi/rollout.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "ovi/errors.hpp"
#include "ovi/tape.hpp"

namespace ovi {

Dynamics integration_dynamics() {
    return {[](std::span<const double> s, std::span<const double> a) {
        if (s.size() != a.size()) throw DimensionError("integration dynamics: state and action widths differ");
        std::vector<double> next(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) next[i] = s[i] + a[i];
        return next;
    }};
}

Dynamics normalized_integration_dynamics(const NormalizationStats& stats) {
    return {[stats](std::span<const double> s, std::span<const double> a) {
        if (s.size() != a.size() || s.size() != stats.state_mean.size() || a.size() != stats.action_mean.size()) {
            throw DimensionError("normalized dynamics: widths disagree with normalization statistics");
        }
        std::vector<double> next(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double raw_s = s[i] * stats.state_scale[i] + stats.state_mean[i];
            const double raw_a = a[i] * stats.action_scale[i] + stats.action_mean[i];
            next[i] = (raw_s + raw_a - stats.state_mean[i]) / stats.state_scale[i];
        }
        return next;
    }};
}

RolloutMode parse_rollout_mode(std::string_view s) {
    if (s == "greedy") return RolloutMode::greedy;
    if (s == "stochastic") return RolloutMode::stochastic;
    throw ConfigError("rollout mode must be \"greedy\" or \"stochastic\", got \"" + std::string(s) + "\"");
}

Rollout generate(PolicyTriple& triple, const Dynamics& dynamics, std::span<const double> s1, std::size_t T,
                 RolloutMode mode, Rng& rng, std::optional<int> task_id) {
    if (T == 0) throw InputError("generate: T must be >= 1");
    const Dims& dims = triple.dims();
    if (s1.size() != dims.state) throw DimensionError("generate: initial state width != state dimension");
    const bool greedy = mode == RolloutMode::greedy;

    Tape tape;
    PolicyStepper stepper(tape, triple);
    Var task = task_condition(tape, dims, task_id);
    std::vector<std::vector<double>> states, actions;
    Rollout out;
    std::vector<double> s(s1.begin(), s1.end());
    std::vector<double> a_prev(dims.action, 0.0);
    std::vector<double> z_prev(dims.latent, 0.0);
    int b_prev = 1;
    for (std::size_t t = 0; t < T; ++t) {
        Var sv = tape.constant(s);
        Var apv = tape.constant(a_prev);
        auto [mu_z, var_z, probs] = stepper.eta_step(sv, apv, tape.constant(z_prev), b_prev, task);
        int b = 1;
        if (t > 0) {
            const double p = probs.value()[1];
            b = greedy ? (p >= 0.5 ? 1 : 0) : (rng.bernoulli(p) ? 1 : 0);
        }
        std::vector<double> z(dims.latent), noise(dims.latent, 0.0);
        if (b == 1) {
            auto mu = mu_z.value();
            auto var = var_z.value();
            for (std::size_t i = 0; i < dims.latent; ++i) {
                if (!greedy) noise[i] = rng.normal();
                z[i] = reparameterize_value(mu[i], var[i], noise[i]);
            }
        } else {
            z = z_prev;
        }
        auto [mu_a, var_a] = stepper.pi_step(sv, apv, tape.constant(z));
        std::vector<double> a(dims.action);
        for (std::size_t i = 0; i < dims.action; ++i) {
            const double n = greedy ? 0.0 : rng.normal();
            a[i] = reparameterize_value(mu_a.value()[i], var_a.value()[i], n);
        }
        states.push_back(s);
        actions.push_back(a);
        out.zeta.z.push_back(z);
        out.zeta.b.push_back(b);
        out.zeta.noise.push_back(noise);
        s = dynamics.step(s, a);
        a_prev = a;
        z_prev = z;
        b_prev = b;
    }
    out.traj = make_trajectory(states, actions, task_id);
    return out;
}

LatentSequence greedy_zeta(const OptionOutput& q_out) {
    const std::size_t T = q_out.length();
    if (T == 0) throw InputError("greedy_zeta: empty q output");
    LatentSequence zeta;
    for (std::size_t t = 0; t < T; ++t) {
        const int b = t == 0 || q_out.p_terminate_value(t) >= 0.5 ? 1 : 0;
        auto mu = q_out.mu[t].value();
        zeta.b.push_back(b);
        zeta.noise.emplace_back(mu.size(), 0.0);
        if (b == 1) {
            zeta.z.emplace_back(mu.begin(), mu.end());
        } else {
            zeta.z.push_back(zeta.z.back());
        }
    }
    return zeta;
}

LatentSequence infer_zeta(const Trajectory& traj, PolicyTriple& triple) {
    Tape tape;
    return greedy_zeta(q_forward(tape, triple, traj));
}

Trajectory reconstruct(const Trajectory& traj, PolicyTriple& triple, const Dynamics& dynamics, ReconstructMode mode) {
    const std::size_t T = traj.length();
    if (T == 0) throw InputError("reconstruct: empty trajectory");
    const LatentSequence zeta = infer_zeta(traj, triple);
    std::vector<std::vector<double>> states, actions;
    Tape tape;
    if (mode == ReconstructMode::teacher_forced) {
        auto in = trajectory_inputs(tape, traj);
        std::vector<Var> zs;
        for (const auto& z : zeta.z) zs.push_back(tape.constant(z));
        auto pi_out = pi_forward(tape, triple, in.states, in.actions_prev, zs);
        auto s0 = traj.state(0);
        states.emplace_back(s0.begin(), s0.end());
        for (std::size_t t = 0; t < T; ++t) {
            auto mu = pi_out.mu[t].value();
            actions.emplace_back(mu.begin(), mu.end());
            if (t + 1 < T) states.push_back(dynamics.step(traj.state(t), actions.back()));
        }
    } else {
        PolicyStepper stepper(tape, triple);
        auto s0 = traj.state(0);
        std::vector<double> s(s0.begin(), s0.end());
        std::vector<double> a_prev(traj.action_dim(), 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            auto [mu, var] = stepper.pi_step(tape.constant(s), tape.constant(a_prev), tape.constant(zeta.z[t]));
            std::vector<double> a(mu.value().begin(), mu.value().end());
            states.push_back(s);
            actions.push_back(a);
            if (t + 1 < T) s = dynamics.step(s, a);
            a_prev = a;
        }
    }
    return make_trajectory(states, actions, traj.task_id);
}

void save_rollouts_jsonl(const std::vector<Rollout>& rollouts, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto rows = [](const RealArray& m) {
        nlohmann::json j = nlohmann::json::array();
        const std::size_t cols = m.dim(1);
        for (std::size_t r = 0; r < m.dim(0); ++r) {
            j.push_back(std::vector<double>(m.data().begin() + r * cols, m.data().begin() + (r + 1) * cols));
        }
        return j;
    };
    for (const auto& r : rollouts) {
        nlohmann::json j;
        j["states"] = rows(r.traj.states);
        j["actions"] = rows(r.traj.actions);
        if (r.traj.task_id) j["task_id"] = *r.traj.task_id;
        j["zeta"] = {{"z", r.zeta.z}, {"b", r.zeta.b}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace ovi
