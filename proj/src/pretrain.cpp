#include "ovi/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ovi/errors.hpp"

namespace ovi {

SegmentEncoder::SegmentEncoder(const Dims& dims, const NetConfig& net, std::uint64_t seed) : latent_(dims.latent) {
    Rng rng(seed, 4);
    stack_ = RecurrentStack(params, "stack", dims.state + dims.action, net, Direction::bidirectional, rng);
    z_head_ = GaussianHead::make(params, "z_head", stack_.output_size(), dims.latent, rng);
}

std::pair<Var, Var> SegmentEncoder::encode(Tape& tape, std::span<const Var> states, std::span<const Var> actions) {
    if (states.empty() || states.size() != actions.size()) {
        throw InputError("SegmentEncoder: states and actions must be nonempty and aligned");
    }
    std::vector<Var> inputs(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
        const Var parts[] = {states[t], actions[t]};
        inputs[t] = concat(parts);
    }
    auto features = stack_.run(tape, params, inputs);
    return z_head_.apply(tape, params, features.front());
}

Trajectory sample_segment(const Dataset& dataset, std::size_t min_length, std::size_t max_length, Rng& rng) {
    if (dataset.empty()) throw InputError("sample_segment: empty dataset");
    if (min_length < 2 || min_length > max_length) {
        throw InputError("sample_segment: length range [" + std::to_string(min_length) + ", " +
                         std::to_string(max_length) + "] is invalid (need 2 <= min <= max)");
    }
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& d : dataset.demos) shortest = std::min(shortest, d.traj.length());
    if (max_length > shortest) {
        throw InputError("sample_segment: max length " + std::to_string(max_length) +
                         " exceeds the shortest trajectory (" + std::to_string(shortest) + ")");
    }
    const auto demo = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1));
    const auto len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(min_length), static_cast<std::int64_t>(max_length)));
    const Trajectory& traj = dataset.demos[demo].traj;
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(traj.length() - len)));
    return slice_trajectory(traj, start, len);
}

Var kl_to_standard_normal(Var mu, Var var) {
    if (mu.size() != var.size()) throw DimensionError("kl_to_standard_normal: mu and var widths differ");
    Tape& tape = *mu.tape();
    auto mv = mu.value();
    auto vv = var.value();
    for (double v : vv) {
        if (!(v > 0.0)) throw DomainError("kl_to_standard_normal: variance must be positive");
    }
    const double kl = kl_to_standard_normal_value(mv, vv);
    return tape.make("kl_to_standard_normal", {1}, {kl}, {mu, var}, [](Tape& t, std::size_t self) {
        const auto& n = t.node(self);
        const double g = n.grad[0];
        const auto& mval = t.node(n.inputs[0]).value;
        const auto& vval = t.node(n.inputs[1]).value;
        if (t.node(n.inputs[0]).requires_grad) {
            auto& gm = t.grad_buffer(n.inputs[0]);
            for (std::size_t i = 0; i < mval.size(); ++i) gm[i] += g * mval[i];
        }
        if (t.node(n.inputs[1]).requires_grad) {
            auto& gv = t.grad_buffer(n.inputs[1]);
            for (std::size_t i = 0; i < vval.size(); ++i) gv[i] += g * 0.5 * (1.0 - 1.0 / vval[i]);
        }
    });
}

double kl_to_standard_normal_value(std::span<const double> mu, std::span<const double> var) {
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(var[i] > 0.0)) throw DomainError("kl_to_standard_normal: variance must be positive");
        kl += 0.5 * (var[i] + mu[i] * mu[i] - 1.0 - std::log(var[i]));
    }
    return kl;
}

namespace {

struct VaeGraph {
    Var loss;
    VaeBreakdown breakdown;
};

VaeGraph record_vae(Tape& tape, const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple,
                    double beta, std::span<const double> eps) {
    if (beta < 0.0) throw ConfigError("pretrain beta must be nonnegative");
    if (eps.size() != encoder.latent_dim()) throw DimensionError("vae_step: noise width != latent dimension");
    auto in = trajectory_inputs(tape, segment);
    auto [mu, var] = encoder.encode(tape, in.states, in.actions);
    Var z = reparameterize(mu, var, eps);
    std::vector<Var> zs(segment.length(), z);
    auto pi_out = pi_forward(tape, triple, in.states, in.actions_prev, zs);
    std::vector<Var> terms;
    for (std::size_t t = 0; t < segment.length(); ++t) {
        terms.push_back(gaussian_log_prob(in.actions[t], pi_out.mu[t], pi_out.var[t]));
    }
    Var log_pi = add_n(terms);
    Var kl = kl_to_standard_normal(mu, var);
    VaeGraph g;
    g.loss = sub(scale(kl, beta), log_pi);
    g.breakdown = {g.loss.scalar(), log_pi.scalar(), kl.scalar()};
    return g;
}

} // namespace

VaeBreakdown vae_step(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                      std::span<const double> eps) {
    Tape tape;
    auto g = record_vae(tape, segment, encoder, triple, beta, eps);
    encoder.params.zero_grad();
    triple.pi_params.zero_grad();
    tape.backward(g.loss);
    return g.breakdown;
}

VaeBreakdown vae_step(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                      Rng& rng) {
    std::vector<double> eps(encoder.latent_dim());
    for (double& e : eps) e = rng.normal();
    return vae_step(segment, encoder, triple, beta, eps);
}

double vae_loss(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                std::span<const double> eps) {
    Tape tape;
    return record_vae(tape, segment, encoder, triple, beta, eps).breakdown.loss;
}

PretrainEpoch pretrain_epoch(const Dataset& train, SegmentEncoder& encoder, PolicyTriple& triple,
                             const PretrainConfig& cfg, std::size_t epoch, Rng& rng) {
    if (train.empty()) throw InputError("pretrain: empty training set");
    PretrainEpoch out;
    out.epoch = epoch;
    for (std::size_t i = 0; i < train.size(); ++i) {
        Trajectory seg = sample_segment(train, cfg.segment_min, cfg.segment_max, rng);
        auto b = vae_step(seg, encoder, triple, cfg.beta, rng);
        encoder.params.clip_grad_norm(cfg.clip_norm);
        triple.pi_params.clip_grad_norm(cfg.clip_norm);
        adam_step(encoder.params, cfg.adam);
        adam_step(triple.pi_params, cfg.adam);
        out.mean_loss += b.loss;
        out.mean_log_pi += b.log_pi;
        out.mean_kl += b.kl;
    }
    const double n = static_cast<double>(train.size());
    out.mean_loss /= n;
    out.mean_log_pi /= n;
    out.mean_kl /= n;
    return out;
}

std::size_t warm_start_q(PolicyTriple& triple, const SegmentEncoder& encoder) {
    return triple.q_params.copy_matching_values(encoder.params);
}

} // namespace ovi
