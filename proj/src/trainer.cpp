#include "ovi/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "ovi/errors.hpp"

namespace ovi {

double epsilon_at(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.epsilon_decay_epochs == 0 || epoch >= cfg.epsilon_decay_epochs) return cfg.epsilon_final;
    const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epsilon_decay_epochs);
    return cfg.epsilon_initial + (cfg.epsilon_final - cfg.epsilon_initial) * frac;
}

double w_eta_at(const TrainConfig& cfg, std::size_t epoch) {
    return epoch < cfg.w_eta_switch_epoch ? cfg.w_eta_initial : cfg.w_eta_final;
}

LossWeights weights_at(const TrainConfig& cfg, std::size_t epoch) { return {w_eta_at(cfg, epoch), cfg.w_ent}; }

TrainState initial_train_state(const TrainConfig& cfg) {
    TrainState s;
    s.rng = Rng(cfg.seed, 7);
    return s;
}

ObjectiveBreakdown train_iteration(const Trajectory& traj, PolicyTriple& triple, const TrainConfig& cfg,
                                   std::size_t epoch, Rng& rng, std::optional<double>& baseline) {
    Tape tape;
    auto inputs = trajectory_inputs(tape, traj);
    auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
    auto zeta = sample_zeta(q_out, epsilon_at(cfg, epoch), rng);
    auto g = build_objective(tape, traj, zeta, triple, weights_at(cfg, epoch), q_out, inputs);

    const double J = g.breakdown.J_weighted;
    if (!baseline) baseline = J;
    const double advantage = J - *baseline;
    *baseline = cfg.baseline_decay * *baseline + (1.0 - cfg.baseline_decay) * J;

    // Surrogate whose gradient is ∇J + (J − baseline)·∇log q(b); minimized as its negation.
    Var surrogate = add(g.J, scale(g.log_q_b, advantage));
    Var loss = scale(surrogate, -1.0);

    ParamStore* stores[] = {&triple.q_params, &triple.pi_params, &triple.eta_params};
    for (ParamStore* s : stores) s->zero_grad();
    tape.backward(loss);
    const AdamConfig adam = cfg.adam();
    for (ParamStore* s : stores) {
        s->clip_grad_norm(cfg.clip_norm);
        adam_step(*s, adam);
    }
    return g.breakdown;
}

double eval_objective(const Dataset& data, PolicyTriple& triple, const TrainConfig& cfg) {
    const std::size_t n = std::min(cfg.eval_batch, data.size());
    if (n == 0) throw InputError("eval_objective: empty evaluation batch");
    const LossWeights weights{cfg.w_eta_final, cfg.w_ent};
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Trajectory& traj = data.demos[i].traj;
        Rng rng(cfg.eval_seed, i);
        Tape tape;
        auto inputs = trajectory_inputs(tape, traj);
        auto q_out = q_forward(tape, triple, inputs.states, inputs.actions);
        auto zeta = sample_zeta(q_out, 0.0, rng);
        total += build_objective(tape, traj, zeta, triple, weights, q_out, inputs).breakdown.J_weighted;
    }
    return total / static_cast<double>(n);
}

std::vector<EpochMetrics> run_training(const Dataset& train, PolicyTriple& triple, TrainState& state,
                                       const TrainConfig& cfg,
                                       const std::function<void(const EpochMetrics&, const TrainState&)>& on_epoch) {
    if (train.empty()) throw InputError("run_training: empty training split");
    cfg.validate();
    std::vector<EpochMetrics> history;
    std::vector<std::size_t> order(train.size());
    while (state.epoch < cfg.epochs) {
        const std::size_t epoch = state.epoch;
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(state.rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.epsilon = epsilon_at(cfg, epoch);
        m.w_eta = w_eta_at(cfg, epoch);
        for (std::size_t idx : order) {
            ObjectiveBreakdown b;
            try {
                b = train_iteration(train.demos[idx].traj, triple, cfg, epoch, state.rng, state.baseline);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch + 1) + ", trajectory " + std::to_string(idx) +
                                   ": " + e.what());
            }
            m.mean_J += b.J_weighted;
            m.mean_log_pi += b.sum_log_pi;
            m.mean_log_eta += b.sum_log_eta;
            m.mean_neg_log_q += b.neg_log_q;
        }
        const double n = static_cast<double>(order.size());
        m.mean_J /= n;
        m.mean_log_pi /= n;
        m.mean_log_eta /= n;
        m.mean_neg_log_q /= n;
        m.eval_J = eval_objective(train, triple, cfg);
        state.epoch = epoch + 1;
        history.push_back(m);
        if (on_epoch) on_epoch(m, state);
    }
    return history;
}

std::string format_metrics_row(const EpochMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.epoch, m.mean_J, m.mean_log_pi,
                  m.mean_log_eta, m.mean_neg_log_q, m.epsilon, m.w_eta, m.eval_J);
    return buf;
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& echo, const std::string& header)
    : out_(path, std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    for (const auto& [k, v] : echo) out_ << "# " << k << " = " << v << '\n';
    out_ << header << '\n';
    out_.flush();
}

void MetricsCsv::append_line(const std::string& row) {
    out_ << row << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
}

} // namespace ovi
