#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ovi/config.hpp"
#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/rng.hpp"
#include "ovi/tvi.hpp"

namespace ovi {

/// Linear decay from epsilon_initial to epsilon_final over the decay epochs,
/// constant afterwards.
double epsilon_at(const TrainConfig& cfg, std::size_t epoch);
/// Step schedule: w_eta_initial before the switch epoch, w_eta_final from it on.
double w_eta_at(const TrainConfig& cfg, std::size_t epoch);
LossWeights weights_at(const TrainConfig& cfg, std::size_t epoch);

/// Mutable state of a training run besides the parameters.
struct TrainState {
    std::size_t epoch = 0;  // completed epochs
    std::optional<double> baseline;
    Rng rng;
};
TrainState initial_train_state(const TrainConfig& cfg);

/// One update on one trajectory: sample ζ from q, evaluate J, backpropagate
/// the pathwise + score-function surrogate, clip and take an Adam step on
/// each of q, π, η. The baseline is initialized to the first J and then
/// tracks an exponential moving average.
ObjectiveBreakdown train_iteration(const Trajectory& traj, PolicyTriple& triple, const TrainConfig& cfg,
                                   std::size_t epoch, Rng& rng, std::optional<double>& baseline);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double mean_J = 0.0;
    double mean_log_pi = 0.0;
    double mean_log_eta = 0.0;
    double mean_neg_log_q = 0.0;
    double epsilon = 0.0;
    double w_eta = 0.0;
    double eval_J = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

/// Mean J over the first eval_batch demos, with ζ drawn greedily-free
/// (epsilon = 0) from a fixed per-demo stream and weights fixed at
/// (w_eta_final, w_ent) so values are comparable across epochs.
double eval_objective(const Dataset& data, PolicyTriple& triple, const TrainConfig& cfg);

/// Runs epochs state.epoch .. cfg.epochs − 1 over `train` in a seeded
/// shuffled order. `on_epoch` fires after each epoch with the updated state.
std::vector<EpochMetrics> run_training(const Dataset& train, PolicyTriple& triple, TrainState& state,
                                       const TrainConfig& cfg,
                                       const std::function<void(const EpochMetrics&, const TrainState&)>& on_epoch = {});

inline constexpr const char* kMetricsHeader = "epoch,mean_J,mean_log_pi,mean_log_eta,mean_neg_log_q,epsilon,w_eta,eval_J";
std::string format_metrics_row(const EpochMetrics& m);

/// metrics.csv: `# key = value` config echo lines, the fixed header, one row per epoch.
class MetricsCsv {
public:
    MetricsCsv(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& echo,
               const std::string& header = kMetricsHeader);
    void append_line(const std::string& row);
    void append(const EpochMetrics& m) { append_line(format_metrics_row(m)); }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

} // namespace ovi
