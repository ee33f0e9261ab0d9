#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ovi/trajectory.hpp"

namespace ovi {

/// Trajectory plus ground-truth skill labels. `boundaries` are zero-based step
/// indices where a segment begins and always include 0. Unlabeled data has
/// both vectors empty.
struct LabeledTrajectory {
    Trajectory traj;
    std::vector<int> labels;
    std::vector<std::size_t> boundaries;

    bool labeled() const { return !labels.empty(); }
    friend bool operator==(const LabeledTrajectory&, const LabeledTrajectory&) = default;
};

/// Generator description of a synthetic corpus: each demo chains segments of
/// unit-speed straight-line motion along one of K evenly spaced directions.
struct CorpusSpec {
    int primitives = 4;
    std::size_t dim = 2;
    std::size_t segments_min = 3;
    std::size_t segments_max = 5;
    std::size_t segment_length_min = 5;
    std::size_t segment_length_max = 10;
    double action_noise_sigma = 0.05;
    std::size_t demo_count = 500;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Per-dimension affine map to zero mean / unit scale.
struct NormalizationStats {
    std::vector<double> state_mean;
    std::vector<double> state_scale;
    std::vector<double> action_mean;
    std::vector<double> action_scale;

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct Dataset {
    std::vector<LabeledTrajectory> demos;
    std::string split = "all";
    std::optional<NormalizationStats> stats;

    std::size_t size() const { return demos.size(); }
    bool empty() const { return demos.empty(); }
};

Dataset generate_corpus(const CorpusSpec& spec);
/// Direction of primitive j: angle 2πj/K in the first two workspace axes.
std::vector<double> primitive_direction(int primitive, int primitives, std::size_t dim);

/// Keeps every factor-th state; actions are re-derived from successive kept
/// states and states re-integrated so s_{t+1} = s_t + a_t holds exactly.
Trajectory downsample(const Trajectory& traj, std::size_t factor);
LabeledTrajectory downsample(const LabeledTrajectory& demo, std::size_t factor);

/// Seeded disjoint split; both halves keep the original relative order.
std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t test_count, std::uint64_t seed);

/// Statistics over every step of `train`. Zero-variance dimensions get scale 1.
NormalizationStats compute_stats(const Dataset& train);
Trajectory normalize(const Trajectory& traj, const NormalizationStats& stats);
Trajectory denormalize(const Trajectory& traj, const NormalizationStats& stats);
/// Applies `stats` to every demo and records them on the dataset.
void normalize(Dataset& dataset, const NormalizationStats& stats);

/// True when every step satisfies s_{t+1} == s_t + a_t bitwise.
bool integration_consistent(const Trajectory& traj);
/// Boundaries recomputed from label changes (plus index 0).
std::vector<std::size_t> boundaries_from_labels(const std::vector<int>& labels);

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);
/// Parse errors report the 1-based line number.
Dataset load_jsonl(const std::filesystem::path& path);

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_stats(const std::filesystem::path& path);

} // namespace ovi
