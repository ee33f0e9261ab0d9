#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ovi/config.hpp"
#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/rollout.hpp"

namespace ovi {

using Points = std::vector<std::vector<double>>;

/// Mean over steps and state dimensions of the squared state difference.
double recon_mse(const Trajectory& pred, const Trajectory& gt);

struct BoundaryScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t matched = 0;
    std::size_t predicted = 0;
    std::size_t truth = 0;
};

/// Predicted boundaries are the steps t > 0 with b_t = 1; step 0 is dropped
/// from the ground truth as well. Each ground-truth boundary, in order, takes
/// the nearest unmatched prediction within ±tol. Both sides empty scores 1.
BoundaryScore boundary_f1(std::span<const int> pred_b, std::span<const std::size_t> gt_boundaries, std::size_t tol);

struct KMeansResult {
    std::vector<std::size_t> assignments;
    Points centroids;
    std::vector<double> objective_history;  // within-cluster sum of squares after each iteration
    std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. An empty cluster is re-seeded
/// from the point farthest from its centroid.
KMeansResult kmeans(const Points& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100);

/// Σ_clusters (largest label count) / total after k-means on `z`.
double cluster_purity(const Points& z, std::span<const int> labels, std::size_t k, std::uint64_t seed = 0,
                      std::size_t max_iters = 100);

/// Projection of the centered points onto the top two principal directions.
/// Rank-0 data yields zeros (with a warning).
std::vector<std::array<double, 2>> pca2(const Points& points);

/// One row per switch step of q's greedy latent sequence.
struct LatentRow {
    std::size_t demo_index = 0;
    std::size_t switch_timestep = 0;
    int gt_label = -1;
    std::vector<double> z;
};
std::vector<LatentRow> collect_latents(const Dataset& data, PolicyTriple& triple);

/// CSV header: demo_index,switch_timestep,gt_primitive_label,z_0..z_{d−1},pca_x,pca_y.
void export_latents(const Dataset& data, PolicyTriple& triple, const std::filesystem::path& path);

struct TrajectoryEval {
    std::size_t index = 0;
    double mse_teacher_forced = 0.0;
    double mse_open_loop = 0.0;
    std::size_t switches = 0;
    std::optional<BoundaryScore> boundary;
};

struct EvalReport {
    std::vector<TrajectoryEval> trajectories;
    double mse_teacher_forced = 0.0;
    double mse_open_loop = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> purity;
    std::size_t switch_count = 0;
    std::size_t labeled_count = 0;
    EvalConfig config;
};

/// Reconstruction (both modes), segmentation and clustering metrics over
/// `data`. Segmentation and purity are only computed on labeled demos.
EvalReport evaluate(const Dataset& data, PolicyTriple& triple, const Dynamics& dynamics, const EvalConfig& cfg);

void save_eval_report(const EvalReport& report, const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& echo = {});

} // namespace ovi
