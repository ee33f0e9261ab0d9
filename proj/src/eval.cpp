#include "ovi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include <Eigen/Dense>
#include <json.hpp>

#include "ovi/errors.hpp"
#include "ovi/rng.hpp"

namespace ovi {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double r = a[i] - b[i];
        d += r * r;
    }
    return d;
}

std::size_t nearest(const std::vector<double>& p, const Points& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

double inertia(const Points& points, const std::vector<std::size_t>& assign, const Points& centroids) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += squared_distance(points[i], centroids[assign[i]]);
    return s;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

double recon_mse(const Trajectory& pred, const Trajectory& gt) {
    if (pred.length() != gt.length() || pred.state_dim() != gt.state_dim()) {
        throw InputError("recon_mse: trajectories differ in length or state dimension (" +
                         std::to_string(pred.length()) + "x" + std::to_string(pred.state_dim()) + " vs " +
                         std::to_string(gt.length()) + "x" + std::to_string(gt.state_dim()) + ")");
    }
    if (gt.length() == 0 || gt.state_dim() == 0) throw InputError("recon_mse: empty trajectory");
    double s = 0.0;
    for (std::size_t i = 0; i < gt.states.size(); ++i) {
        const double r = pred.states[i] - gt.states[i];
        s += r * r;
    }
    return s / static_cast<double>(gt.states.size());
}

BoundaryScore boundary_f1(std::span<const int> pred_b, std::span<const std::size_t> gt_boundaries, std::size_t tol) {
    std::vector<std::size_t> pred, truth;
    for (std::size_t t = 1; t < pred_b.size(); ++t) {
        if (pred_b[t] == 1) pred.push_back(t);
    }
    for (std::size_t g : gt_boundaries) {
        if (g != 0) truth.push_back(g);
    }
    BoundaryScore s;
    s.predicted = pred.size();
    s.truth = truth.size();
    if (pred.empty() && truth.empty()) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    std::vector<bool> used(pred.size(), false);
    for (std::size_t g : truth) {
        std::size_t best = pred.size();
        std::size_t best_d = tol + 1;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (used[i]) continue;
            const std::size_t d = pred[i] > g ? pred[i] - g : g - pred[i];
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best < pred.size()) {
            used[best] = true;
            ++s.matched;
        }
    }
    s.precision = s.predicted ? static_cast<double>(s.matched) / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.truth ? static_cast<double>(s.matched) / static_cast<double>(s.truth) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

KMeansResult kmeans(const Points& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
    const std::size_t n = points.size();
    if (k == 0) throw InputError("kmeans: k must be positive");
    if (k > n) throw InputError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw DimensionError("kmeans: points have differing dimensions");
    }
    Rng rng(seed);
    KMeansResult r;
    // k-means++ seeding.
    r.centroids.push_back(points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))]);
    std::vector<double> d2(n);
    while (r.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = squared_distance(points[i], r.centroids[nearest(points[i], r.centroids)]);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        }
        r.centroids.push_back(points[pick]);
    }

    r.assignments.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) r.assignments[i] = nearest(points[i], r.centroids);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        // Update step.
        Points sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[r.assignments[i]];
            for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
            ++counts[r.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[r.assignments[i]] <= 1) continue;
                const double d = squared_distance(points[i], r.centroids[r.assignments[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far_d < 0.0) continue;
            --counts[r.assignments[far]];
            r.centroids[c] = points[far];
            r.assignments[far] = c;
            counts[c] = 1;
        }
        // Assignment step.
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest(points[i], r.centroids);
            if (c != r.assignments[i]) {
                r.assignments[i] = c;
                changed = true;
            }
        }
        r.objective_history.push_back(inertia(points, r.assignments, r.centroids));
        r.iterations = iter + 1;
        if (!changed) break;
    }
    return r;
}

double cluster_purity(const Points& z, std::span<const int> labels, std::size_t k, std::uint64_t seed,
                      std::size_t max_iters) {
    if (z.size() != labels.size()) throw InputError("cluster_purity: one label per point is required");
    if (z.size() < k) {
        throw InputError("cluster_purity: " + std::to_string(z.size()) + " switch points is fewer than k = " +
                         std::to_string(k));
    }
    auto km = kmeans(z, k, seed, max_iters);
    std::vector<std::map<int, std::size_t>> counts(k);
    for (std::size_t i = 0; i < z.size(); ++i) ++counts[km.assignments[i]][labels[i]];
    std::size_t hits = 0;
    for (const auto& c : counts) {
        std::size_t best = 0;
        for (const auto& [label, count] : c) best = std::max(best, count);
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(z.size());
}

std::vector<std::array<double, 2>> pca2(const Points& points) {
    const std::size_t n = points.size();
    if (n < 2) throw InputError("pca2: at least 2 points are required");
    const std::size_t dim = points.front().size();
    if (dim < 2) throw InputError("pca2: points must have dimension >= 2");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i].size() != dim) throw DimensionError("pca2: points have differing dimensions");
        for (std::size_t j = 0; j < dim; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
    std::vector<std::array<double, 2>> out(n, {0.0, 0.0});
    if (cov.cwiseAbs().maxCoeff() == 0.0) {
        std::cerr << "warning: pca2 input has rank 0; projecting to zeros\n";
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const Eigen::Index d = static_cast<Eigen::Index>(dim);
    for (int c = 0; c < 2; ++c) {
        // Eigenvalues are ascending; fix the sign so the largest-magnitude entry is positive.
        Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        const Eigen::VectorXd proj = X * v;
        for (std::size_t i = 0; i < n; ++i) out[i][static_cast<std::size_t>(c)] = proj(static_cast<Eigen::Index>(i));
    }
    return out;
}

std::vector<LatentRow> collect_latents(const Dataset& data, PolicyTriple& triple) {
    std::vector<LatentRow> rows;
    for (std::size_t d = 0; d < data.size(); ++d) {
        const auto& demo = data.demos[d];
        const LatentSequence zeta = infer_zeta(demo.traj, triple);
        for (std::size_t t = 0; t < zeta.length(); ++t) {
            if (zeta.b[t] != 1) continue;
            LatentRow r;
            r.demo_index = d;
            r.switch_timestep = t;
            r.gt_label = demo.labeled() ? demo.labels[t] : -1;
            r.z = zeta.z[t];
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

void export_latents(const Dataset& data, PolicyTriple& triple, const std::filesystem::path& path) {
    const auto rows = collect_latents(data, triple);
    const std::size_t dz = triple.dims().latent;
    std::vector<std::array<double, 2>> proj(rows.size(), {0.0, 0.0});
    if (rows.size() >= 2 && dz >= 2) {
        Points pts;
        for (const auto& r : rows) pts.push_back(r.z);
        proj = pca2(pts);
    } else {
        std::cerr << "warning: too few switch points or latent dimensions for a 2-D projection\n";
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "demo_index,switch_timestep,gt_primitive_label";
    for (std::size_t i = 0; i < dz; ++i) out << ",z_" << i;
    out << ",pca_x,pca_y\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << r.demo_index << ',' << r.switch_timestep << ',' << r.gt_label;
        for (double v : r.z) out << ',' << fmt(v);
        out << ',' << fmt(proj[i][0]) << ',' << fmt(proj[i][1]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

EvalReport evaluate(const Dataset& data, PolicyTriple& triple, const Dynamics& dynamics, const EvalConfig& cfg) {
    if (data.empty()) throw InputError("evaluate: empty dataset");
    EvalReport rep;
    rep.config = cfg;
    Points z_points;
    std::vector<int> z_labels;
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& demo = data.demos[i];
        TrajectoryEval te;
        te.index = i;
        te.mse_teacher_forced = recon_mse(reconstruct(demo.traj, triple, dynamics, ReconstructMode::teacher_forced), demo.traj);
        te.mse_open_loop = recon_mse(reconstruct(demo.traj, triple, dynamics, ReconstructMode::open_loop), demo.traj);
        const LatentSequence zeta = infer_zeta(demo.traj, triple);
        for (int b : zeta.b) te.switches += static_cast<std::size_t>(b);
        rep.switch_count += te.switches;
        if (demo.labeled()) {
            te.boundary = boundary_f1(zeta.b, demo.boundaries, cfg.boundary_tolerance);
            p_sum += te.boundary->precision;
            r_sum += te.boundary->recall;
            f_sum += te.boundary->f1;
            ++rep.labeled_count;
            for (std::size_t t = 0; t < zeta.length(); ++t) {
                if (zeta.b[t] == 1) {
                    z_points.push_back(zeta.z[t]);
                    z_labels.push_back(demo.labels[t]);
                }
            }
        }
        rep.mse_teacher_forced += te.mse_teacher_forced;
        rep.mse_open_loop += te.mse_open_loop;
        rep.trajectories.push_back(std::move(te));
    }
    const double n = static_cast<double>(data.size());
    rep.mse_teacher_forced /= n;
    rep.mse_open_loop /= n;
    if (rep.labeled_count > 0) {
        const double m = static_cast<double>(rep.labeled_count);
        rep.precision = p_sum / m;
        rep.recall = r_sum / m;
        rep.f1 = f_sum / m;
        if (z_points.size() >= cfg.clusters) {
            rep.purity = cluster_purity(z_points, z_labels, cfg.clusters, cfg.seed, cfg.kmeans_iters);
        } else {
            std::cerr << "warning: " << z_points.size() << " switch points, fewer than " << cfg.clusters
                      << " clusters; purity not computed\n";
        }
    }
    return rep;
}

void save_eval_report(const EvalReport& report, const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& echo) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["trajectory_count"] = report.trajectories.size();
    j["labeled_count"] = report.labeled_count;
    j["switch_count"] = report.switch_count;
    j["recon_mse_teacher_forced"] = report.mse_teacher_forced;
    j["recon_mse_open_loop"] = report.mse_open_loop;
    j["boundary_tolerance"] = report.config.boundary_tolerance;
    j["boundary_precision"] = opt(report.precision);
    j["boundary_recall"] = opt(report.recall);
    j["boundary_f1"] = opt(report.f1);
    j["clusters"] = report.config.clusters;
    j["cluster_purity"] = opt(report.purity);
    json per = json::array();
    for (const auto& t : report.trajectories) {
        json row = {{"index", t.index},
                    {"recon_mse_teacher_forced", t.mse_teacher_forced},
                    {"recon_mse_open_loop", t.mse_open_loop},
                    {"switches", t.switches}};
        if (t.boundary) {
            row["boundary_precision"] = t.boundary->precision;
            row["boundary_recall"] = t.boundary->recall;
            row["boundary_f1"] = t.boundary->f1;
        }
        per.push_back(row);
    }
    j["per_trajectory"] = per;
    json cfg = json::object();
    for (const auto& [k, v] : echo) cfg[k] = v;
    j["config"] = cfg;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace ovi
