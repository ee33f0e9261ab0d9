#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "ovi/corpus.hpp"
#include "ovi/errors.hpp"
#include "ovi/eval.hpp"
#include "ovi/rollout.hpp"

using namespace ovi;

namespace {

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

Trajectory line(std::size_t T, double offset) {
    std::vector<std::vector<double>> s, a;
    for (std::size_t t = 0; t < T; ++t) {
        s.push_back({static_cast<double>(t) + offset, offset});
        a.push_back({1.0, 0.0});
    }
    return make_trajectory(s, a);
}

} // namespace

TEST_CASE("recon_mse") {
    auto a = line(5, 0.0);
    CHECK(recon_mse(a, a) == 0.0);
    auto b = line(5, 0.3);
    CHECK(recon_mse(a, b) == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(recon_mse(a, b) == recon_mse(b, a));
    CHECK_THROWS_AS(recon_mse(a, line(4, 0.0)), InputError);
}

TEST_CASE("boundary F1") {
    const std::vector<std::size_t> gt{0, 5, 12};
    SUBCASE("exact") {
        std::vector<int> b(20, 0);
        b[0] = b[5] = b[12] = 1;
        auto s = boundary_f1(b, gt, 2);
        CHECK(s.f1 == 1.0);
        CHECK(s.truth == 2);
    }
    SUBCASE("none predicted") {
        std::vector<int> b(20, 0);
        b[0] = 1;
        CHECK(boundary_f1(b, gt, 2).f1 == 0.0);
    }
    SUBCASE("shifted by one") {
        std::vector<int> b(20, 0);
        b[0] = b[6] = b[11] = 1;
        CHECK(boundary_f1(b, gt, 2).f1 == 1.0);
        CHECK(boundary_f1(b, gt, 0).f1 == 0.0);
    }
    SUBCASE("both empty") {
        std::vector<int> b(10, 0);
        b[0] = 1;
        CHECK(boundary_f1(b, std::vector<std::size_t>{0}, 2).f1 == 1.0);
    }
    SUBCASE("predictions without truth") {
        std::vector<int> b(10, 1);
        CHECK(boundary_f1(b, std::vector<std::size_t>{0}, 2).f1 == 0.0);
    }
    SUBCASE("one-to-one matching") {
        std::vector<int> b(20, 0);
        b[0] = b[4] = b[5] = b[6] = 1;
        auto s = boundary_f1(b, gt, 2);
        CHECK(s.matched == 1);
        CHECK(s.predicted == 3);
        CHECK(s.precision == doctest::Approx(1.0 / 3.0));
        CHECK(s.recall == doctest::Approx(0.5));
        CHECK(s.f1 == doctest::Approx(0.4));
    }
}

TEST_CASE("kmeans") {
    Points pts{{0, 0}, {0.1, 0}, {10, 10}, {10, 10.1}};
    auto r = kmeans(pts, 2, 0);
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
    CHECK(cluster_purity(pts, std::vector<int>{0, 0, 1, 1}, 2) == 1.0);

    auto full = kmeans(pts, 4, 0);
    CHECK(full.objective_history.back() == 0.0);

    Rng rng(1);
    Points cloud;
    for (int i = 0; i < 200; ++i) cloud.push_back(test::random_vector(3, rng, -5, 5));
    auto a = kmeans(cloud, 5, 42), b = kmeans(cloud, 5, 42);
    CHECK(a.assignments == b.assignments);
    for (std::size_t i = 1; i < a.objective_history.size(); ++i)
        CHECK(a.objective_history[i] <= a.objective_history[i - 1] + 1e-9);
    CHECK_THROWS_AS(kmeans(pts, 5, 0), InputError);
}

TEST_CASE("duplicate points still fill every cluster") {
    Points pts{{1, 1}, {1, 1}, {1, 1}, {2, 2}};
    auto r = kmeans(pts, 3, 0);
    CHECK(r.assignments.size() == 4);
    CHECK(r.centroids.size() == 3);
}

TEST_CASE("cluster purity") {
    Rng rng(2);
    Points z;
    std::vector<int> constant, random;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 60; ++i) {
        z.push_back(test::random_vector(2, rng));
        constant.push_back(7);
        random.push_back(static_cast<int>(rng.uniform_int(0, 2)));
        ++counts[random.back()];
    }
    CHECK(cluster_purity(z, constant, 4) == 1.0);
    CHECK(cluster_purity(z, random, 1) ==
          doctest::Approx(*std::max_element(counts.begin(), counts.end()) / 60.0));
    CHECK_THROWS_AS(cluster_purity(Points{{0.0}, {1.0}}, std::vector<int>{0, 1}, 3), InputError);
}

TEST_CASE("pca2 preserves distances of centered 2-D data") {
    Rng rng(3);
    Points pts;
    for (int i = 0; i < 30; ++i) pts.push_back(test::random_vector(2, rng));
    double mx = 0, my = 0;
    for (auto& p : pts) {
        mx += p[0] / 30;
        my += p[1] / 30;
    }
    for (auto& p : pts) {
        p[0] -= mx;
        p[1] -= my;
    }
    auto proj = pca2(pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j)
            CHECK(std::abs(dist(proj[i], proj[j]) - std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1])) < 1e-9);
}

TEST_CASE("pca2 of collinear points has a vanishing second coordinate") {
    Points pts;
    for (int i = 0; i < 10; ++i) pts.push_back({1.0 * i, 2.0 * i, -1.0 * i});
    for (const auto& p : pca2(pts)) CHECK(std::abs(p[1]) < 1e-9);
}

TEST_CASE("pca2 projected variance equals the top two eigenvalues") {
    Rng rng(4);
    Points pts;
    for (int i = 0; i < 50; ++i) {
        auto x = test::random_vector(5, rng);
        x[1] += 2.0 * x[0];
        x[3] *= 3.0;
        pts.push_back(x);
    }
    const std::size_t n = pts.size(), d = 5;
    std::vector<double> mean(d, 0.0);
    for (const auto& p : pts)
        for (std::size_t k = 0; k < d; ++k) mean[k] += p[k] / n;
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& p : pts)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1);
    auto ev = jacobi_eigenvalues(cov);
    double projected = 0.0;
    for (const auto& q : pca2(pts)) projected += (q[0] * q[0] + q[1] * q[1]) / (n - 1);
    CHECK(projected == doctest::Approx(ev[0] + ev[1]).epsilon(1e-10));
}

TEST_CASE("pca2 of identical points is all zeros") {
    Points pts(5, std::vector<double>{1.0, 2.0, 3.0});
    for (const auto& p : pca2(pts)) {
        CHECK(p[0] == 0.0);
        CHECK(p[1] == 0.0);
    }
}

namespace {

Dataset small_labeled() {
    CorpusSpec spec;
    spec.demo_count = 12;
    auto data = generate_corpus(spec);
    normalize(data, compute_stats(data));
    return data;
}

} // namespace

TEST_CASE("latent export") {
    auto data = small_labeled();
    PolicyTriple triple(test::small_dims(3), test::small_net(1, 6), 0);
    auto rows = collect_latents(data, triple);
    std::size_t switches = 0;
    for (const auto& d : data.demos) {
        auto zeta = infer_zeta(d.traj, triple);
        switches += std::accumulate(zeta.b.begin(), zeta.b.end(), std::size_t{0});
    }
    CHECK(rows.size() == switches);

    auto dir = std::filesystem::temp_directory_path() / "ovi_unit";
    std::filesystem::create_directories(dir);
    export_latents(data, triple, dir / "a.csv");
    export_latents(data, triple, dir / "b.csv");
    std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
    std::string header, la, lb;
    std::getline(a, header);
    CHECK(header == "demo_index,switch_timestep,gt_primitive_label,z_0,z_1,z_2,pca_x,pca_y");
    std::getline(b, lb);
    std::size_t count = 0;
    while (std::getline(a, la)) {
        std::getline(b, lb);
        CHECK(la == lb);
        ++count;
    }
    CHECK(count == switches);
}

TEST_CASE("evaluate reports metrics in range without touching parameters") {
    auto data = small_labeled();
    PolicyTriple triple(test::small_dims(3), test::small_net(1, 6), 0);
    const ParamStore q = triple.q_params, pi = triple.pi_params;
    EvalConfig cfg;
    cfg.clusters = 2;
    auto rep = evaluate(data, triple, normalized_integration_dynamics(*data.stats), cfg);
    CHECK(triple.q_params == q);
    CHECK(triple.pi_params == pi);
    CHECK(rep.trajectories.size() == data.size());
    CHECK(rep.mse_teacher_forced >= 0.0);
    REQUIRE(rep.f1.has_value());
    CHECK(*rep.f1 >= 0.0);
    CHECK(*rep.f1 <= 1.0);
    double mean = 0.0;
    for (const auto& t : rep.trajectories) mean += t.mse_teacher_forced / rep.trajectories.size();
    CHECK(rep.mse_teacher_forced == doctest::Approx(mean).epsilon(1e-12));
    CHECK(rep.labeled_count == data.size());
}
