#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ovi/corpus.hpp"
#include "ovi/errors.hpp"
#include "ovi/finite_diff.hpp"
#include "ovi/pretrain.hpp"

using namespace ovi;

namespace {

Dataset fixed_length_corpus(std::size_t count, std::size_t segments = 3, double sigma = 0.05) {
    CorpusSpec spec;
    spec.demo_count = count;
    spec.segments_min = spec.segments_max = segments;
    spec.segment_length_min = spec.segment_length_max = 15 / segments;
    spec.action_noise_sigma = sigma;
    return generate_corpus(spec);
}

} // namespace

TEST_CASE("kl_to_standard_normal closed forms") {
    Tape tape;
    auto v = [&](std::vector<double> x) { return tape.constant(std::move(x)); };
    CHECK(kl_to_standard_normal(v({0.0}), v({1.0})).scalar() == 0.0);
    CHECK(kl_to_standard_normal(v({1.5}), v({1.0})).scalar() == doctest::Approx(1.125));
    CHECK(kl_to_standard_normal(v({0.0}), v({4.0})).scalar() == doctest::Approx(0.806853).epsilon(1e-6));
    CHECK_THROWS_AS(kl_to_standard_normal(v({0.0}), v({0.0})), DomainError);
    CHECK(kl_to_standard_normal_value(std::vector<double>{0.3, -0.2}, std::vector<double>{0.5, 2.0}) ==
          doctest::Approx(kl_to_standard_normal(v({0.3, -0.2}), v({0.5, 2.0})).scalar()).epsilon(1e-15));
}

TEST_CASE("kl is nonnegative and its gradient matches finite differences") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        auto mu = test::random_vector(3, rng, -2, 2);
        auto var = test::random_vector(3, rng, 0.1, 3);
        CHECK(kl_to_standard_normal_value(mu, var) >= 0.0);
        Tape tape;
        Var m = tape.input(RealArray::vector(mu));
        Var s = tape.input(RealArray::vector(var));
        tape.backward(kl_to_standard_normal(m, s));
        std::vector<double> both = mu;
        both.insert(both.end(), var.begin(), var.end());
        auto numeric = finite_diff_grad(
            [](const std::vector<double>& x) {
                return kl_to_standard_normal_value(std::span(x).first(3), std::span(x).subspan(3));
            },
            both);
        auto analytic = tape.grad(m);
        auto gs = tape.grad(s);
        analytic.insert(analytic.end(), gs.begin(), gs.end());
        CHECK(max_relative_error(analytic, numeric, 1e-4) < 1e-6);
    }
}

TEST_CASE("sample_segment") {
    auto data = fixed_length_corpus(10);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        auto seg = sample_segment(data, 5, 5, rng);
        CHECK(seg.length() == 5);
        CHECK(integration_consistent(seg));
    }
    Rng a(3), b(3);
    CHECK(sample_segment(data, 5, 10, a) == sample_segment(data, 5, 10, b));
    CHECK_THROWS_AS(sample_segment(data, 5, 16, rng), InputError);
    CHECK_THROWS_AS(sample_segment(data, 1, 5, rng), InputError);
    CHECK_THROWS_AS(sample_segment(data, 6, 5, rng), InputError);
}

TEST_CASE("segment starts cover the whole range") {
    auto data = fixed_length_corpus(1);
    Rng rng(4);
    std::vector<int> seen(11, 0);
    const auto& full = data.demos[0].traj;
    for (int i = 0; i < 2000; ++i) {
        auto seg = sample_segment(data, 5, 5, rng);
        for (std::size_t s = 0; s <= 10; ++s)
            if (slice_trajectory(full, s, 5) == seg) ++seen[s];
    }
    for (int c : seen) CHECK(c > 0);
}

TEST_CASE("beta = 0 gives the negative action log-likelihood") {
    auto data = fixed_length_corpus(2);
    Rng rng(5);
    const Dims d{2, 2, 3, 0};
    PolicyTriple triple(d, test::small_net(1, 6), 5);
    SegmentEncoder enc(d, test::small_net(1, 6), 5);
    auto seg = sample_segment(data, 4, 4, rng);
    const std::vector<double> eps{0.1, -0.3, 0.8};
    auto br = vae_step(seg, enc, triple, 0.0, eps);
    CHECK(br.loss == -br.log_pi);
    CHECK(std::isfinite(br.loss));
    auto br2 = vae_step(seg, enc, triple, 0.5, eps);
    CHECK(br2.loss == doctest::Approx(-br2.log_pi + 0.5 * br2.kl).epsilon(1e-14));
}

TEST_CASE("vae gradients match finite differences") {
    auto data = fixed_length_corpus(3);
    Rng rng(6);
    const Dims d{2, 2, 2, 0};
    PolicyTriple triple(d, test::small_net(1, 4), 6);
    SegmentEncoder enc(d, test::small_net(1, 4), 6);
    for (int trial = 0; trial < 5; ++trial) {
        auto seg = sample_segment(data, 4, 4, rng);
        auto eps = test::random_vector(2, rng);
        vae_step(seg, enc, triple, 0.01, eps);
        auto analytic = enc.params.flat_grads();
        auto pg = triple.pi_params.flat_grads();
        analytic.insert(analytic.end(), pg.begin(), pg.end());
        ParamStore* stores[] = {&enc.params, &triple.pi_params};
        auto numeric = finite_diff_grad([&] { return vae_loss(seg, enc, triple, 0.01, eps); }, std::span(stores));
        CHECK(max_relative_error(analytic, numeric, 1e-4) < 1e-5);
    }
}

TEST_CASE("pretraining improves action likelihood and leaves eta alone") {
    auto data = fixed_length_corpus(100, 1, 0.0);
    const Dims d{2, 2, 4, 0};
    PolicyTriple triple(d, test::small_net(1, 16), 7);
    SegmentEncoder enc(d, test::small_net(1, 16), 7);
    const ParamStore eta_before = triple.eta_params;
    PretrainConfig cfg;
    cfg.adam.lr = 1e-3;
    Rng rng(7);
    std::vector<PretrainEpoch> history;
    for (std::size_t e = 0; e < 5; ++e) history.push_back(pretrain_epoch(data, enc, triple, cfg, e, rng));
    CHECK(history.back().mean_log_pi > history.front().mean_log_pi);
    CHECK(triple.eta_params == eta_before);
    CHECK(triple.pi_params.step() == 500);
}

TEST_CASE("warm start copies the encoder into q") {
    const Dims d{2, 2, 3, 0};
    PolicyTriple triple(d, test::small_net(2, 5), 8);
    SegmentEncoder enc(d, test::small_net(2, 5), 9);
    const auto copied = warm_start_q(triple, enc);
    CHECK(copied == enc.params.size());
    for (std::size_t i = 0; i < enc.params.size(); ++i) {
        const auto& e = enc.params.entry(i);
        auto id = triple.q_params.find(e.name);
        REQUIRE(id.has_value());
        CHECK(triple.q_params.value(*id) == e.value);
    }
}
