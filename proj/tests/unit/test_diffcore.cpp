#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "ovi/errors.hpp"
#include "ovi/finite_diff.hpp"
#include "ovi/param_store.hpp"
#include "ovi/tape.hpp"

using namespace ovi;

namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Gradcheck of `f` over parameters of the given shapes, 100 random draws.
/// Returns the worst relative error between tape and central differences.
double gradcheck(const Fn& f, const std::vector<Shape>& shapes, std::uint64_t seed, double lo = -1.0,
                 double hi = 1.0) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        ParamStore store("g");
        for (std::size_t i = 0; i < shapes.size(); ++i)
            store.add("p" + std::to_string(i), RealArray(shapes[i], test::random_vector(shape_size(shapes[i]), rng, lo, hi)));
        auto eval = [&] {
            Tape tape;
            return f(tape, tape.bind(store)).scalar();
        };
        store.zero_grad();
        {
            Tape tape;
            tape.backward(f(tape, tape.bind(store)));
        }
        auto analytic = store.flat_grads();
        auto numeric = finite_diff_grad(eval, store);
        worst = std::max(worst, max_relative_error(analytic, numeric, 1e-4));
    }
    return worst;
}

} // namespace

TEST_CASE("affine evaluates xW + b") {
    Tape tape;
    Var x = tape.constant(std::vector<double>{1, 0});
    Var W = tape.constant(RealArray::identity(2));
    Var b = tape.constant(std::vector<double>{0, 0});
    auto y = affine(x, W, b).value();
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);

    Var x2 = tape.constant(std::vector<double>{1, 1});
    Var W2 = tape.constant(RealArray::matrix(2, 2, {2, 0, 0, 3}));
    Var b2 = tape.constant(std::vector<double>{1, -1});
    auto y2 = affine(x2, W2, b2).value();
    CHECK(y2[0] == 3.0);
    CHECK(y2[1] == 2.0);
}

TEST_CASE("affine bias gradient of sum is all ones") {
    Tape tape;
    Var x = tape.constant(std::vector<double>{0.3, -0.2});
    Var W = tape.constant(RealArray::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = tape.input(RealArray::vector({0.1, 0.2, 0.3}));
    tape.backward(sum(affine(x, W, b)));
    for (double g : tape.grad(b)) CHECK(g == 1.0);
}

TEST_CASE("affine shape mismatch names operands") {
    Tape tape;
    Var x = tape.constant(std::vector<double>{1, 2, 3});
    Var W = tape.constant(RealArray::identity(2));
    Var b = tape.constant(std::vector<double>{0, 0});
    CHECK_THROWS_AS(affine(x, W, b), DimensionError);
}

TEST_CASE("activation values") {
    Tape tape;
    CHECK(activation(tape.constant(std::vector<double>{0.0}), Activation::softplus).scalar() ==
          doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(activation(tape.constant(std::vector<double>{0.0}), Activation::sigmoid).scalar() == 0.5);
    CHECK(std::abs(activation(tape.constant(std::vector<double>{40.0}), Activation::tanh).scalar() - 1.0) < 1e-9);
    CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
    CHECK(parse_activation("softplus") == Activation::softplus);
}

TEST_CASE("softplus output is strictly positive for finite inputs") {
    for (double x : {-1000.0, -745.0, -50.0, -1.0, 0.0, 1.0, 50.0, 1000.0}) CHECK(softplus_value(x) > 0.0);
}

TEST_CASE("gaussian_log_prob closed forms") {
    Tape tape;
    auto c = [&](double v) { return tape.constant(std::vector<double>{v}); };
    CHECK(gaussian_log_prob(c(0), c(0), c(1)).scalar() == doctest::Approx(-0.9189385).epsilon(1e-7));
    CHECK(gaussian_log_prob(c(1), c(1), c(4)).scalar() == doctest::Approx(-1.6120857).epsilon(1e-7));
    CHECK(gaussian_log_prob(c(2), c(0), c(1)).scalar() == doctest::Approx(-2.9189385).epsilon(1e-7));
    CHECK_THROWS_AS(gaussian_log_prob(c(0), c(0), c(0)), DomainError);
    CHECK_THROWS_AS(gaussian_log_prob(c(0), c(0), c(-1)), DomainError);
}

TEST_CASE("bernoulli_log_prob values and clamp") {
    Tape tape;
    auto c = [&](double v) { return tape.constant(std::vector<double>{v}); };
    CHECK(bernoulli_log_prob(1, c(0.5)).scalar() == doctest::Approx(-0.693147).epsilon(1e-6));
    CHECK(bernoulli_log_prob(0, c(0.25)).scalar() == doctest::Approx(-0.287682).epsilon(1e-6));
    CHECK(bernoulli_log_prob(1, c(1.0)).scalar() == doctest::Approx(-1e-6).epsilon(1e-3));
    CHECK(std::isfinite(bernoulli_log_prob(0, c(1.0)).scalar()));
    CHECK_THROWS_AS(bernoulli_log_prob(2, c(0.5)), DomainError);
}

TEST_CASE("reparameterize") {
    Tape tape;
    Var mu = tape.input(RealArray::vector({1, 2}));
    Var var = tape.input(RealArray::vector({4, 9}));
    const std::vector<double> eps{0.5, -1};
    auto z = reparameterize(mu, var, eps).value();
    CHECK(z[0] == 2.0);
    CHECK(z[1] == -1.0);

    const std::vector<double> zero{0.0, 0.0};
    Var z0 = reparameterize(mu, var, zero);
    CHECK(z0.value()[0] == 1.0);
    CHECK(z0.value()[1] == 2.0);

    tape.backward(sum(reparameterize(mu, var, eps)));
    for (double g : tape.grad(mu)) CHECK(g == 1.0);

    Var bad = tape.constant(std::vector<double>{-1.0, 1.0});
    CHECK_THROWS_AS(reparameterize(mu, bad, eps), DomainError);
}

TEST_CASE("reparameterize with zero noise returns mu bitwise") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        Tape tape;
        auto m = test::random_vector(5, rng, -10, 10);
        auto v = test::random_vector(5, rng, 1e-3, 10);
        Var z = reparameterize(tape.constant(m), tape.constant(v), std::vector<double>(5, 0.0));
        for (std::size_t k = 0; k < 5; ++k) CHECK(z.value()[k] == m[k]);
    }
}

TEST_CASE("backward of gaussian mean and of constants") {
    ParamStore store("s");
    auto w = store.add("w", RealArray::vector({0.0}));
    {
        Tape tape;
        Var x = tape.constant(std::vector<double>{1.0});
        Var var = tape.constant(std::vector<double>{1.0});
        tape.backward(gaussian_log_prob(x, tape.param(store, w), var));
        CHECK(store.grad(w)[0] == doctest::Approx(1.0));
    }
    store.zero_grad();
    {
        Tape tape;
        tape.param(store, w);
        tape.backward(tape.constant(std::vector<double>{3.0}));
        CHECK(store.grad(w)[0] == 0.0);
    }
}

TEST_CASE("backward reports the kernel that produced a non-finite value") {
    Tape tape;
    Var x = tape.constant(std::vector<double>{1e300});
    try {
        mul(x, x);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("mul") != std::string::npos);
    }
}

TEST_CASE("kernel gradchecks over 100 random inputs") {
    using V = const std::vector<Var>&;
    SUBCASE("affine") {
        Fn f = [](Tape&, V p) { return sum(activation(affine(p[0], p[1], p[2]), Activation::tanh)); };
        CHECK(gradcheck(f, {{3}, {3, 2}, {2}}, 1) < 1e-6);
    }
    SUBCASE("activations") {
        for (auto kind : {Activation::tanh, Activation::sigmoid, Activation::softplus}) {
            Fn f = [kind](Tape&, V p) { return sum(mul(activation(p[0], kind), p[0])); };
            CHECK(gradcheck(f, {{4}}, 2, -3, 3) < 1e-6);
        }
    }
    SUBCASE("elementwise arithmetic") {
        Fn f = [](Tape&, V p) { return sum(mul(add(p[0], scale(p[1], 2.0)), add_constant(sub(p[0], p[1]), 0.5))); };
        CHECK(gradcheck(f, {{3}, {3}}, 3) < 1e-6);
    }
    SUBCASE("concat, add_n, softmax") {
        Fn f = [](Tape&, V p) {
            const Var parts[] = {p[1], p[0]};
            Var s = softmax(concat(parts));
            const Var terms[] = {slice(s, 0, 1), scale(slice(s, 3, 1), 3.0), slice(p[0], 1, 1)};
            return add_n(terms);
        };
        CHECK(gradcheck(f, {{2}, {2}}, 4, -2, 2) < 1e-6);
    }
    SUBCASE("gaussian_log_prob") {
        Fn f = [](Tape&, V p) { return gaussian_log_prob(p[0], p[1], activation(p[2], Activation::softplus)); };
        CHECK(gradcheck(f, {{3}, {3}, {3}}, 5) < 1e-6);
    }
    SUBCASE("bernoulli_log_prob") {
        for (int b : {0, 1}) {
            Fn f = [b](Tape&, V p) { return bernoulli_log_prob(b, activation(p[0], Activation::sigmoid)); };
            CHECK(gradcheck(f, {{1}}, 6, -3, 3) < 1e-6);
        }
    }
    SUBCASE("reparameterize") {
        const std::vector<double> eps{0.3, -1.2, 0.7};
        Fn f = [&eps](Tape&, V p) {
            Var z = reparameterize(p[0], activation(p[1], Activation::softplus), eps);
            return sum(mul(z, z));
        };
        CHECK(gradcheck(f, {{3}, {3}}, 7) < 1e-6);
    }
}

TEST_CASE("lstm cell gradcheck over 100 random instances") {
    Rng rng(8);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        ParamStore store("cell");
        LstmCell cell = make_lstm_cell(store, "c", 3, 4, rng);
        auto x = store.add("x", RealArray::vector(test::random_vector(3, rng)));
        auto s0 = store.add("s0", RealArray::vector(test::random_vector(8, rng)));
        auto f = [&](Tape& tape) {
            Var st = cell_step(tape, store, cell, tape.param(store, x), tape.param(store, s0));
            st = cell_step(tape, store, cell, tape.param(store, x), st);
            return sum(mul(st, st));
        };
        store.zero_grad();
        {
            Tape tape;
            tape.backward(f(tape));
        }
        auto analytic = store.flat_grads();
        auto numeric = finite_diff_grad(
            [&] {
                Tape tape;
                return f(tape).scalar();
            },
            store);
        worst = std::max(worst, max_relative_error(analytic, numeric, 1e-4));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("random two-layer network matches finite differences") {
    Rng rng(11);
    ParamStore store("net");
    auto w1 = store.add("w1", RealArray::matrix(3, 4, test::random_vector(12, rng)));
    auto b1 = store.add("b1", RealArray::vector(test::random_vector(4, rng)));
    auto w2 = store.add("w2", RealArray::matrix(4, 2, test::random_vector(8, rng)));
    auto b2 = store.add("b2", RealArray::vector(test::random_vector(2, rng)));
    const std::vector<double> x{0.2, -0.5, 0.9};
    auto f = [&](Tape& tape) {
        Var h = activation(affine(tape.constant(x), tape.param(store, w1), tape.param(store, b1)), Activation::tanh);
        Var y = affine(h, tape.param(store, w2), tape.param(store, b2));
        return gaussian_log_prob(tape.constant(std::vector<double>{0.1, 0.4}), y,
                                 tape.constant(std::vector<double>{0.5, 2.0}));
    };
    Tape tape;
    store.zero_grad();
    tape.backward(f(tape));
    auto analytic = store.flat_grads();
    auto numeric = finite_diff_grad(
        [&] {
            Tape t;
            return f(t).scalar();
        },
        store);
    CHECK(max_relative_error(analytic, numeric, 1e-4) < 1e-6);
}

TEST_CASE("parameters off the path receive exact zero") {
    ParamStore store("s");
    auto a = store.add("a", RealArray::vector({1.0, 2.0}));
    auto b = store.add("b", RealArray::vector({3.0}));
    Tape tape;
    Var va = tape.param(store, a);
    tape.param(store, b);
    tape.backward(sum(mul(va, va)));
    CHECK(store.grad(b)[0] == 0.0);
    CHECK(store.grad(a)[1] == 4.0);
}

TEST_CASE("finite_diff_grad examples") {
    auto g = finite_diff_grad([](const std::vector<double>& w) { return w[0] * w[0]; }, std::vector<double>{3.0});
    CHECK(std::abs(g[0] - 6.0) < 1e-8);
    auto z = finite_diff_grad([](const std::vector<double>&) { return 7.0; }, std::vector<double>{1.0, 2.0});
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient leaves values unchanged") {
        ParamStore s("s");
        auto id = s.add("w", RealArray::vector({0.5, -2.0}));
        const auto before = s.value(id);
        for (int i = 0; i < 5; ++i) adam_step(s, AdamConfig{});
        CHECK(s.value(id) == before);
        CHECK(s.step() == 5);
    }
    SUBCASE("first step moves by about lr against the gradient sign") {
        ParamStore s("s");
        auto id = s.add("w", RealArray::vector({1.0, 1.0}));
        s.grad(id)[0] = 3.7;
        s.grad(id)[1] = -0.02;
        AdamConfig cfg;
        cfg.lr = 0.01;
        adam_step(s, cfg);
        CHECK(std::abs((s.value(id)[0] - 1.0) + cfg.lr) < cfg.lr * 1e-3);
        CHECK(std::abs((s.value(id)[1] - 1.0) - cfg.lr) < cfg.lr * 1e-3);
    }
    SUBCASE("identical stores stay bitwise identical") {
        ParamStore a("s"), b("s");
        Rng ra(5), rb(5);
        auto ia = a.add("w", RealArray::vector(test::random_vector(4, ra)));
        auto ib = b.add("w", RealArray::vector(test::random_vector(4, rb)));
        for (int step = 0; step < 50; ++step) {
            auto g = test::random_vector(4, ra);
            test::random_vector(4, rb);
            for (std::size_t k = 0; k < 4; ++k) a.grad(ia)[k] = b.grad(ib)[k] = g[k];
            adam_step(a, AdamConfig{});
            adam_step(b, AdamConfig{});
        }
        CHECK(a == b);
    }
}

TEST_CASE("gradient clipping rescales to the maximum norm") {
    ParamStore s("s");
    auto id = s.add("w", RealArray::vector({0, 0}));
    s.grad(id)[0] = 30.0;
    s.grad(id)[1] = 40.0;
    CHECK(s.clip_grad_norm(10.0) == doctest::Approx(50.0));
    CHECK(s.grad_norm() == doctest::Approx(10.0));
    CHECK(s.clip_grad_norm(10.0) == doctest::Approx(10.0));
}
