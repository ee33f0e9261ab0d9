#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "ovi/checkpoint.hpp"
#include "ovi/config.hpp"
#include "ovi/corpus.hpp"
#include "ovi/errors.hpp"
#include "ovi/trainer.hpp"

using namespace ovi;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.latent_dim = 2;
    cfg.net = {1, 6};
    cfg.epochs = 3;
    cfg.lr = 1e-3;
    cfg.w_eta_switch_epoch = 1;
    cfg.eval_batch = 4;
    return cfg;
}

Dataset tiny_data(std::size_t count = 10) {
    CorpusSpec spec;
    spec.demo_count = count;
    spec.seed = 1;
    auto data = generate_corpus(spec);
    normalize(data, compute_stats(data));
    return data;
}

Dims dims_for(const TrainConfig& cfg) { return {2, 2, cfg.latent_dim, 0}; }

fs::path temp_path(const std::string& name) {
    auto dir = fs::temp_directory_path() / "ovi_unit";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Checkpoint capture(const PolicyTriple& triple, const TrainState& state, const TrainConfig& cfg) {
    Checkpoint ck;
    ck.epoch = state.epoch;
    ck.dims = triple.dims();
    ck.net = triple.net_config();
    ck.config = cfg.entries();
    ck.rng_state = state.rng.state();
    ck.baseline = state.baseline;
    ck.stores = {triple.q_params, triple.pi_params, triple.eta_params};
    return ck;
}

void restore(PolicyTriple& triple, TrainState& state, const Checkpoint& ck) {
    restore_store(triple.q_params, *ck.find_store("q"));
    restore_store(triple.pi_params, *ck.find_store("pi"));
    restore_store(triple.eta_params, *ck.find_store("eta"));
    state.epoch = ck.epoch;
    state.baseline = ck.baseline;
    state.rng.set_state(ck.rng_state);
}

} // namespace

TEST_CASE("epsilon schedule") {
    TrainConfig cfg;
    CHECK(epsilon_at(cfg, 0) == 0.3);
    CHECK(epsilon_at(cfg, 15) == doctest::Approx(0.175).epsilon(1e-15));
    CHECK(epsilon_at(cfg, 30) == 0.05);
    CHECK(epsilon_at(cfg, 100) == 0.05);
    for (std::size_t e = 1; e < 30; ++e) CHECK(epsilon_at(cfg, e) < epsilon_at(cfg, e - 1));
}

TEST_CASE("option-likelihood weight schedule") {
    TrainConfig cfg;
    cfg.w_eta_switch_epoch = 5;
    for (std::size_t e = 0; e < 5; ++e) CHECK(w_eta_at(cfg, e) == 0.01);
    for (std::size_t e = 5; e < 50; ++e) CHECK(w_eta_at(cfg, e) == 1.0);
    cfg.w_eta_switch_epoch = 0;
    CHECK(w_eta_at(cfg, 0) == 1.0);
    CHECK(weights_at(cfg, 0).w_ent == cfg.w_ent);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.epsilon_final = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(TrainConfig{}.validate());
    CHECK(TrainConfig::paper_preset().net.layers == 8);
    CHECK(TrainConfig::paper_preset().net.hidden == 128);
}

TEST_CASE("single iteration on a T=5 toy") {
    auto cfg = tiny_config();
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    Rng rng(1);
    auto traj = test::random_trajectory(5, 2, 2, rng);
    std::optional<double> baseline;
    auto br = train_iteration(traj, triple, cfg, 0, rng, baseline);
    CHECK(std::isfinite(br.J_weighted));
    REQUIRE(baseline.has_value());
    CHECK(*baseline == br.J_weighted);
    CHECK(triple.q_params.step() == 1);
    CHECK(triple.pi_params.step() == 1);
    CHECK(triple.eta_params.step() == 1);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto cfg = tiny_config();
    cfg.lr = 0.0;
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    const PolicyTriple before(dims_for(cfg), cfg.net, 0);
    Rng rng(2);
    auto traj = test::random_trajectory(5, 2, 2, rng);
    std::optional<double> baseline;
    auto br = train_iteration(traj, triple, cfg, 0, rng, baseline);
    CHECK(std::isfinite(br.J_weighted));
    CHECK(triple.q_params.flat_values() == before.q_params.flat_values());
    CHECK(triple.pi_params.flat_values() == before.pi_params.flat_values());
    CHECK(triple.eta_params.flat_values() == before.eta_params.flat_values());
}

TEST_CASE("training is bitwise deterministic") {
    auto cfg = tiny_config();
    auto data = tiny_data();
    PolicyTriple a(dims_for(cfg), cfg.net, 0), b(dims_for(cfg), cfg.net, 0);
    auto sa = initial_train_state(cfg), sb = initial_train_state(cfg);
    auto ma = run_training(data, a, sa, cfg);
    auto mb = run_training(data, b, sb, cfg);
    CHECK(ma == mb);
    CHECK(a.q_params == b.q_params);
    CHECK(a.eta_params == b.eta_params);
}

TEST_CASE("one epoch on ten demos gives one row and ten steps") {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    auto data = tiny_data(10);
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    auto state = initial_train_state(cfg);
    std::size_t callbacks = 0;
    auto rows = run_training(data, triple, state, cfg, [&](const EpochMetrics& m, const TrainState& s) {
        ++callbacks;
        CHECK(m.epoch == 1);
        CHECK(s.epoch == 1);
    });
    CHECK(rows.size() == 1);
    CHECK(callbacks == 1);
    CHECK(triple.pi_params.step() == 10);
    CHECK(rows[0].epsilon == 0.3);
    CHECK(rows[0].w_eta == 0.01);
}

TEST_CASE("metrics rows") {
    EpochMetrics m{3, -1.5, 0.25, 1e-20, 7.0, 0.3, 1.0, -2.0};
    CHECK(format_metrics_row(m) == "3,-1.5,0.25,9.9999999999999995e-21,7,0.29999999999999999,1,-2");
    auto path = temp_path("metrics.csv");
    {
        MetricsCsv csv(path, {{"lr", "0.0001"}});
        csv.append(m);
    }
    std::ifstream in(path);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    CHECK(l1 == "# lr = 0.0001");
    CHECK(l2 == kMetricsHeader);
    CHECK(l3 == format_metrics_row(m));
}

TEST_CASE("checkpoint round trip is bitwise") {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    auto data = tiny_data();
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    auto state = initial_train_state(cfg);
    run_training(data, triple, state, cfg);
    auto ck = capture(triple, state, cfg);
    ck.stats = data.stats;
    auto p1 = temp_path("a.ckpt"), p2 = temp_path("b.ckpt");
    save_checkpoint(ck, p1);
    auto loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
    CHECK(loaded.stores[0] == triple.q_params);
    CHECK(loaded.stores[2] == triple.eta_params);
    CHECK(loaded.rng_state == state.rng.state());
    CHECK(loaded.baseline == state.baseline);
    CHECK(loaded.stats == data.stats);
    CHECK(loaded.config == cfg.entries());
}

TEST_CASE("corrupted checkpoints are rejected") {
    auto cfg = tiny_config();
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    auto ck = capture(triple, initial_train_state(cfg), cfg);
    auto good = temp_path("good.ckpt");
    save_checkpoint(ck, good);
    const std::string bytes = read_bytes(good);
    auto write = [](const fs::path& p, const std::string& s) {
        std::ofstream out(p, std::ios::binary);
        out << s;
    };
    auto bad = temp_path("bad.ckpt");

    write(bad, bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    write(bad, bytes + "12345678");
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    write(bad, "NOT-A-CHECKPOINT\n" + bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    std::string versioned = bytes;
    const auto pos = versioned.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    versioned.replace(pos, 18, "\"format_version\":9");
    write(bad, versioned);
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), Error);
}

TEST_CASE("restore_store rejects shape disagreement without partial state") {
    ParamStore a("s"), b("s");
    a.add("w", RealArray::vector({1, 2}));
    a.add("v", RealArray::vector({3}));
    b.add("w", RealArray::vector({5, 6}));
    b.add("v", RealArray::vector({7, 8}));
    const ParamStore before = a;
    CHECK_THROWS_AS(restore_store(a, b), CheckpointError);
    CHECK(a == before);
}

TEST_CASE("interrupted and resumed training equals an uninterrupted run") {
    auto cfg = tiny_config();
    cfg.epochs = 3;
    auto data = tiny_data();

    PolicyTriple full(dims_for(cfg), cfg.net, 0);
    auto full_state = initial_train_state(cfg);
    auto full_rows = run_training(data, full, full_state, cfg);

    PolicyTriple first(dims_for(cfg), cfg.net, 0);
    auto first_state = initial_train_state(cfg);
    auto short_cfg = cfg;
    short_cfg.epochs = 1;
    auto rows = run_training(data, first, first_state, short_cfg);
    auto path = temp_path("resume.ckpt");
    save_checkpoint(capture(first, first_state, cfg), path);

    PolicyTriple resumed(dims_for(cfg), cfg.net, 99);
    auto resumed_state = initial_train_state(cfg);
    restore(resumed, resumed_state, load_checkpoint(path));
    auto rest = run_training(data, resumed, resumed_state, cfg);
    rows.insert(rows.end(), rest.begin(), rest.end());

    CHECK(rows == full_rows);
    CHECK(resumed.q_params == full.q_params);
    CHECK(resumed.pi_params == full.pi_params);
    CHECK(resumed.eta_params == full.eta_params);
}

TEST_CASE("eval objective is reproducible and independent of training state") {
    auto cfg = tiny_config();
    auto data = tiny_data();
    PolicyTriple triple(dims_for(cfg), cfg.net, 0);
    const double a = eval_objective(data, triple, cfg);
    const double b = eval_objective(data, triple, cfg);
    CHECK(a == b);
    CHECK(std::isfinite(a));
}
