#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ovi/cli.hpp"

using namespace ovi;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "ovi_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string p(const std::string& name) { return (root() / name).string(); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        if (!l.empty() && l[0] != '#') out.push_back(l);
    return out;
}

std::size_t count_lines(const fs::path& path) { return lines_of(path).size(); }

const std::string& tiny_config() {
    static const std::string path = [] {
        std::ofstream out(root() / "tiny.toml");
        out << "[corpus]\ndemo_count = 24\nseed = 2\n"
               "[data]\ntest_count = 6\n"
               "[train]\nlatent_dim = 2\nlayers = 1\nhidden = 8\nepochs = 2\npretrain_epochs = 2\nlr = 0.001\n"
               "eval_batch = 4\n"
               "[eval]\nclusters = 2\n";
        return (root() / "tiny.toml").string();
    }();
    return path;
}

void ensure_data() {
    static bool done = false;
    if (done) return;
    REQUIRE(run_cli({"gen-data", "--config", tiny_config(), "--out", p("data")}) == 0);
    done = true;
}

void ensure_pretrained() {
    static bool done = false;
    if (done) return;
    ensure_data();
    REQUIRE(run_cli({"pretrain", "--data", p("data"), "--config", tiny_config(), "--out", p("pre")}) == 0);
    done = true;
}

void ensure_trained() {
    static bool done = false;
    if (done) return;
    ensure_pretrained();
    REQUIRE(run_cli({"train", "--data", p("data"), "--config", tiny_config(), "--init", p("pre/pretrain.ckpt"), "--out",
                     p("train")}) == 0);
    done = true;
}

} // namespace

TEST_CASE("gen-data writes both splits deterministically") {
    ensure_data();
    CHECK(count_lines(root() / "data/train.jsonl") == 18);
    CHECK(count_lines(root() / "data/test.jsonl") == 6);
    CHECK(fs::exists(root() / "data/stats.json"));
    CHECK(fs::exists(root() / "data/manifest.json"));
    REQUIRE(run_cli({"gen-data", "--config", tiny_config(), "--out", p("data2")}) == 0);
    for (const char* f : {"train.jsonl", "test.jsonl", "stats.json"})
        CHECK(read_file(root() / "data" / f) == read_file(root() / "data2" / f));
}

TEST_CASE("configuration errors exit with 2") {
    CHECK(run_cli({"gen-data", "--config", tiny_config(), "--set", "corpus.primitives=1", "--out", p("bad")}) == 2);
    CHECK(run_cli({"gen-data", "--set", "corpus.segments_min=9", "--out", p("bad")}) == 2);
    CHECK(run_cli({"no-such-command"}) == 2);
}

TEST_CASE("missing inputs exit with 1") {
    CHECK(run_cli({"pretrain", "--data", p("nowhere"), "--out", p("x")}) == 1);
    CHECK(run_cli({"eval", "--data", p("data"), "--ckpt", p("nowhere.ckpt"), "--out", p("x")}) == 1);
}

TEST_CASE("train refuses a cold start unless asked") {
    ensure_data();
    CHECK(run_cli({"train", "--data", p("data"), "--config", tiny_config(), "--out", p("cold")}) == 2);
    CHECK(run_cli({"train", "--data", p("data"), "--config", tiny_config(), "--set", "train.epochs=1", "--cold-start",
                   "--out", p("cold")}) == 0);
    CHECK(count_lines(root() / "cold/metrics.csv") == 2);
}

TEST_CASE("pretrain and train produce checkpoints and metrics") {
    ensure_trained();
    CHECK(fs::exists(root() / "pre/pretrain.ckpt"));
    CHECK(count_lines(root() / "pre/pretrain_metrics.csv") == 3);
    CHECK(count_lines(root() / "train/metrics.csv") == 3);
    CHECK(lines_of(root() / "train/metrics.csv")[0] ==
          "epoch,mean_J,mean_log_pi,mean_log_eta,mean_neg_log_q,epsilon,w_eta,eval_J");
    CHECK(fs::exists(root() / "train/epoch_0001.ckpt"));
    CHECK(fs::exists(root() / "train/epoch_0002.ckpt"));
    CHECK(read_file(root() / "train/last.ckpt") == read_file(root() / "train/epoch_0002.ckpt"));
    const auto manifest = read_file(root() / "train/manifest.json");
    CHECK(manifest.find("\"status\"") != std::string::npos);
    CHECK(manifest.find("metrics.csv") != std::string::npos);
}

TEST_CASE("training reruns are byte identical") {
    ensure_trained();
    REQUIRE(run_cli({"train", "--data", p("data"), "--config", tiny_config(), "--init", p("pre/pretrain.ckpt"), "--out",
                     p("train_again")}) == 0);
    CHECK(read_file(root() / "train/metrics.csv") == read_file(root() / "train_again/metrics.csv"));
    CHECK(read_file(root() / "train/last.ckpt") == read_file(root() / "train_again/last.ckpt"));
}

TEST_CASE("resuming from an epoch checkpoint matches the uninterrupted run") {
    ensure_trained();
    REQUIRE(run_cli({"train", "--data", p("data"), "--config", tiny_config(), "--init", p("train/epoch_0001.ckpt"),
                     "--out", p("resumed")}) == 0);
    auto full = lines_of(root() / "train/metrics.csv");
    auto resumed = lines_of(root() / "resumed/metrics.csv");
    REQUIRE(resumed.size() == 2);
    CHECK(resumed.back() == full.back());
    CHECK(read_file(root() / "resumed/last.ckpt") == read_file(root() / "train/last.ckpt"));
}

TEST_CASE("eval, rollout and export") {
    ensure_trained();
    REQUIRE(run_cli({"eval", "--data", p("data"), "--ckpt", p("train/last.ckpt"), "--out", p("eval")}) == 0);
    const auto report = read_file(root() / "eval/eval_report.json");
    for (const char* key : {"recon_mse_teacher_forced", "recon_mse_open_loop", "boundary_f1", "cluster_purity"})
        CHECK(report.find(key) != std::string::npos);

    REQUIRE(run_cli({"rollout", "--ckpt", p("train/last.ckpt"), "--steps", "12", "--count", "3", "--out", p("ro1")}) == 0);
    REQUIRE(run_cli({"rollout", "--ckpt", p("train/last.ckpt"), "--steps", "12", "--count", "3", "--out", p("ro2")}) == 0);
    CHECK(count_lines(root() / "ro1/rollouts.jsonl") == 3);
    CHECK(read_file(root() / "ro1/rollouts.jsonl") == read_file(root() / "ro2/rollouts.jsonl"));
    CHECK(run_cli({"rollout", "--ckpt", p("train/last.ckpt"), "--mode", "chaotic", "--out", p("ro3")}) == 2);

    REQUIRE(run_cli({"export-latents", "--data", p("data"), "--ckpt", p("train/last.ckpt"), "--out", p("lat")}) == 0);
    const auto rows = lines_of(root() / "lat/latents.csv");
    REQUIRE(!rows.empty());
    CHECK(rows[0] == "demo_index,switch_timestep,gt_primitive_label,z_0,z_1,pca_x,pca_y");
}

TEST_CASE("dimension mismatch exits with 2") {
    ensure_trained();
    REQUIRE(run_cli({"gen-data", "--config", tiny_config(), "--set", "corpus.dim=3", "--out", p("data3d")}) == 0);
    CHECK(run_cli({"eval", "--data", p("data3d"), "--ckpt", p("train/last.ckpt"), "--out", p("eval3d")}) == 2);
    CHECK(run_cli({"eval", "--data", p("data3d/test.jsonl"), "--ckpt", p("train/last.ckpt"), "--out", p("eval3d")}) == 2);
}
