#include "ovi/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ovi/checkpoint.hpp"
#include "ovi/config.hpp"
#include "ovi/corpus.hpp"
#include "ovi/errors.hpp"
#include "ovi/eval.hpp"
#include "ovi/pretrain.hpp"
#include "ovi/rollout.hpp"
#include "ovi/trainer.hpp"

namespace ovi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string fnv1a_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "";
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// manifest.json for one command invocation, rewritten when the command finishes.
class RunManifest {
public:
    RunManifest(fs::path dir, std::string command, const KeyValueConfig& cfg, std::uint64_t seed) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        j_["command"] = std::move(command);
        json c = json::object();
        for (const auto& [k, v] : cfg.values()) c[k] = v;
        j_["config"] = c;
        j_["seed"] = seed;
        j_["inputs"] = json::object();
        j_["outputs"] = json::object();
        j_["started_at"] = utc_now();
        j_["status"] = "running";
        write();
    }
    void input(const std::string& key, const fs::path& p) { j_["inputs"][key] = p.string(); }
    void output(const fs::path& p) { outputs_.push_back(p); }
    void finish() {
        for (const auto& p : outputs_) j_["outputs"][p.filename().string()] = {{"path", p.string()}, {"fnv1a64", fnv1a_file(p)}};
        j_["finished_at"] = utc_now();
        j_["status"] = "complete";
        write();
    }

private:
    void write() {
        std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir_ / "manifest.json").string());
        out << j_.dump(2) << '\n';
    }
    fs::path dir_;
    json j_;
    std::vector<fs::path> outputs_;
};

struct LoadedData {
    Dataset data;
    NormalizationStats stats;
    fs::path file;
};

/// `path` is a gen-data output directory (reads `<split>.jsonl`) or a single
/// .jsonl file. Statistics come from `stats` when given, else from a sibling
/// stats.json, else from the data itself.
LoadedData load_data(const fs::path& path, const std::string& split_name,
                     const std::optional<NormalizationStats>& stats) {
    if (!fs::exists(path)) throw IoError("data path " + path.string() + " does not exist");
    LoadedData d;
    d.file = fs::is_directory(path) ? path / (split_name + ".jsonl") : path;
    if (!fs::exists(d.file)) throw IoError("data file " + d.file.string() + " does not exist");
    d.data = load_jsonl(d.file);
    if (d.data.empty()) throw InputError("data file " + d.file.string() + " holds no trajectories");
    const fs::path sidecar = d.file.parent_path() / "stats.json";
    if (stats) {
        d.stats = *stats;
    } else if (fs::exists(sidecar)) {
        d.stats = load_stats(sidecar);
    } else {
        std::cerr << "warning: no stats.json next to " << d.file.string() << "; computing statistics from it\n";
        d.stats = compute_stats(d.data);
    }
    const auto& first = d.data.demos.front().traj;
    if (d.stats.state_mean.size() != first.state_dim() || d.stats.action_mean.size() != first.action_dim()) {
        throw DimensionError("expected state/action dims " + std::to_string(d.stats.state_mean.size()) + "/" +
                             std::to_string(d.stats.action_mean.size()) + ", data has " +
                             std::to_string(first.state_dim()) + "/" + std::to_string(first.action_dim()));
    }
    d.data.split = split_name;
    normalize(d.data, d.stats);
    return d;
}

KeyValueConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                              const std::vector<std::pair<std::string, std::string>>& base_train = {}) {
    KeyValueConfig cfg;
    for (const auto& [k, v] : base_train) cfg.set("train." + k, v);
    if (!config_path.empty()) {
        const KeyValueConfig file = KeyValueConfig::load(config_path);
        for (const auto& [k, v] : file.values()) cfg.set(k, v);
    }
    for (const auto& o : overrides) cfg.set_assignment(o);
    return cfg;
}

void check_dims(const Dims& expected, const Trajectory& traj) {
    if (traj.state_dim() != expected.state || traj.action_dim() != expected.action) {
        throw DimensionError("checkpoint expects state/action dims " + std::to_string(expected.state) + "/" +
                             std::to_string(expected.action) + ", data has " + std::to_string(traj.state_dim()) +
                             "/" + std::to_string(traj.action_dim()));
    }
}

Dims dims_for(const Dataset& data, const TrainConfig& cfg) {
    const auto& t = data.demos.front().traj;
    return {t.state_dim(), t.action_dim(), cfg.latent_dim, 0};
}

Checkpoint snapshot(const std::string& kind, std::size_t epoch, PolicyTriple& triple, const TrainConfig& cfg,
                    const std::string& rng_state, std::optional<double> baseline, const NormalizationStats& stats,
                    const SegmentEncoder* encoder) {
    Checkpoint ck;
    ck.kind = kind;
    ck.epoch = epoch;
    ck.dims = triple.dims();
    ck.net = triple.net_config();
    ck.config = cfg.entries();
    ck.rng_state = rng_state;
    ck.baseline = baseline;
    ck.stats = stats;
    ck.stores = {triple.q_params, triple.pi_params, triple.eta_params};
    if (encoder) ck.stores.push_back(encoder->params);
    return ck;
}

void restore_triple(PolicyTriple& triple, const Checkpoint& ck, bool with_moments) {
    for (ParamStore* store : {&triple.q_params, &triple.pi_params, &triple.eta_params}) {
        const ParamStore* src = ck.find_store(store->name());
        if (!src) throw CheckpointError("checkpoint lacks parameter store " + store->name());
        if (with_moments) {
            restore_store(*store, *src);
        } else {
            ParamStore values_only = *src;
            for (std::size_t i = 0; i < values_only.size(); ++i) {
                values_only.entry(i).first_moment.fill(0.0);
                values_only.entry(i).second_moment.fill(0.0);
            }
            values_only.set_step(0);
            restore_store(*store, values_only);
        }
    }
}

struct LoadedModel {
    Checkpoint ckpt;
    std::unique_ptr<PolicyTriple> triple;
};

LoadedModel load_model(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("checkpoint " + path.string() + " does not exist");
    LoadedModel m;
    m.ckpt = load_checkpoint(path);
    m.triple = std::make_unique<PolicyTriple>(m.ckpt.dims, m.ckpt.net, 0);
    restore_triple(*m.triple, m.ckpt, true);
    return m;
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& overrides, const fs::path& out) {
    const KeyValueConfig cfg = resolve_config(config_path, overrides);
    cfg.reject_unknown({"corpus", "data"}, {"corpus.primitives", "corpus.dim", "corpus.segments_min", "corpus.segments_max",
                        "corpus.segment_length_min", "corpus.segment_length_max", "corpus.action_noise_sigma",
                        "corpus.demo_count", "corpus.seed", "data.test_count", "data.split_seed", "data.downsample"});
    const CorpusSpec spec = corpus_spec_from(cfg);
    const DataConfig dc = data_config_from(cfg);
    RunManifest manifest(out, "gen-data", cfg, spec.seed);
    if (!config_path.empty()) manifest.input("config", config_path);
    Dataset all = generate_corpus(spec);
    if (dc.downsample > 1) {
        for (auto& d : all.demos) d = downsample(d, dc.downsample);
    }
    auto [train, test] = split(all, dc.test_count, dc.split_seed);
    const NormalizationStats stats = compute_stats(train);
    save_jsonl(train, out / "train.jsonl");
    save_jsonl(test, out / "test.jsonl");
    save_stats(stats, out / "stats.json");
    for (const char* f : {"train.jsonl", "test.jsonl", "stats.json"}) manifest.output(out / f);
    manifest.finish();
    std::cout << "wrote " << train.size() << " train and " << test.size() << " test trajectories to " << out.string()
              << "\n";
    return 0;
}

int cmd_pretrain(const fs::path& data_path, const std::string& config_path, const std::vector<std::string>& overrides,
                 const fs::path& out) {
    const KeyValueConfig kv = resolve_config(config_path, overrides);
    const TrainConfig cfg = train_config_from(kv);
    RunManifest manifest(out, "pretrain", kv, cfg.seed);
    manifest.input("data", data_path);
    LoadedData d = load_data(data_path, "train", std::nullopt);
    PolicyTriple triple(dims_for(d.data, cfg), cfg.net, cfg.seed);
    SegmentEncoder encoder(triple.dims(), cfg.net, cfg.seed);
    PretrainConfig pc;
    pc.epochs = cfg.pretrain_epochs;
    pc.segment_min = cfg.segment_min;
    pc.segment_max = cfg.segment_max;
    pc.beta = cfg.pretrain_beta;
    pc.adam = cfg.pretrain_adam();
    pc.clip_norm = cfg.clip_norm;
    Rng rng(cfg.seed, 5);
    auto echo = cfg.entries();
    MetricsCsv metrics(out / "pretrain_metrics.csv", echo, "epoch,mean_loss,mean_log_pi,mean_kl");
    for (std::size_t e = 0; e < pc.epochs; ++e) {
        auto m = pretrain_epoch(d.data, encoder, triple, pc, e + 1, rng);
        char row[256];
        std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,%.17g", m.epoch, m.mean_loss, m.mean_log_pi, m.mean_kl);
        metrics.append_line(row);
        std::cout << "pretrain epoch " << m.epoch << " loss " << m.mean_loss << "\n";
    }
    if (cfg.warm_start_q) warm_start_q(triple, encoder);
    save_checkpoint(snapshot("pretrain", 0, triple, cfg, rng.state(), std::nullopt, d.stats, &encoder),
                    out / "pretrain.ckpt");
    manifest.output(out / "pretrain_metrics.csv");
    manifest.output(out / "pretrain.ckpt");
    manifest.finish();
    return 0;
}

int cmd_train(const fs::path& data_path, const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& init, bool cold_start, const fs::path& out) {
    if (init.empty() && !cold_start) {
        throw ConfigError("train requires --init <checkpoint> from pretrain; training from scratch tends to diverge. "
                          "Pass --cold-start to train without pretraining anyway.");
    }
    std::optional<Checkpoint> ck;
    if (!init.empty()) {
        if (!fs::exists(init)) throw IoError("checkpoint " + init + " does not exist");
        ck = load_checkpoint(init);
    }
    // A resumed run starts from the checkpoint's configuration.
    const KeyValueConfig kv = resolve_config(config_path, overrides,
                                             ck && ck->kind == "train" ? ck->config
                                                                       : std::vector<std::pair<std::string, std::string>>{});
    const TrainConfig cfg = train_config_from(kv);
    RunManifest manifest(out, "train", kv, cfg.seed);
    manifest.input("data", data_path);
    if (ck) manifest.input("init", init);
    LoadedData d = load_data(data_path, "train", ck ? ck->stats : std::nullopt);
    const Dims dims = ck ? ck->dims : dims_for(d.data, cfg);
    check_dims(dims, d.data.demos.front().traj);
    if (ck && (ck->net.layers != cfg.net.layers || ck->net.hidden != cfg.net.hidden || ck->dims.latent != cfg.latent_dim)) {
        throw DimensionError("checkpoint architecture " + std::to_string(ck->net.layers) + "x" +
                             std::to_string(ck->net.hidden) + " d_z=" + std::to_string(ck->dims.latent) +
                             " differs from config " + std::to_string(cfg.net.layers) + "x" +
                             std::to_string(cfg.net.hidden) + " d_z=" + std::to_string(cfg.latent_dim));
    }
    PolicyTriple triple(dims, cfg.net, cfg.seed);
    TrainState state = initial_train_state(cfg);
    if (ck) {
        const bool resume = ck->kind == "train";
        restore_triple(triple, *ck, resume);
        if (resume) {
            state.epoch = ck->epoch;
            state.baseline = ck->baseline;
            state.rng.set_state(ck->rng_state);
        }
    }
    auto echo = cfg.entries();
    MetricsCsv metrics(out / "metrics.csv", echo);
    manifest.output(out / "metrics.csv");
    run_training(d.data, triple, state, cfg, [&](const EpochMetrics& m, const TrainState& s) {
        metrics.append(m);
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", s.epoch);
        const auto snap = snapshot("train", s.epoch, triple, cfg, s.rng.state(), s.baseline, d.stats, nullptr);
        save_checkpoint(snap, out / name);
        save_checkpoint(snap, out / "last.ckpt");
        std::cout << "epoch " << m.epoch << " mean_J " << m.mean_J << " eval_J " << m.eval_J << "\n";
    });
    if (fs::exists(out / "last.ckpt")) manifest.output(out / "last.ckpt");
    manifest.finish();
    return 0;
}

int cmd_eval(const fs::path& data_path, const fs::path& ckpt_path, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& split_name, const fs::path& out) {
    const KeyValueConfig kv = resolve_config(config_path, overrides);
    const EvalConfig ec = eval_config_from(kv);
    RunManifest manifest(out, "eval", kv, ec.seed);
    manifest.input("data", data_path);
    manifest.input("ckpt", ckpt_path);
    LoadedModel model = load_model(ckpt_path);
    LoadedData d = load_data(data_path, split_name, model.ckpt.stats);
    check_dims(model.ckpt.dims, d.data.demos.front().traj);
    const EvalReport rep = evaluate(d.data, *model.triple, normalized_integration_dynamics(d.stats), ec);
    save_eval_report(rep, out / "eval_report.json", model.ckpt.config);
    manifest.output(out / "eval_report.json");
    manifest.finish();
    std::cout << "recon_mse_teacher_forced " << rep.mse_teacher_forced << "\n";
    return 0;
}

int cmd_rollout(const fs::path& ckpt_path, std::size_t steps, const std::string& mode_name, std::size_t count,
                std::uint64_t seed, const fs::path& out) {
    const RolloutMode mode = parse_rollout_mode(mode_name);
    if (steps == 0) throw ConfigError("--steps must be >= 1");
    KeyValueConfig kv;
    kv.set("rollout.steps", std::to_string(steps));
    kv.set("rollout.mode", mode_name);
    kv.set("rollout.count", std::to_string(count));
    RunManifest manifest(out, "rollout", kv, seed);
    manifest.input("ckpt", ckpt_path);
    LoadedModel model = load_model(ckpt_path);
    const Dims& dims = model.ckpt.dims;
    const NormalizationStats stats = model.ckpt.stats.value_or(NormalizationStats{
        std::vector<double>(dims.state, 0.0), std::vector<double>(dims.state, 1.0),
        std::vector<double>(dims.action, 0.0), std::vector<double>(dims.action, 1.0)});
    const Dynamics dyn = normalized_integration_dynamics(stats);
    std::vector<double> s1(dims.state);
    for (std::size_t i = 0; i < dims.state; ++i) s1[i] = -stats.state_mean[i] / stats.state_scale[i];
    std::vector<Rollout> rollouts;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(seed, i);
        Rollout r = generate(*model.triple, dyn, s1, steps, mode, rng);
        r.traj = denormalize(r.traj, stats);
        rollouts.push_back(std::move(r));
    }
    save_rollouts_jsonl(rollouts, out / "rollouts.jsonl");
    manifest.output(out / "rollouts.jsonl");
    manifest.finish();
    return 0;
}

int cmd_export_latents(const fs::path& data_path, const fs::path& ckpt_path, const std::string& split_name,
                       const fs::path& out) {
    KeyValueConfig kv;
    RunManifest manifest(out, "export-latents", kv, 0);
    manifest.input("data", data_path);
    manifest.input("ckpt", ckpt_path);
    LoadedModel model = load_model(ckpt_path);
    LoadedData d = load_data(data_path, split_name, model.ckpt.stats);
    check_dims(model.ckpt.dims, d.data.demos.front().traj);
    export_latents(d.data, *model.triple, out / "latents.csv");
    manifest.output(out / "latents.csv");
    manifest.finish();
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Option discovery from demonstrations via temporal variational inference", "ovi"};
    app.require_subcommand(1);

    std::string config, data, out, init, ckpt, mode = "greedy", split_name;
    std::vector<std::string> overrides;
    bool cold_start = false;
    std::size_t steps = 50, count = 1;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic skill-segmented corpus");
    gen->add_option("--config", config, "Config file");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--set", overrides, "Override key=value");

    auto* pre = app.add_subcommand("pretrain", "Pretrain the low-level policy as a segment VAE");
    pre->add_option("--data", data, "Data directory or .jsonl file")->required();
    pre->add_option("--config", config, "Config file");
    pre->add_option("--out", out, "Output directory")->required();
    pre->add_option("--set", overrides, "Override key=value");

    auto* train = app.add_subcommand("train", "Joint training of q, pi and eta");
    train->add_option("--data", data, "Data directory or .jsonl file")->required();
    train->add_option("--config", config, "Config file");
    train->add_option("--init", init, "Pretrain or train checkpoint to start from");
    train->add_flag("--cold-start", cold_start, "Allow training without a pretrained checkpoint");
    train->add_option("--out", out, "Output directory")->required();
    train->add_option("--set", overrides, "Override key=value");

    auto* ev = app.add_subcommand("eval", "Reconstruction, segmentation and clustering metrics");
    ev->add_option("--data", data, "Data directory or .jsonl file")->required();
    ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
    ev->add_option("--config", config, "Config file");
    ev->add_option("--split", split_name, "Split to read from a data directory")->default_val("test");
    ev->add_option("--out", out, "Output directory")->required();
    ev->add_option("--set", overrides, "Override key=value");

    auto* ro = app.add_subcommand("rollout", "Generate trajectories with the learned policies");
    ro->add_option("--ckpt", ckpt, "Checkpoint")->required();
    ro->add_option("--steps", steps, "Rollout length")->default_val(50);
    ro->add_option("--mode", mode, "greedy or stochastic")->default_val("greedy");
    ro->add_option("--count", count, "Number of rollouts")->default_val(1);
    ro->add_option("--seed", seed, "Random seed")->default_val(0);
    ro->add_option("--out", out, "Output directory")->required();

    auto* ex = app.add_subcommand("export-latents", "Export switch-step latents with a 2-D projection");
    ex->add_option("--data", data, "Data directory or .jsonl file")->required();
    ex->add_option("--ckpt", ckpt, "Checkpoint")->required();
    ex->add_option("--split", split_name, "Split to read from a data directory")->default_val("test");
    ex->add_option("--out", out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(config, overrides, out);
        if (*pre) return cmd_pretrain(data, config, overrides, out);
        if (*train) return cmd_train(data, config, overrides, init, cold_start, out);
        if (*ev) return cmd_eval(data, ckpt, config, overrides, split_name, out);
        if (*ro) return cmd_rollout(ckpt, steps, mode, count, seed, out);
        if (*ex) return cmd_export_latents(data, ckpt, split_name, out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace ovi
