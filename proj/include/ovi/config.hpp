#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/param_store.hpp"

namespace ovi {

/// Flat key/value settings read from a TOML-compatible subset:
/// `[section]` headers, `key = value` lines, `#` comments. Keys are stored as
/// `section.key`. Values keep their textual form (quotes stripped).
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies a `key=value` override.
    void set_assignment(const std::string& assignment);
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::optional<std::string> get_string(const std::string& key) const;
    std::optional<double> get_double(const std::string& key) const;
    std::optional<std::int64_t> get_int(const std::string& key) const;
    std::optional<bool> get_bool(const std::string& key) const;

    /// Throws ConfigError naming the first key of one of `sections` that is
    /// not listed in `known`. Keys of other sections are ignored.
    void reject_unknown(const std::vector<std::string>& sections, const std::vector<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

/// Every knob of a training run. Defaults are the desk-scale configuration.
struct TrainConfig {
    double lr = 1e-4;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    std::size_t latent_dim = 64;
    NetConfig net = NetConfig::desk();
    double epsilon_initial = 0.3;
    double epsilon_final = 0.05;
    std::size_t epsilon_decay_epochs = 30;
    double w_eta_initial = 0.01;
    double w_eta_final = 1.0;
    std::size_t w_eta_switch_epoch = 5;
    double w_ent = 0.01;
    double baseline_decay = 0.99;
    double clip_norm = 10.0;

    std::size_t pretrain_epochs = 20;
    double pretrain_lr = 1e-4;
    double pretrain_beta = 0.01;
    std::size_t segment_min = 5;
    std::size_t segment_max = 10;
    bool warm_start_q = false;

    std::size_t eval_batch = 32;
    std::uint64_t eval_seed = 12345;

    static TrainConfig paper_preset();

    void validate() const;
    AdamConfig adam() const;
    AdamConfig pretrain_adam() const;
    /// Ordered key/value echo (same keys as the config file, `train.` prefix omitted).
    std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Keys under `[corpus]`.
CorpusSpec corpus_spec_from(const KeyValueConfig& cfg);
/// Keys under `[train]`; `train.preset = "paper"` starts from the paper preset.
TrainConfig train_config_from(const KeyValueConfig& cfg);
TrainConfig train_config_from_entries(const std::map<std::string, std::string>& entries);

/// Evaluation settings under `[eval]`.
struct EvalConfig {
    std::size_t boundary_tolerance = 2;
    std::size_t clusters = 4;
    std::uint64_t seed = 0;
    std::size_t kmeans_iters = 100;
};
EvalConfig eval_config_from(const KeyValueConfig& cfg);

/// Split settings under `[data]`.
struct DataConfig {
    std::size_t test_count = 100;
    std::uint64_t split_seed = 0;
    std::size_t downsample = 1;
};
DataConfig data_config_from(const KeyValueConfig& cfg);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

} // namespace ovi
