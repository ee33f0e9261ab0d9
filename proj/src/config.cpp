#include "ovi/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include "ovi/errors.hpp"

namespace ovi {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Drops a trailing `#` comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

std::size_t to_size(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
    auto v = cfg.get_int(key);
    if (!v) return fallback;
    if (*v < 0) throw ConfigError(key + " must be nonnegative");
    return static_cast<std::size_t>(*v);
}

std::uint64_t to_u64(const KeyValueConfig& cfg, const std::string& key, std::uint64_t fallback) {
    auto v = cfg.get_int(key);
    if (!v) return fallback;
    if (*v < 0) throw ConfigError(key + " must be nonnegative");
    return static_cast<std::uint64_t>(*v);
}

double to_double(const KeyValueConfig& cfg, const std::string& key, double fallback) {
    auto v = cfg.get_double(key);
    return v ? *v : fallback;
}

const std::vector<std::string> kTrainKeys = {
    "preset",          "lr",           "epochs",         "seed",          "latent_dim",
    "layers",          "hidden",       "epsilon_initial", "epsilon_final", "epsilon_decay_epochs",
    "w_eta_initial",   "w_eta_final",  "w_eta_switch_epoch", "w_ent",     "baseline_decay",
    "clip_norm",       "pretrain_epochs", "pretrain_lr", "pretrain_beta", "segment_min",
    "segment_max",     "warm_start_q", "eval_batch",     "eval_seed"};

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected `key = value`");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unquote(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override `" + assignment + "` is not key=value");
    values_[trim(assignment.substr(0, eq))] = unquote(trim(assignment.substr(eq + 1)));
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s->c_str(), &end);
    if (s->empty() || end != s->c_str() + s->size() || errno == ERANGE) {
        throw ConfigError(key + ": `" + *s + "` is not a number");
    }
    return v;
}

std::optional<std::int64_t> KeyValueConfig::get_int(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s->c_str(), &end, 10);
    if (s->empty() || end != s->c_str() + s->size() || errno == ERANGE) {
        throw ConfigError(key + ": `" + *s + "` is not an integer");
    }
    return static_cast<std::int64_t>(v);
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    if (*s == "true") return true;
    if (*s == "false") return false;
    throw ConfigError(key + ": `" + *s + "` is not true/false");
}

void KeyValueConfig::reject_unknown(const std::vector<std::string>& sections,
                                    const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_) {
        const std::string section = k.substr(0, k.find('.'));
        if (std::find(sections.begin(), sections.end(), section) == sections.end()) continue;
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key `" + k + "`");
    }
}

std::string format_double(double v) { return nlohmann::json(v).dump(); }

TrainConfig TrainConfig::paper_preset() {
    TrainConfig c;
    c.net = NetConfig::paper();
    return c;
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (!(pretrain_lr >= 0.0)) throw ConfigError("train.pretrain_lr must be >= 0");
    if (latent_dim == 0) throw ConfigError("train.latent_dim must be positive");
    if (net.layers == 0) throw ConfigError("train.layers must be positive");
    if (net.hidden == 0) throw ConfigError("train.hidden must be positive");
    if (epsilon_initial < 0.0 || epsilon_initial > 1.0) throw ConfigError("train.epsilon_initial must lie in [0, 1]");
    if (epsilon_final < 0.0 || epsilon_final > epsilon_initial) {
        throw ConfigError("train.epsilon_final must lie in [0, epsilon_initial]");
    }
    if (w_eta_initial < 0.0 || w_eta_final < 0.0) throw ConfigError("train.w_eta_* must be nonnegative");
    if (w_ent < 0.0) throw ConfigError("train.w_ent must be nonnegative");
    if (baseline_decay < 0.0 || baseline_decay >= 1.0) throw ConfigError("train.baseline_decay must lie in [0, 1)");
    if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
    if (pretrain_beta < 0.0) throw ConfigError("train.pretrain_beta must be nonnegative");
    if (segment_min < 2 || segment_min > segment_max) {
        throw ConfigError("train.segment_min/segment_max must satisfy 2 <= min <= max");
    }
}

AdamConfig TrainConfig::adam() const {
    AdamConfig a;
    a.lr = lr;
    return a;
}

AdamConfig TrainConfig::pretrain_adam() const {
    AdamConfig a;
    a.lr = pretrain_lr;
    return a;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"lr", format_double(lr)},
        {"epochs", std::to_string(epochs)},
        {"seed", std::to_string(seed)},
        {"latent_dim", std::to_string(latent_dim)},
        {"layers", std::to_string(net.layers)},
        {"hidden", std::to_string(net.hidden)},
        {"epsilon_initial", format_double(epsilon_initial)},
        {"epsilon_final", format_double(epsilon_final)},
        {"epsilon_decay_epochs", std::to_string(epsilon_decay_epochs)},
        {"w_eta_initial", format_double(w_eta_initial)},
        {"w_eta_final", format_double(w_eta_final)},
        {"w_eta_switch_epoch", std::to_string(w_eta_switch_epoch)},
        {"w_ent", format_double(w_ent)},
        {"baseline_decay", format_double(baseline_decay)},
        {"clip_norm", format_double(clip_norm)},
        {"pretrain_epochs", std::to_string(pretrain_epochs)},
        {"pretrain_lr", format_double(pretrain_lr)},
        {"pretrain_beta", format_double(pretrain_beta)},
        {"segment_min", std::to_string(segment_min)},
        {"segment_max", std::to_string(segment_max)},
        {"warm_start_q", b(warm_start_q)},
        {"eval_batch", std::to_string(eval_batch)},
        {"eval_seed", std::to_string(eval_seed)},
    };
}

TrainConfig train_config_from_entries(const std::map<std::string, std::string>& entries) {
    KeyValueConfig cfg;
    for (const auto& [k, v] : entries) cfg.set("train." + k, v);
    return train_config_from(cfg);
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
    TrainConfig c;
    if (auto preset = cfg.get_string("train.preset")) {
        if (*preset == "paper") {
            c = TrainConfig::paper_preset();
        } else if (*preset != "desk") {
            throw ConfigError("train.preset must be \"desk\" or \"paper\", got \"" + *preset + "\"");
        }
    }
    for (const auto& [k, v] : cfg.values()) {
        if (k.rfind("train.", 0) != 0) continue;
        const std::string name = k.substr(6);
        if (std::find(kTrainKeys.begin(), kTrainKeys.end(), name) == kTrainKeys.end()) {
            throw ConfigError("unknown config key `" + k + "`");
        }
    }
    c.lr = to_double(cfg, "train.lr", c.lr);
    c.epochs = to_size(cfg, "train.epochs", c.epochs);
    c.seed = to_u64(cfg, "train.seed", c.seed);
    c.latent_dim = to_size(cfg, "train.latent_dim", c.latent_dim);
    c.net.layers = to_size(cfg, "train.layers", c.net.layers);
    c.net.hidden = to_size(cfg, "train.hidden", c.net.hidden);
    c.epsilon_initial = to_double(cfg, "train.epsilon_initial", c.epsilon_initial);
    c.epsilon_final = to_double(cfg, "train.epsilon_final", c.epsilon_final);
    c.epsilon_decay_epochs = to_size(cfg, "train.epsilon_decay_epochs", c.epsilon_decay_epochs);
    c.w_eta_initial = to_double(cfg, "train.w_eta_initial", c.w_eta_initial);
    c.w_eta_final = to_double(cfg, "train.w_eta_final", c.w_eta_final);
    c.w_eta_switch_epoch = to_size(cfg, "train.w_eta_switch_epoch", c.w_eta_switch_epoch);
    c.w_ent = to_double(cfg, "train.w_ent", c.w_ent);
    c.baseline_decay = to_double(cfg, "train.baseline_decay", c.baseline_decay);
    c.clip_norm = to_double(cfg, "train.clip_norm", c.clip_norm);
    c.pretrain_epochs = to_size(cfg, "train.pretrain_epochs", c.pretrain_epochs);
    c.pretrain_lr = to_double(cfg, "train.pretrain_lr", c.pretrain_lr);
    c.pretrain_beta = to_double(cfg, "train.pretrain_beta", c.pretrain_beta);
    c.segment_min = to_size(cfg, "train.segment_min", c.segment_min);
    c.segment_max = to_size(cfg, "train.segment_max", c.segment_max);
    if (auto w = cfg.get_bool("train.warm_start_q")) c.warm_start_q = *w;
    c.eval_batch = to_size(cfg, "train.eval_batch", c.eval_batch);
    c.eval_seed = to_u64(cfg, "train.eval_seed", c.eval_seed);
    c.validate();
    return c;
}

CorpusSpec corpus_spec_from(const KeyValueConfig& cfg) {
    CorpusSpec s;
    if (auto k = cfg.get_int("corpus.primitives")) s.primitives = static_cast<int>(*k);
    s.dim = to_size(cfg, "corpus.dim", s.dim);
    s.segments_min = to_size(cfg, "corpus.segments_min", s.segments_min);
    s.segments_max = to_size(cfg, "corpus.segments_max", s.segments_max);
    s.segment_length_min = to_size(cfg, "corpus.segment_length_min", s.segment_length_min);
    s.segment_length_max = to_size(cfg, "corpus.segment_length_max", s.segment_length_max);
    s.action_noise_sigma = to_double(cfg, "corpus.action_noise_sigma", s.action_noise_sigma);
    s.demo_count = to_size(cfg, "corpus.demo_count", s.demo_count);
    s.seed = to_u64(cfg, "corpus.seed", s.seed);
    s.validate();
    return s;
}

EvalConfig eval_config_from(const KeyValueConfig& cfg) {
    EvalConfig e;
    e.boundary_tolerance = to_size(cfg, "eval.boundary_tolerance", e.boundary_tolerance);
    e.clusters = to_size(cfg, "eval.clusters", e.clusters);
    e.seed = to_u64(cfg, "eval.seed", e.seed);
    e.kmeans_iters = to_size(cfg, "eval.kmeans_iters", e.kmeans_iters);
    if (e.clusters == 0) throw ConfigError("eval.clusters must be positive");
    return e;
}

DataConfig data_config_from(const KeyValueConfig& cfg) {
    DataConfig d;
    d.test_count = to_size(cfg, "data.test_count", d.test_count);
    d.split_seed = to_u64(cfg, "data.split_seed", d.split_seed);
    d.downsample = to_size(cfg, "data.downsample", d.downsample);
    if (d.downsample == 0) throw ConfigError("data.downsample must be >= 1");
    return d;
}

} // namespace ovi
