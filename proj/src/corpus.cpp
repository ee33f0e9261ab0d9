#include "ovi/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "ovi/errors.hpp"
#include "ovi/rng.hpp"

namespace ovi {

using nlohmann::json;

Trajectory make_trajectory(const std::vector<std::vector<double>>& states,
                           const std::vector<std::vector<double>>& actions, std::optional<int> task_id) {
    if (states.size() != actions.size()) {
        throw SchemaError("trajectory has " + std::to_string(states.size()) + " states but " +
                          std::to_string(actions.size()) + " actions");
    }
    const std::size_t T = states.size();
    const std::size_t ds = T ? states[0].size() : 0;
    const std::size_t da = T ? actions[0].size() : 0;
    std::vector<double> s, a;
    s.reserve(T * ds);
    a.reserve(T * da);
    for (std::size_t t = 0; t < T; ++t) {
        if (states[t].size() != ds || actions[t].size() != da) {
            throw SchemaError("ragged trajectory rows at step " + std::to_string(t));
        }
        s.insert(s.end(), states[t].begin(), states[t].end());
        a.insert(a.end(), actions[t].begin(), actions[t].end());
    }
    return Trajectory{RealArray::matrix(T, ds, std::move(s)), RealArray::matrix(T, da, std::move(a)), task_id};
}

Trajectory slice_trajectory(const Trajectory& traj, std::size_t start, std::size_t length) {
    if (start + length > traj.length()) {
        throw InputError("slice_trajectory: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds length " + std::to_string(traj.length()));
    }
    const std::size_t ds = traj.state_dim(), da = traj.action_dim();
    std::vector<double> s(traj.states.data().begin() + static_cast<std::ptrdiff_t>(start * ds),
                          traj.states.data().begin() + static_cast<std::ptrdiff_t>((start + length) * ds));
    std::vector<double> a(traj.actions.data().begin() + static_cast<std::ptrdiff_t>(start * da),
                          traj.actions.data().begin() + static_cast<std::ptrdiff_t>((start + length) * da));
    return Trajectory{RealArray::matrix(length, ds, std::move(s)), RealArray::matrix(length, da, std::move(a)),
                      traj.task_id};
}

bool satisfies_latent_invariants(const LatentSequence& zeta) {
    if (zeta.b.empty() || zeta.b[0] != 1 || zeta.z.size() != zeta.b.size()) return false;
    for (std::size_t t = 1; t < zeta.b.size(); ++t) {
        if (zeta.b[t] != 0 && zeta.b[t] != 1) return false;
        if (zeta.b[t] == 0) {
            const auto& a = zeta.z[t];
            const auto& b = zeta.z[t - 1];
            if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
                return false;
            }
        }
    }
    return true;
}

void CorpusSpec::validate() const {
    if (primitives < 2) throw ConfigError("corpus.primitives (K) must be >= 2, got " + std::to_string(primitives));
    if (dim < 2) throw ConfigError("corpus.dim must be >= 2, got " + std::to_string(dim));
    if (segments_min < 1 || segments_min > segments_max) {
        throw ConfigError("corpus.segments_min/segments_max must satisfy 1 <= min <= max");
    }
    if (segment_length_min < 1 || segment_length_min > segment_length_max) {
        throw ConfigError("corpus.segment_length_min/segment_length_max must satisfy 1 <= min <= max");
    }
    if (segments_min * segment_length_min < 2) {
        throw ConfigError("corpus.segments_min * corpus.segment_length_min must be >= 2 (trajectories need T >= 2)");
    }
    if (!(action_noise_sigma >= 0.0) || !std::isfinite(action_noise_sigma)) {
        throw ConfigError("corpus.action_noise_sigma must be finite and >= 0");
    }
    if (demo_count < 1) throw ConfigError("corpus.demo_count must be >= 1");
}

std::vector<double> primitive_direction(int primitive, int primitives, std::size_t dim) {
    std::vector<double> d(dim, 0.0);
    const double angle = 2.0 * std::numbers::pi * primitive / primitives;
    d[0] = std::cos(angle);
    d[1] = std::sin(angle);
    return d;
}

namespace {

LabeledTrajectory generate_demo(const CorpusSpec& spec, std::size_t index) {
    Rng rng(spec.seed, index);
    const auto n_segments = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(spec.segments_min), static_cast<std::int64_t>(spec.segments_max)));
    std::vector<int> labels;
    std::vector<std::size_t> boundaries;
    int previous = -1;
    for (std::size_t k = 0; k < n_segments; ++k) {
        // Consecutive segments use different primitives so every boundary is a label change.
        int j = 0;
        if (previous < 0) {
            j = static_cast<int>(rng.uniform_int(0, spec.primitives - 1));
        } else {
            j = static_cast<int>(rng.uniform_int(0, spec.primitives - 2));
            if (j >= previous) ++j;
        }
        const auto len = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(spec.segment_length_min), static_cast<std::int64_t>(spec.segment_length_max)));
        boundaries.push_back(labels.size());
        labels.insert(labels.end(), len, j);
        previous = j;
    }
    const std::size_t T = labels.size();
    const std::size_t d = spec.dim;
    std::vector<double> states(T * d, 0.0), actions(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const auto dir = primitive_direction(labels[t], spec.primitives, d);
        for (std::size_t i = 0; i < d; ++i) {
            const double noise = spec.action_noise_sigma > 0.0 ? spec.action_noise_sigma * rng.normal() : 0.0;
            actions[t * d + i] = dir[i] + noise;
        }
        if (t + 1 < T) {
            for (std::size_t i = 0; i < d; ++i) states[(t + 1) * d + i] = states[t * d + i] + actions[t * d + i];
        }
    }
    LabeledTrajectory demo;
    demo.traj = Trajectory{RealArray::matrix(T, d, std::move(states)), RealArray::matrix(T, d, std::move(actions)),
                           std::nullopt};
    demo.labels = std::move(labels);
    demo.boundaries = std::move(boundaries);
    return demo;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

} // namespace

Dataset generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.demos.resize(spec.demo_count);
    for (std::size_t i = 0; i < spec.demo_count; ++i) ds.demos[i] = generate_demo(spec, i);
    return ds;
}

Trajectory downsample(const Trajectory& traj, std::size_t factor) {
    const std::size_t T = traj.length();
    if (factor < 1) throw InputError("downsample: factor must be >= 1");
    if (factor > T) {
        throw InputError("downsample: factor " + std::to_string(factor) + " exceeds trajectory length " +
                         std::to_string(T));
    }
    if (factor == 1) return traj;
    const std::size_t Tn = (T - 1) / factor + 1;
    const std::size_t ds = traj.state_dim();
    if (traj.action_dim() != ds) {
        throw DimensionError("downsample: action dimension must equal state dimension for integration dynamics");
    }
    // State following the last kept one: a later original state, or the one implied by the final action.
    auto source_state = [&](std::size_t idx, std::size_t i) {
        if (idx < T) return traj.state(idx)[i];
        return traj.state(T - 1)[i] + traj.action(T - 1)[i];
    };
    std::vector<double> s(Tn * ds), a(Tn * ds);
    for (std::size_t i = 0; i < ds; ++i) s[i] = traj.state(0)[i];
    for (std::size_t t = 0; t < Tn; ++t) {
        const std::size_t next = std::min((t + 1) * factor, T);
        for (std::size_t i = 0; i < ds; ++i) {
            a[t * ds + i] = source_state(next, i) - source_state(t * factor, i);
            if (t + 1 < Tn) s[(t + 1) * ds + i] = s[t * ds + i] + a[t * ds + i];
        }
    }
    return Trajectory{RealArray::matrix(Tn, ds, std::move(s)), RealArray::matrix(Tn, ds, std::move(a)),
                      traj.task_id};
}

LabeledTrajectory downsample(const LabeledTrajectory& demo, std::size_t factor) {
    LabeledTrajectory out;
    out.traj = downsample(demo.traj, factor);
    if (demo.labeled()) {
        for (std::size_t t = 0; t < out.traj.length(); ++t) out.labels.push_back(demo.labels[t * factor]);
        out.boundaries = boundaries_from_labels(out.labels);
    }
    return out;
}

std::vector<std::size_t> boundaries_from_labels(const std::vector<int>& labels) {
    std::vector<std::size_t> b;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (t == 0 || labels[t] != labels[t - 1]) b.push_back(t);
    }
    return b;
}

bool integration_consistent(const Trajectory& traj) {
    if (traj.state_dim() != traj.action_dim()) return false;
    for (std::size_t t = 0; t + 1 < traj.length(); ++t) {
        for (std::size_t i = 0; i < traj.state_dim(); ++i) {
            if (traj.state(t)[i] + traj.action(t)[i] != traj.state(t + 1)[i]) return false;
        }
    }
    return true;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t test_count, std::uint64_t seed) {
    if (test_count >= dataset.size()) {
        throw InputError("split: test_count " + std::to_string(test_count) + " must be smaller than dataset size " +
                         std::to_string(dataset.size()));
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
    }
    std::vector<bool> is_test(dataset.size(), false);
    for (std::size_t k = 0; k < test_count; ++k) is_test[order[k]] = true;
    Dataset train, test;
    train.split = "train";
    test.split = "test";
    train.stats = test.stats = dataset.stats;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (is_test[i] ? test : train).demos.push_back(dataset.demos[i]);
    }
    return {std::move(train), std::move(test)};
}

NormalizationStats compute_stats(const Dataset& train) {
    if (train.empty()) throw InputError("compute_stats: empty dataset");
    const std::size_t ds = train.demos[0].traj.state_dim();
    const std::size_t da = train.demos[0].traj.action_dim();
    auto moments = [&](bool states, std::size_t d, std::vector<double>& mean, std::vector<double>& scale) {
        mean.assign(d, 0.0);
        scale.assign(d, 0.0);
        std::size_t n = 0;
        for (const auto& demo : train.demos) {
            const RealArray& m = states ? demo.traj.states : demo.traj.actions;
            if (m.dim(1) != d) throw DimensionError("compute_stats: inconsistent dimensions across demos");
            for (std::size_t t = 0; t < m.dim(0); ++t) {
                for (std::size_t i = 0; i < d; ++i) mean[i] += m.at(t, i);
            }
            n += m.dim(0);
        }
        for (double& v : mean) v /= static_cast<double>(n);
        for (const auto& demo : train.demos) {
            const RealArray& m = states ? demo.traj.states : demo.traj.actions;
            for (std::size_t t = 0; t < m.dim(0); ++t) {
                for (std::size_t i = 0; i < d; ++i) {
                    const double r = m.at(t, i) - mean[i];
                    scale[i] += r * r;
                }
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            scale[i] = std::sqrt(scale[i] / static_cast<double>(n));
            if (!(scale[i] > 1e-12)) {
                warn(std::string(states ? "state" : "action") + " dimension " + std::to_string(i) +
                     " has zero variance; scale forced to 1");
                scale[i] = 1.0;
            }
        }
    };
    NormalizationStats st;
    moments(true, ds, st.state_mean, st.state_scale);
    moments(false, da, st.action_mean, st.action_scale);
    return st;
}

namespace {

void affine_rows(RealArray& m, const std::vector<double>& mean, const std::vector<double>& scale, bool forward) {
    if (m.dim(1) != mean.size()) {
        throw DimensionError("normalization statistics have " + std::to_string(mean.size()) +
                             " dimensions, data has " + std::to_string(m.dim(1)));
    }
    for (std::size_t t = 0; t < m.dim(0); ++t) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            double& v = m.at(t, i);
            v = forward ? (v - mean[i]) / scale[i] : v * scale[i] + mean[i];
        }
    }
}

} // namespace

Trajectory normalize(const Trajectory& traj, const NormalizationStats& stats) {
    Trajectory out = traj;
    affine_rows(out.states, stats.state_mean, stats.state_scale, true);
    affine_rows(out.actions, stats.action_mean, stats.action_scale, true);
    return out;
}

Trajectory denormalize(const Trajectory& traj, const NormalizationStats& stats) {
    Trajectory out = traj;
    affine_rows(out.states, stats.state_mean, stats.state_scale, false);
    affine_rows(out.actions, stats.action_mean, stats.action_scale, false);
    return out;
}

void normalize(Dataset& dataset, const NormalizationStats& stats) {
    for (auto& demo : dataset.demos) demo.traj = normalize(demo.traj, stats);
    dataset.stats = stats;
}

namespace {

json rows_to_json(const RealArray& m) {
    json rows = json::array();
    for (std::size_t t = 0; t < m.dim(0); ++t) {
        json row = json::array();
        for (std::size_t i = 0; i < m.dim(1); ++i) row.push_back(m.at(t, i));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::vector<double>> json_to_rows(const json& j, const char* field, std::size_t line) {
    if (!j.is_array()) throw SchemaError("line " + std::to_string(line) + ": field '" + field + "' must be an array");
    std::vector<std::vector<double>> rows;
    for (const auto& r : j) {
        if (!r.is_array()) {
            throw SchemaError("line " + std::to_string(line) + ": field '" + field + "' must be an array of arrays");
        }
        std::vector<double> row;
        for (const auto& v : r) {
            if (!v.is_number()) {
                throw SchemaError("line " + std::to_string(line) + ": non-numeric entry in '" + field + "'");
            }
            row.push_back(v.get<double>());
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw SchemaError("line " + std::to_string(line) + ": ragged rows in '" + field + "'");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& demo : dataset.demos) {
        json j;
        j["states"] = rows_to_json(demo.traj.states);
        j["actions"] = rows_to_json(demo.traj.actions);
        if (demo.labeled()) {
            j["labels"] = demo.labels;
            j["boundaries"] = demo.boundaries;
        }
        if (demo.traj.task_id) j["task_id"] = *demo.traj.task_id;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Dataset ds;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
        }
        if (!j.is_object() || !j.contains("states") || !j.contains("actions")) {
            throw SchemaError(path.string() + ": line " + std::to_string(line) +
                              ": expected an object with 'states' and 'actions'");
        }
        auto states = json_to_rows(j["states"], "states", line);
        auto actions = json_to_rows(j["actions"], "actions", line);
        if (states.size() != actions.size()) {
            throw SchemaError(path.string() + ": line " + std::to_string(line) + ": " + std::to_string(states.size()) +
                              " states but " + std::to_string(actions.size()) + " actions");
        }
        if (states.empty()) throw SchemaError(path.string() + ": line " + std::to_string(line) + ": empty trajectory");
        LabeledTrajectory demo;
        std::optional<int> task;
        if (j.contains("task_id") && !j["task_id"].is_null()) {
            if (!j["task_id"].is_number_integer()) {
                throw SchemaError(path.string() + ": line " + std::to_string(line) + ": task_id must be an integer");
            }
            task = j["task_id"].get<int>();
        }
        demo.traj = make_trajectory(states, actions, task);
        if (!ds.empty() && (demo.traj.state_dim() != ds.demos[0].traj.state_dim() ||
                            demo.traj.action_dim() != ds.demos[0].traj.action_dim())) {
            throw SchemaError(path.string() + ": line " + std::to_string(line) + ": dimensions differ from line 1");
        }
        if (j.contains("labels")) {
            try {
                demo.labels = j["labels"].get<std::vector<int>>();
                if (j.contains("boundaries")) {
                    demo.boundaries = j["boundaries"].get<std::vector<std::size_t>>();
                } else {
                    demo.boundaries = boundaries_from_labels(demo.labels);
                }
            } catch (const json::exception&) {
                throw SchemaError(path.string() + ": line " + std::to_string(line) + ": malformed labels/boundaries");
            }
            if (demo.labels.size() != states.size()) {
                throw SchemaError(path.string() + ": line " + std::to_string(line) + ": " +
                                  std::to_string(demo.labels.size()) + " labels for " + std::to_string(states.size()) +
                                  " steps");
            }
            if (demo.boundaries != boundaries_from_labels(demo.labels)) {
                throw SchemaError(path.string() + ": line " + std::to_string(line) +
                                  ": boundaries inconsistent with labels");
            }
        }
        ds.demos.push_back(std::move(demo));
    }
    return ds;
}

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path) {
    json j;
    j["state_mean"] = stats.state_mean;
    j["state_scale"] = stats.state_scale;
    j["action_mean"] = stats.action_mean;
    j["action_scale"] = stats.action_scale;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

NormalizationStats load_stats(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        json j = json::parse(in);
        NormalizationStats st;
        st.state_mean = j.at("state_mean").get<std::vector<double>>();
        st.state_scale = j.at("state_scale").get<std::vector<double>>();
        st.action_mean = j.at("action_mean").get<std::vector<double>>();
        st.action_scale = j.at("action_scale").get<std::vector<double>>();
        if (st.state_mean.size() != st.state_scale.size() || st.action_mean.size() != st.action_scale.size()) {
            throw SchemaError(path.string() + ": mean/scale length mismatch");
        }
        return st;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace ovi
