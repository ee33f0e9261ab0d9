#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ovi/config.hpp"
#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/param_store.hpp"

namespace ovi {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a run. On disk: a magic line, a
/// one-line JSON manifest (names, shapes, offsets, config, RNG state), then a
/// flat little-endian double payload holding, per parameter, its values
/// followed by its two Adam moment arrays.
struct Checkpoint {
    std::string kind = "train";  // "pretrain" or "train"
    std::size_t epoch = 0;
    Dims dims;
    NetConfig net;
    std::vector<std::pair<std::string, std::string>> config;
    std::string rng_state;
    std::optional<double> baseline;
    std::optional<NormalizationStats> stats;
    std::vector<ParamStore> stores;

    const ParamStore* find_store(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointError on a bad magic line, version mismatch, malformed
/// manifest, or a payload whose length disagrees with the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values, moments and the step counter; names and shapes must agree.
void restore_store(ParamStore& dst, const ParamStore& src);

} // namespace ovi
