#include "ovi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ovi/errors.hpp"

namespace ovi {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr const char* kMagic = "OVI-CHECKPOINT";

json stats_to_json(const NormalizationStats& s) {
    return json{{"state_mean", s.state_mean},
                {"state_scale", s.state_scale},
                {"action_mean", s.action_mean},
                {"action_scale", s.action_scale}};
}

NormalizationStats stats_from_json(const json& j) {
    NormalizationStats s;
    s.state_mean = j.at("state_mean").get<std::vector<double>>();
    s.state_scale = j.at("state_scale").get<std::vector<double>>();
    s.action_mean = j.at("action_mean").get<std::vector<double>>();
    s.action_scale = j.at("action_scale").get<std::vector<double>>();
    return s;
}

void append(std::vector<double>& payload, const RealArray& a) {
    payload.insert(payload.end(), a.data().begin(), a.data().end());
}

} // namespace

const ParamStore* Checkpoint::find_store(const std::string& name) const {
    for (const auto& s : stores) {
        if (s.name() == name) return &s;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["kind"] = ckpt.kind;
    manifest["epoch"] = ckpt.epoch;
    manifest["dims"] = {{"state", ckpt.dims.state},
                        {"action", ckpt.dims.action},
                        {"latent", ckpt.dims.latent},
                        {"task", ckpt.dims.task}};
    manifest["net"] = {{"layers", ckpt.net.layers}, {"hidden", ckpt.net.hidden}};
    json config = json::array();
    for (const auto& [k, v] : ckpt.config) config.push_back({k, v});
    manifest["config"] = config;
    manifest["rng_state"] = ckpt.rng_state;
    manifest["baseline"] = ckpt.baseline ? json(*ckpt.baseline) : json(nullptr);
    manifest["stats"] = ckpt.stats ? stats_to_json(*ckpt.stats) : json(nullptr);

    std::vector<double> payload;
    json stores = json::array();
    for (const auto& store : ckpt.stores) {
        json params = json::array();
        for (std::size_t i = 0; i < store.size(); ++i) {
            const auto& e = store.entry(i);
            params.push_back({{"name", e.name},
                              {"shape", e.value.shape()},
                              {"offset", payload.size()},
                              {"count", e.value.size()}});
            append(payload, e.value);
            append(payload, e.first_moment);
            append(payload, e.second_moment);
        }
        stores.push_back({{"name", store.name()}, {"step", store.step()}, {"params", params}});
    }
    manifest["stores"] = stores;
    manifest["payload_doubles"] = payload.size();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << kMagic << '\n' << manifest.dump() << '\n';
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::string magic, manifest_line;
    if (!std::getline(in, magic) || magic != kMagic) {
        throw CheckpointError(path.string() + ": not a checkpoint file");
    }
    if (!std::getline(in, manifest_line)) throw CheckpointError(path.string() + ": missing manifest");
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    try {
        const json m = json::parse(manifest_line);
        const int version = m.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError(path.string() + ": format version " + std::to_string(version) + ", expected " +
                                  std::to_string(kCheckpointVersion));
        }
        const auto expected = m.at("payload_doubles").get<std::size_t>();
        if (bytes.size() != expected * sizeof(double)) {
            throw CheckpointError(path.string() + ": payload holds " + std::to_string(bytes.size()) +
                                  " bytes, manifest declares " + std::to_string(expected * sizeof(double)));
        }
        std::vector<double> payload(expected);
        if (expected > 0) std::memcpy(payload.data(), bytes.data(), bytes.size());

        ck.kind = m.at("kind").get<std::string>();
        ck.epoch = m.at("epoch").get<std::size_t>();
        const auto& d = m.at("dims");
        ck.dims = {d.at("state").get<std::size_t>(), d.at("action").get<std::size_t>(),
                   d.at("latent").get<std::size_t>(), d.at("task").get<std::size_t>()};
        ck.net = {m.at("net").at("layers").get<std::size_t>(), m.at("net").at("hidden").get<std::size_t>()};
        for (const auto& kv : m.at("config")) ck.config.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
        ck.rng_state = m.at("rng_state").get<std::string>();
        if (!m.at("baseline").is_null()) ck.baseline = m.at("baseline").get<double>();
        if (!m.at("stats").is_null()) ck.stats = stats_from_json(m.at("stats"));

        for (const auto& sj : m.at("stores")) {
            ParamStore store(sj.at("name").get<std::string>());
            store.set_step(sj.at("step").get<std::int64_t>());
            for (const auto& pj : sj.at("params")) {
                const auto shape = pj.at("shape").get<Shape>();
                const auto offset = pj.at("offset").get<std::size_t>();
                const auto count = pj.at("count").get<std::size_t>();
                if (shape_size(shape) != count || offset + 3 * count > payload.size()) {
                    throw CheckpointError(path.string() + ": parameter " + pj.at("name").get<std::string>() +
                                          " disagrees with its shape or the payload");
                }
                auto slab = [&](std::size_t k) {
                    const auto* p = payload.data() + offset + k * count;
                    return RealArray(shape, std::vector<double>(p, p + count));
                };
                auto id = store.add(pj.at("name").get<std::string>(), slab(0));
                store.entry(id).first_moment = slab(1);
                store.entry(id).second_moment = slab(2);
            }
            ck.stores.push_back(std::move(store));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": malformed manifest (" + e.what() + ")");
    }
    return ck;
}

void restore_store(ParamStore& dst, const ParamStore& src) {
    if (dst.size() != src.size()) {
        throw CheckpointError("store " + dst.name() + ": checkpoint has " + std::to_string(src.size()) +
                              " parameters, model has " + std::to_string(dst.size()));
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& s = src.entry(i);
        const auto& d = dst.entry(i);
        if (s.name != d.name || s.value.shape() != d.value.shape()) {
            throw CheckpointError("store " + dst.name() + ": parameter " + s.name + " " +
                                  shape_string(s.value.shape()) + " does not match " + d.name + " " +
                                  shape_string(d.value.shape()));
        }
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto& d = dst.entry(i);
        const auto& s = src.entry(i);
        d.value = s.value;
        d.first_moment = s.first_moment;
        d.second_moment = s.second_moment;
    }
    dst.set_step(src.step());
}

} // namespace ovi
