#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ovi/real_array.hpp"

namespace ovi {

/// Index of a parameter inside its ParamStore.
struct ParamId {
    std::size_t index = 0;
};

/// Named parameter arrays with their gradients and Adam moment accumulators.
class ParamStore {
public:
    struct Entry {
        std::string name;
        RealArray value;
        RealArray grad;
        RealArray first_moment;
        RealArray second_moment;
    };

    explicit ParamStore(std::string name = {}) : name_(std::move(name)) {}

    ParamId add(std::string name, RealArray init);

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const noexcept;

    Entry& entry(ParamId id) { return entries_.at(id.index); }
    const Entry& entry(ParamId id) const { return entries_.at(id.index); }
    Entry& entry(std::size_t i) { return entries_.at(i); }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }
    std::optional<ParamId> find(const std::string& name) const;

    RealArray& value(ParamId id) { return entry(id).value; }
    const RealArray& value(ParamId id) const { return entry(id).value; }
    RealArray& grad(ParamId id) { return entry(id).grad; }
    const RealArray& grad(ParamId id) const { return entry(id).grad; }

    std::int64_t step() const noexcept { return step_; }
    void set_step(std::int64_t s) noexcept { step_ = s; }
    void increment_step() noexcept { ++step_; }

    void zero_grad();
    double grad_norm() const;
    void scale_grad(double factor);
    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    double clip_grad_norm(double max_norm);

    /// Flattened views used by finite differences and serialization.
    std::vector<double> flat_values() const;
    std::vector<double> flat_grads() const;
    void set_flat_values(const std::vector<double>& flat);

    /// Copies values (not moments) of every identically named parameter in `other`.
    std::size_t copy_matching_values(const ParamStore& other, const std::string& prefix = {});

    bool operator==(const ParamStore& other) const;

private:
    std::string name_;
    std::vector<Entry> entries_;
    std::int64_t step_ = 0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

/// Bias-corrected Adam update over every parameter of the store.
void adam_step(ParamStore& store, const AdamConfig& cfg);

} // namespace ovi
