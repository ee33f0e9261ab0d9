#include "ovi/param_store.hpp"

#include <cmath>

#include "ovi/errors.hpp"

namespace ovi {

ParamId ParamStore::add(std::string name, RealArray init) {
    if (find(name)) {
        throw ConfigError("ParamStore " + name_ + ": duplicate parameter " + name);
    }
    Entry e;
    e.name = std::move(name);
    e.grad = RealArray(init.shape());
    e.first_moment = RealArray(init.shape());
    e.second_moment = RealArray(init.shape());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return ParamId{entries_.size() - 1};
}

std::size_t ParamStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return ParamId{i};
    }
    return std::nullopt;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& e : entries_) {
        for (double g : e.grad.data()) sq += g * g;
    }
    return std::sqrt(sq);
}

void ParamStore::scale_grad(double factor) {
    for (auto& e : entries_) {
        for (double& g : e.grad.data()) g *= factor;
    }
}

double ParamStore::clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm > max_norm) scale_grad(max_norm / norm);
    return norm;
}

std::vector<double> ParamStore::flat_values() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries_) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
    return out;
}

std::vector<double> ParamStore::flat_grads() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries_) out.insert(out.end(), e.grad.data().begin(), e.grad.data().end());
    return out;
}

void ParamStore::set_flat_values(const std::vector<double>& flat) {
    if (flat.size() != scalar_count()) {
        throw DimensionError("ParamStore " + name_ + ": flat value count " + std::to_string(flat.size()) +
                             " != " + std::to_string(scalar_count()));
    }
    std::size_t k = 0;
    for (auto& e : entries_) {
        for (double& v : e.value.data()) v = flat[k++];
    }
}

std::size_t ParamStore::copy_matching_values(const ParamStore& other, const std::string& prefix) {
    std::size_t copied = 0;
    for (const auto& src : other.entries_) {
        auto id = find(prefix + src.name);
        if (!id) continue;
        auto& dst = entries_[id->index];
        if (dst.value.shape() != src.value.shape()) {
            throw DimensionError("ParamStore " + name_ + ": shape mismatch copying " + src.name + " " +
                                 shape_string(src.value.shape()) + " into " + shape_string(dst.value.shape()));
        }
        dst.value = src.value;
        ++copied;
    }
    return copied;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (step_ != other.step_ || entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name || a.value != b.value || a.first_moment != b.first_moment ||
            a.second_moment != b.second_moment) {
            return false;
        }
    }
    return true;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.increment_step();
    const double t = static_cast<double>(store.step());
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& e = store.entry(i);
        auto& w = e.value.data();
        const auto& g = e.grad.data();
        auto& m = e.first_moment.data();
        auto& v = e.second_moment.data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bias1;
            const double v_hat = v[k] / bias2;
            w[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_hat);
        }
    }
}

} // namespace ovi
