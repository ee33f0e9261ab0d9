#pragma once

#include <cstdint>
#include <vector>

#include "ovi/netstack.hpp"
#include "ovi/rng.hpp"
#include "ovi/trajectory.hpp"

namespace ovi::test {

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

/// Random walk trajectory with T steps.
inline Trajectory random_trajectory(std::size_t T, std::size_t ds, std::size_t da, Rng& rng) {
    std::vector<std::vector<double>> s, a;
    std::vector<double> state(ds, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        auto act = random_vector(da, rng);
        s.push_back(state);
        a.push_back(act);
        for (std::size_t i = 0; i < ds && i < da; ++i) state[i] += act[i];
    }
    return make_trajectory(s, a);
}

inline Dims small_dims(std::size_t latent = 2, std::size_t task = 0) { return {2, 2, latent, task}; }
inline NetConfig small_net(std::size_t layers = 1, std::size_t hidden = 8) { return {layers, hidden}; }

} // namespace ovi::test
