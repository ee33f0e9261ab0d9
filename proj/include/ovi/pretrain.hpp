#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ovi/corpus.hpp"
#include "ovi/netstack.hpp"
#include "ovi/param_store.hpp"
#include "ovi/rng.hpp"
#include "ovi/tape.hpp"

namespace ovi {

/// Bidirectional stack plus Gaussian head emitting one latent per segment.
/// Parameter names coincide with q's so the encoder can warm-start q.
class SegmentEncoder {
public:
    SegmentEncoder(const Dims& dims, const NetConfig& net, std::uint64_t seed);

    ParamStore params{"encoder"};

    /// (mu_z, var_z) read from the first step's bidirectional features.
    std::pair<Var, Var> encode(Tape& tape, std::span<const Var> states, std::span<const Var> actions);

    std::size_t latent_dim() const noexcept { return latent_; }

private:
    std::size_t latent_ = 0;
    RecurrentStack stack_;
    GaussianHead z_head_;
};

/// Uniform demo, then uniform length in [min_length, max_length], then uniform start.
Trajectory sample_segment(const Dataset& dataset, std::size_t min_length, std::size_t max_length, Rng& rng);

/// Σ_i ½(var_i + mu_i² − 1 − ln var_i).
Var kl_to_standard_normal(Var mu, Var var);
double kl_to_standard_normal_value(std::span<const double> mu, std::span<const double> var);

struct VaeBreakdown {
    double loss = 0.0;
    double log_pi = 0.0;
    double kl = 0.0;
};

/// Records loss = −Σ_t log π(a_t | ·, z) + beta·KL with a single latent
/// z = μ + σ·eps broadcast over the segment, then zeroes the encoder and π
/// gradients and runs backward. η and q are untouched.
VaeBreakdown vae_step(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                      std::span<const double> eps);
/// Same, with eps drawn from `rng`.
VaeBreakdown vae_step(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                      Rng& rng);

/// Loss value only (no gradients); used by finite-difference checks.
double vae_loss(const Trajectory& segment, SegmentEncoder& encoder, PolicyTriple& triple, double beta,
                std::span<const double> eps);

struct PretrainConfig {
    std::size_t epochs = 20;
    std::size_t segment_min = 5;
    std::size_t segment_max = 10;
    double beta = 0.01;
    AdamConfig adam{};
    double clip_norm = 10.0;
};

struct PretrainEpoch {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double mean_log_pi = 0.0;
    double mean_kl = 0.0;
};

/// One epoch = dataset-size segment draws, each followed by an Adam step on
/// the encoder and π.
PretrainEpoch pretrain_epoch(const Dataset& train, SegmentEncoder& encoder, PolicyTriple& triple,
                             const PretrainConfig& cfg, std::size_t epoch, Rng& rng);

/// Copies the encoder's stack and z-head values into q.
std::size_t warm_start_q(PolicyTriple& triple, const SegmentEncoder& encoder);

} // namespace ovi
