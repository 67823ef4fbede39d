#pragma once

#include <cstdint>
#include <vector>

namespace semcom {

// Counter-based generator: every output is a splitmix64 hash of a keyed
// counter, so the sequence depends only on (seed, stream_id) and never on
// call history sharing. Normal draws use Box-Muller; they are bit-stable for
// a fixed libm build.
//
// Streams are single-owner. Parallel callers must use distinct stream_ids.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    // Standard normal.
    double next_normal();
    // Uniform integer in [0, n), n >= 1.
    std::uint64_t next_below(std::uint64_t n);

    std::vector<double> normal_vector(std::size_t n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // Stateless mixer, also used to derive sub-seeds from (seed, tag) pairs.
    static std::uint64_t mix(std::uint64_t x);

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic sub-seed derivation for pipeline stages.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace semcom
