#pragma once

#include <cstdint>
#include <string_view>

namespace postdiff {

// Counter-based generator (SplitMix64 increments) with a portable Box-Muller
// normal transform, so draw sequences do not depend on the standard library
// implementation.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed = 0) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64();
    // Uniform in (0, 1), never exactly 0 or 1.
    double next_uniform();
    double next_normal();

    // Independent stream keyed by (seed, tag). Does not advance this stream.
    SeededRng substream(uint64_t tag) const;
    SeededRng substream(std::string_view name) const;

private:
    uint64_t seed_;
    uint64_t state_;
    bool has_spare_ = false;
    double spare_   = 0.0;
};

uint64_t mix64(uint64_t x);
uint64_t hash_name(std::string_view name);

// Named sub-stream tags used by the sampler.
namespace streams {
inline constexpr std::string_view init_noise       = "init-noise";
inline constexpr std::string_view transition_noise = "transition-noise";
}  // namespace streams

}  // namespace postdiff
