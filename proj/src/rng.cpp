#include "postdiff/rng.hpp"

#include <cmath>
#include <numbers>

namespace postdiff {

uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t hash_name(std::string_view name) {
    // FNV-1a, then finalized
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

uint64_t SeededRng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
}

double SeededRng::next_uniform() {
    // 53 random bits, shifted off zero
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double SeededRng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r  = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_          = r * std::sin(th);
    has_spare_      = true;
    return r * std::cos(th);
}

SeededRng SeededRng::substream(uint64_t tag) const {
    return SeededRng(mix64(seed_ ^ mix64(tag + 0x632be59bd9b4e019ULL)));
}

SeededRng SeededRng::substream(std::string_view name) const {
    return substream(hash_name(name));
}

}  // namespace postdiff
