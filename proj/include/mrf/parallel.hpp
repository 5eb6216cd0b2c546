#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>

namespace mrf {

// Worker cap for all parallel loops; 0 means hardware concurrency.
void set_thread_count(unsigned threads);
unsigned thread_count();

// Splits [0, n) into contiguous ranges and runs body(begin, end) on up to
// thread_count() threads. Callers must only write disjoint outputs so the
// result does not depend on the split.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// SplitMix64: a small counter-friendly generator satisfying
// UniformRandomBitGenerator. Used wherever a stream is derived from a hash of
// (seed, indices) so results are independent of execution order.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(a ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
    return g();
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

}  // namespace mrf
