#pragma once

#include <concepts>
#include <cstdint>
#include <limits>

namespace recatom {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// Fixed-point finalizer of the SplitMix64 generator (Vigna 2015): a
/// bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed for replicate `index` of a run keyed by `master`.
///
/// The 128-bit input (master, index) is folded to a Weyl point and pushed
/// through two finalizer rounds. For a fixed master the map is injective in
/// the index (bijection composed with an injection), so distinct replicates
/// can never share a seed regardless of scheduling or worker count.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    const std::uint64_t folded = master + kGolden * (index + 1);
    return mix64(mix64(folded) + kGolden);
}

/// SplitMix64 engine: 64-bit state, one Weyl increment plus one finalizer
/// per output. Satisfies std::uniform_random_bit_generator.
class SplitMix64 {
  public:
    using result_type = std::uint64_t;

    SplitMix64() = default;
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept {
        state_ += kGolden;
        return mix64(state_);
    }

  private:
    std::uint64_t state_ = 0x853C49E6748FEA9Bull;
};

/// Engines usable as a recatom random-stream: full-width 64-bit output.
template <typename E>
concept Uniform64Engine =
    std::uniform_random_bit_generator<E> &&
    std::same_as<typename E::result_type, std::uint64_t> &&
    (E::min() == 0) && (E::max() == std::numeric_limits<std::uint64_t>::max());

/// Uniform double in [0, 1), 53 random bits.
template <Uniform64Engine E>
double u01(E& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace recatom
