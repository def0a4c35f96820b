#pragma once
#include <cstdint>
#include <random>

namespace qmpc {

inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

// Deterministic public randomness stream. Draws are keyed, not sequential, so
// any party (or the test harness) can recompute a value without shared state.
// Protocol code only queries a key after the corresponding round is committed,
// which is what makes the simulated common coin sound against the scheduler.
class Beacon {
public:
  explicit Beacon(std::uint64_t seed = 0) : seed_(seed) {}
  std::uint64_t draw(std::uint64_t k1, std::uint64_t k2 = 0, std::uint64_t k3 = 0) const {
    return mix(mix(mix(seed_, k1), k2), k3);
  }

private:
  std::uint64_t seed_;
};

// seed_seq fills the whole generator state; seeding from a single word leaves
// the first outputs of nearby streams visibly correlated
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq q{static_cast<std::uint32_t>(seed),
                  static_cast<std::uint32_t>(seed >> 32),
                  static_cast<std::uint32_t>(stream),
                  static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(q);
}

}  // namespace qmpc
