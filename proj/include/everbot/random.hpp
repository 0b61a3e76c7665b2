#pragma once

#include <cstdint>
#include <initializer_list>

namespace everbot {

// Counter-based random streams. A stream is fully determined by the key it
// was derived from, so draws do not depend on evaluation order or threads.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

class RandomStream {
 public:
  constexpr explicit RandomStream(std::uint64_t key) noexcept : key_(key) {}

  /// Derives an independent child stream.
  constexpr RandomStream fork(std::uint64_t label) const noexcept {
    return RandomStream(mix_key({key_, label}));
  }

  constexpr std::uint64_t next_u64() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace everbot
