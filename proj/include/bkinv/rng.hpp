#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace bkinv {

// Seeded generator with deterministic splitting into child streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}
  std::uint64_t seed() const { return seed_; }
  // Uniform on [0, 1), built from raw bits so results do not depend on the
  // standard library's distribution implementation.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  Rng child(std::string_view tag) const;
  Rng child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

enum class NoiseKind { Iid, Smooth };

// Multiplicative noise with unit-RMS multiplier: v <- v * (1 + delta * m).
// Iid: m ~ U(-sqrt3, sqrt3) per sample.  Smooth: m is a random combination of
// the first `modes` cosines along the sample index, rescaled to unit RMS.
void apply_noise(std::vector<double>& v, double delta, NoiseKind kind, Rng& rng, int modes = 6);

std::vector<double> smooth_multiplier(std::size_t n, Rng& rng, int modes);

}  // namespace bkinv
