#include "bkinv/rng.hpp"

#include <cmath>
#include <numbers>

namespace bkinv {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::child(std::string_view tag) const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return Rng(mix_seed(seed_, h));
}

Rng Rng::child(std::uint64_t index) const { return Rng(mix_seed(seed_, index ^ 0x5bd1e995ULL)); }

std::vector<double> smooth_multiplier(std::size_t n, Rng& rng, int modes) {
  std::vector<double> amp(modes), phase(modes);
  for (int m = 0; m < modes; ++m) {
    amp[m] = rng.uniform(-1.0, 1.0);
    phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  std::vector<double> out(n, 0.0);
  double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    double z = static_cast<double>(k) / denom;
    double s = 0.0;
    for (int m = 0; m < modes; ++m) s += amp[m] * std::cos((m + 1) * std::numbers::pi * z + phase[m]);
    out[k] = s;
  }
  double rms = 0.0;
  for (double x : out) rms += x * x;
  rms = std::sqrt(rms / static_cast<double>(n));
  if (rms > 0.0)
    for (double& x : out) x /= rms;
  return out;
}

void apply_noise(std::vector<double>& v, double delta, NoiseKind kind, Rng& rng, int modes) {
  if (delta == 0.0) return;
  if (kind == NoiseKind::Iid) {
    const double a = std::sqrt(3.0);
    for (double& x : v) x *= 1.0 + delta * rng.uniform(-a, a);
    return;
  }
  auto m = smooth_multiplier(v.size(), rng, modes);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] *= 1.0 + delta * m[k];
}

}  // namespace bkinv
