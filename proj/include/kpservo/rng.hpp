#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace kpservo {

// Deterministic random stream based on splitmix64. One root seed is split
// into independently-named streams so that adding a new noise consumer
// never perturbs the draws seen by existing ones. Distributions are
// generated explicitly (not via std::*_distribution) so that output files
// are byte-identical across standard libraries and platforms.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view stream_name)
      : state_(derive(root_seed, stream_name)) {}

  explicit RngStream(std::uint64_t raw_seed) : state_(raw_seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one spare kept between calls.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

  static std::uint64_t derive(std::uint64_t root, std::string_view name) {
    // FNV-1a over the stream name, folded into the root seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return root ^ h;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives the seed of repeat run `index` from the root seed.
inline std::uint64_t run_seed(std::uint64_t root_seed, std::uint64_t index) {
  RngStream s(root_seed ^ (0x5851f42d4c957f2dULL * (index + 1)));
  return s.next_u64();
}

}  // namespace kpservo
