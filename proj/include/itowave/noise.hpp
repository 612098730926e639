#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace itowave {

/// Source of standard-normal and uniform draws. Every stochastic operation takes
/// one explicitly so that runs are reproducible and concurrent callers can use
/// independent streams.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual double normal() = 0;
  virtual double uniform(double lo, double hi) = 0;

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }
};

/// mt19937_64-backed source. The (seed, stream) pair selects an independent
/// stream, e.g. one per generation chain.
class RandomNoise final : public NoiseSource {
 public:
  explicit RandomNoise(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() override { return normal_(engine_); }
  double uniform(double lo, double hi) override {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Deterministic source returning xi = 0 and the midpoint of uniform ranges.
class ZeroNoise final : public NoiseSource {
 public:
  double normal() override { return 0.0; }
  double uniform(double lo, double hi) override { return 0.5 * (lo + hi); }
};

}  // namespace itowave
