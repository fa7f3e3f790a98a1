#pragma once

#include <cstdint>
#include <random>

namespace posbandit {

// splitmix64 finalizer applied to (base, index); used to derive per-run and
// per-stream seeds so that sweeps are reproducible.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

// Reproducible random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; every distribution below is implemented
// here rather than taken from <random>, whose algorithms vary across
// standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  // Number of 64-bit words consumed so far.
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n must be positive. Lemire's multiply-shift
  // with rejection, so the result is exactly uniform.
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();
  double exponential();
  double gamma(double shape);
  double beta(double a, double b);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace posbandit
