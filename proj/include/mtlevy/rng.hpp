#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mtlevy {

// Source of uniform variates in [0, 1). Everything stochastic in this library
// draws through this interface, so any decision trace can be replayed with a
// scripted value sequence.
class VariateSource {
 public:
  virtual ~VariateSource() = default;
  virtual double next() = 0;
};

// mt19937_64-backed source with 53-bit mantissa resolution.
class UniformSource final : public VariateSource {
 public:
  explicit UniformSource(std::uint64_t seed) : gen_(seed) {}
  double next() override {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 gen_;
};

// Replays a fixed list of variates; throws when exhausted.
class ScriptedSource final : public VariateSource {
 public:
  explicit ScriptedSource(std::vector<double> values)
      : values_(std::move(values)) {}
  double next() override {
    if (pos_ >= values_.size())
      throw std::out_of_range("ScriptedSource: variate script exhausted");
    return values_[pos_++];
  }
  std::size_t consumed() const { return pos_; }

 private:
  std::vector<double> values_;
  std::size_t pos_ = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic sub-stream seed from a tuple of identifiers (run seed,
// checkpoint index, task id, ...). Keeps evaluation/probe draws independent
// of the training stream.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x853C49E6748FEA9Bull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// floor(u * n) clamped to {0, ..., n-1}.
inline int uniform_index(int n, double u) {
  if (n <= 0) throw std::domain_error("uniform_index: n must be positive");
  const int idx = static_cast<int>(u * static_cast<double>(n));
  return idx < 0 ? 0 : (idx >= n ? n - 1 : idx);
}

// Box-Muller; consumes exactly two uniforms per value.
inline double standard_gaussian(VariateSource& vars) {
  const double u1 = vars.next();
  const double u2 = vars.next();
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

// Inverse-CDF; one uniform per value.
inline double standard_cauchy(VariateSource& vars) {
  return std::tan(std::numbers::pi * (vars.next() - 0.5));
}

}  // namespace mtlevy
