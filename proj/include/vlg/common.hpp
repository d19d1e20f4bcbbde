// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixF = Eigen::MatrixXf;
using VectorF = Eigen::VectorXf;

// Error hierarchy. Callers that care about the failure class catch the
// specific type; the CLI maps these onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid values, shapes, or arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad magic bytes, unsupported version, or otherwise corrupt header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File ended before the declared payload.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

// Lookup of an id that is not present.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (open, write, rename).
class IoError : public Error {
 public:
  using Error::Error;
};

// Structured-text input that does not parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Deterministic 64-bit generator (SplitMix64). The standard library engines
// are portable but the distributions are not, so all sampling goes through
// the helpers below to keep outputs byte-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one value per call, deterministic.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n) by rejection; n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  std::uint64_t state_;
};

// Derives a substream seed from a base seed and stream tags, so independent
// sampling sites never share a sequence.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  Rng r(seed ^ (a * 0xd1342543de82ef95ULL) ^ (b * 0xaf251af3b0f025b5ULL) ^
        (c * 0x9e6c63d0a38d9df9ULL));
  return r.next_u64();
}

inline std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vlg
