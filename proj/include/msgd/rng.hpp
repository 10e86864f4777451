// Copyright 2026 The msgd-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include "msgd/error.hpp"
#include "msgd/numerics.hpp"

namespace msgd {

//---------------------------------------------------------------------------//
// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3", SC 2011).
//---------------------------------------------------------------------------//
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;
  static constexpr int kRounds = 10;

  static constexpr Counter encrypt(Counter ctr, Key key) {
    for (int round = 0; round < kRounds; ++round) {
      if (round > 0) {
        key[0] += kWeylA;
        key[1] += kWeylB;
      }
      const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// One element of a stream derivation path: either a label or an index,
/// e.g. {"rep", 17, "weights", 3}. Only a tagged 64-bit digest is kept;
/// labels and indices never collide because their tags differ.
class PathLabel {
 public:
  PathLabel(const char* label) : PathLabel(std::string_view(label)) {}  // NOLINT
  PathLabel(const std::string& label) : PathLabel(std::string_view(label)) {}  // NOLINT
  PathLabel(std::string_view label) : tag_(1u), digest_(fnv1a(label)) {}  // NOLINT
  template <std::integral I>
  PathLabel(I index) : tag_(2u), digest_(static_cast<std::uint64_t>(index)) {}  // NOLINT

  std::uint32_t tag() const noexcept { return tag_; }
  std::uint64_t digest() const noexcept { return digest_; }

 private:
  static constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint32_t tag_;
  std::uint64_t digest_;
};

/// Deterministic random stream. A stream is identified by its Philox key,
/// which is a pure function of (master seed, derivation path); drawing
/// advances a private block counter. Copies replay the same sequence.
///
/// Satisfies std::uniform_random_bit_generator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t master_seed)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Child stream keyed by encrypting the label digest under this stream's
  /// key. Does not consume draws from *this.
  RngStream derive(const PathLabel& label) const {
    const std::uint32_t tag = label.tag();
    const std::uint64_t h = label.digest();
    // Word 3 = all ones keeps derivation blocks disjoint from draw blocks,
    // whose word 3 is zero.
    const auto out = Philox4x32::encrypt(
        {tag, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
         0xFFFFFFFFu},
        key_);
    RngStream child(0);
    child.key_ = {out[0], out[1]};
    return child;  // fresh counter, no spare normal
  }

  RngStream derive(std::initializer_list<PathLabel> path) const {
    RngStream s = *this;
    for (const auto& label : path) s = s.derive(label);
    return s;
  }

  result_type operator()() {
    if (used_ == 2) refill();
    return buffer_[used_++];
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound), unbiased (Lemire's multiply-shift with
  /// rejection).
  std::uint64_t below(std::uint64_t bound) {
    require(bound > 0, "RngStream::below: bound must be positive");
    unsigned __int128 product = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Two independent standard normals via Box-Muller.
  double normal_pair(double& second) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    second = r * std::sin(theta);
    return r * std::cos(theta);
  }

  /// One standard normal; the second value of each Box-Muller pair is kept
  /// as part of the stream state and returned by the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    has_spare_ = true;
    return normal_pair(spare_);
  }

  Philox4x32::Key key() const noexcept { return key_; }

 private:
  void refill() {
    const auto out = Philox4x32::encrypt(
        {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), 0u,
         0u},
        key_);
    ++block_;
    buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    used_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream derive_stream(std::uint64_t master_seed,
                               std::initializer_list<PathLabel> path) {
  return RngStream(master_seed).derive(path);
}

inline void fill_std_normal(RngStream& stream, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 1 < out.size(); i += 2) out[i] = stream.normal_pair(out[i + 1]);
  if (i < out.size()) out[i] = stream.normal();
}

inline Vector sample_std_normal(RngStream& stream, std::size_t d) {
  require(d >= 1, "sample_std_normal: dimension must be >= 1");
  Vector out(d);
  fill_std_normal(stream, out);
  return out;
}

namespace detail {

// Marsaglia & Tsang (2000), shape >= 1. Returns log of the draw.
inline double log_gamma_draw_mt(RngStream& stream, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stream.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 || std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d * v);
    }
  }
}

}  // namespace detail

/// log of a Gamma(shape, 1) draw. For shape < 1 uses G(a) = G(a+1) U^{1/a},
/// which in log space stays finite even when the draw itself underflows.
inline double sample_log_gamma(RngStream& stream, double shape) {
  require(shape > 0.0 && std::isfinite(shape), "sample_gamma: shape must be positive");
  if (shape >= 1.0) return detail::log_gamma_draw_mt(stream, shape);
  const double boosted = detail::log_gamma_draw_mt(stream, shape + 1.0);
  return boosted + std::log(stream.uniform()) / shape;
}

inline double sample_gamma(RngStream& stream, double shape) {
  return std::exp(sample_log_gamma(stream, shape));
}

}  // namespace msgd
