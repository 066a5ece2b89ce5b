// Copyright 2026 The ldcc Authors.
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

// Seedable xoshiro256** generator with per-index stream splitting, plus the
// handful of samplers the synthetic generator and E-step initialisation need.
//
// Stream derivation: the state of stream `i` under seed `s` is four successive
// splitmix64 outputs started from s ^ mix(i + 1), where mix is the splitmix64
// finaliser. Every task index (and every (batch, task) pair during training)
// owns its own stream, so results do not depend on how work is scheduled.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Core>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "ldcc/error.hpp"
#include "ldcc/specfn.hpp"

namespace ldcc {

inline std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** 1.0 (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept {
    std::uint64_t x = seed ^ splitmix64_mix(stream + 1);
    for (auto& word : state_) {
      x += 0x9E3779B97F4A7C15ULL;
      word = splitmix64_mix(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

/// Combines two indices into one stream id (e.g. batch number and task index).
inline std::uint64_t stream_id(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64_mix(a * 0x9E3779B97F4A7C15ULL + splitmix64_mix(b));
}

inline double sample_uniform(Xoshiro256& rng) {
  return boost::random::uniform_01<double>()(rng);
}

inline double sample_standard_normal(Xoshiro256& rng) {
  return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
}

/// ln G with G ~ Gamma(shape, 1). For shape < 1 uses G_a = G_{a+1} U^{1/a} in
/// log space so tiny shapes do not underflow to zero.
inline double sample_log_gamma(Xoshiro256& rng, double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw DomainError("sample_log_gamma: shape must be finite and positive");
  }
  if (shape >= 1.0) {
    return std::log(boost::random::gamma_distribution<double>(shape, 1.0)(rng));
  }
  const double g = boost::random::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  double u = sample_uniform(rng);
  while (u <= 0.0) u = sample_uniform(rng);
  return std::log(g) + std::log(u) / shape;
}

/// Dirichlet draw via normalised independent Gamma variates.
inline Eigen::VectorXd sample_dirichlet(Xoshiro256& rng, const Eigen::Ref<const Eigen::VectorXd>& concentration) {
  Eigen::VectorXd logs(concentration.size());
  for (Eigen::Index k = 0; k < concentration.size(); ++k) {
    logs[k] = sample_log_gamma(rng, concentration[k]);
  }
  const double norm = log_sum_exp(logs);
  return (logs.array() - norm).exp().matrix();
}

/// Index drawn from an (unnormalised is fine) non-negative weight vector.
inline Eigen::Index sample_categorical(Xoshiro256& rng, const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DomainError("sample_categorical: weights must have a positive finite sum");
  }
  const double target = sample_uniform(rng) * total;
  double acc = 0.0;
  Eigen::Index last_positive = 0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (weights[k] > 0.0) last_positive = k;
    acc += weights[k];
    if (target < acc) return k;
  }
  return last_positive;
}

}  // namespace ldcc
