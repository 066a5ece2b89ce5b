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

// Special functions used by the variational updates: log-gamma, digamma,
// trigamma, the Dirichlet log-normaliser and a max-shifted log-sum-exp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "ldcc/error.hpp"

namespace ldcc {

namespace detail {

// Anything below this is treated as a collapsed parameter, not rounded up.
inline constexpr double kSmallestArgument = 1e-300;

inline void check_positive_argument(double x, const char* fn) {
  if (!std::isfinite(x) || x < kSmallestArgument) {
    throw DomainError(std::string(fn) + ": argument must be finite and positive, got " +
                      std::to_string(x));
  }
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  detail::check_positive_argument(x, "log_gamma");
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);  // reentrant: does not touch the global signgam
#else
  return std::lgamma(x);
#endif
}

/// psi(x) = d/dx ln Gamma(x).
///
/// Shifts the argument up with psi(x) = psi(x + 1) - 1/x until x >= 10 and
/// evaluates the asymptotic series there; truncation error is below 1e-16.
inline double digamma(double x) {
  detail::check_positive_argument(x, "digamma");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_2n / (2n x^2n), n = 1..7
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 -
                                                        inv2 * (691.0 / 32760 - inv2 * (1.0 / 12)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// psi'(x), the derivative of the digamma function.
inline double trigamma(double x) {
  detail::check_positive_argument(x, "trigamma");
  double shift = 0.0;
  while (x < 10.0) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // 1/x + 1/(2x^2) + sum_n B_2n / x^(2n+1)
  const double series =
      inv * inv2 *
      (1.0 / 6 -
       inv2 * (1.0 / 30 -
               inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * (7.0 / 6)))))));
  return shift + inv + 0.5 * inv2 + series;
}

/// ln B(u) = sum_k ln Gamma(u_k) - ln Gamma(sum_k u_k).
inline double log_beta_dirichlet(const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() == 0) throw DomainError("log_beta_dirichlet: empty parameter vector");
  double acc = 0.0;
  double total = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    acc += log_gamma(u[k]);
    total += u[k];
  }
  return acc - log_gamma(total);
}

/// ln sum_i exp(v_i) with a max shift. Entries may be -inf.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw DomainError("log_sum_exp: empty input");
  if (v.size() == 1) return v[0];
  const double top = v.maxCoeff();
  if (std::isnan(top)) throw DomainError("log_sum_exp: NaN input");
  if (top == -std::numeric_limits<double>::infinity()) return top;
  if (top == std::numeric_limits<double>::infinity()) {
    throw DomainError("log_sum_exp: +inf input");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - top);
  return top + std::log(acc);
}

/// Strictly positive real vector, the argument of every Dirichlet density here.
class PositiveVector {
 public:
  PositiveVector() = default;

  explicit PositiveVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (values_.size() == 0) throw DomainError("PositiveVector: must have at least one entry");
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]) || values_[i] <= 0.0) {
        throw DomainError("PositiveVector: entry " + std::to_string(i) +
                          " is not a finite positive number");
      }
    }
  }

  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

 private:
  Eigen::VectorXd values_;
};

}  // namespace ldcc
