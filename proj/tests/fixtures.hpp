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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ldcc/data.hpp"
#include "ldcc/model.hpp"

namespace fixtures {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("ldcc_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Two task-themes over three well separated unit-variance image-themes in
/// the plane: theme 0 favours image-theme 0, theme 1 favours image-theme 2.
inline ldcc::ThemeModel planted_model(double delta = 0.5) {
  Eigen::MatrixXd mu(3, 2);
  mu << -8.0, 0.0,
         0.0, 8.0,
         8.0, 0.0;
  std::vector<Eigen::MatrixXd> sigma(3, Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd alpha(2, 3);
  alpha << 6.0, 1.0, 0.3,
           0.3, 1.0, 6.0;
  return ldcc::ThemeModel(mu, sigma, alpha, Eigen::VectorXd::Constant(2, delta));
}

/// Random valid model with the given shape; means spread over [-6, 6].
template <typename Rng>
ldcc::ThemeModel random_model(Eigen::Index l_count, Eigen::Index k_count, Eigen::Index dim, Rng& rng) {
  std::uniform_real_distribution<double> spread(-6.0, 6.0);
  std::uniform_real_distribution<double> conc(0.3, 5.0);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  Eigen::MatrixXd mu(k_count, dim);
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = spread(rng);
  std::vector<Eigen::MatrixXd> sigma;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(dim, dim) * 0.3;
    Eigen::MatrixXd s = a * a.transpose();
    for (Eigen::Index i = 0; i < dim; ++i) s(i, i) += var(rng);
    sigma.push_back(0.5 * (s + s.transpose()));
  }
  Eigen::MatrixXd alpha(l_count, k_count);
  for (Eigen::Index i = 0; i < alpha.size(); ++i) alpha.data()[i] = conc(rng);
  Eigen::VectorXd delta(l_count);
  for (Eigen::Index i = 0; i < l_count; ++i) delta[i] = conc(rng);
  return ldcc::ThemeModel(mu, sigma, alpha, delta);
}

inline ldcc::Task single_class_task(std::string id, const ldcc::SampleMatrix& block) {
  ldcc::Task t;
  t.id = std::move(id);
  t.classes.push_back(block);
  return t;
}

}  // namespace fixtures
