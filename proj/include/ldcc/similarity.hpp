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

// Task similarity through the Dirichlet posteriors q(phi; lambda): KL
// divergences, averaged distances to a training set, correlation-diagram
// binning and closest-task selection.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ldcc/error.hpp"
#include "ldcc/parallel.hpp"
#include "ldcc/specfn.hpp"

namespace ldcc {

/// KL[Dir(a) || Dir(b)] = ln B(b) - ln B(a) + sum_k (a_k - b_k)(psi(a_k) - psi(a_0)).
/// Rounding can leave a tiny negative value for nearly equal arguments; it is
/// reported as 0.
inline double dirichlet_kl(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw ArgumentError("dirichlet_kl: lengths differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.size() == 0) throw ArgumentError("dirichlet_kl: empty parameter vectors");
  const double psi_total = digamma(a.sum());
  double cross = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a[k] != b[k]) cross += (a[k] - b[k]) * (digamma(a[k]) - psi_total);
  }
  const double kl = log_beta_dirichlet(b) - log_beta_dirichlet(a) + cross;
  return kl > 0.0 ? kl : 0.0;
}

inline double dirichlet_kl(const PositiveVector& a, const PositiveVector& b) {
  return dirichlet_kl(a.values(), b.values());
}

struct DistanceReport {
  Eigen::MatrixXd kl;         // test x train, KL[q(.; lambda_test) || q(.; lambda_train)]
  Eigen::VectorXd mean;       // per test task, average over the training set
};

/// Rows of `test` and `train` are lambda vectors.
inline DistanceReport distance_matrix(const Eigen::MatrixXd& test, const Eigen::MatrixXd& train,
                                      unsigned threads = 1) {
  if (test.rows() < 1 || train.rows() < 1) throw ArgumentError("distance_matrix: need test and train tasks");
  if (test.cols() != train.cols()) {
    throw ArgumentError("distance_matrix: test tasks have L = " + std::to_string(test.cols()) +
                        ", training tasks L = " + std::to_string(train.cols()));
  }
  if (!(test.array() > 0.0).all() || !(train.array() > 0.0).all() || !test.allFinite() || !train.allFinite()) {
    throw DomainError("distance_matrix: lambda entries must be finite and positive");
  }
  DistanceReport report;
  report.kl.resize(test.rows(), train.rows());
  parallel_for(static_cast<std::size_t>(test.rows()), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < train.rows(); ++d) {
      report.kl(row, d) = dirichlet_kl(test.row(row).transpose(), train.row(d).transpose());
    }
  });
  report.mean = report.kl.rowwise().mean();
  return report;
}

struct DiagramBin {
  int index = 0;  // 1-based
  double low = 0.0;   // interval (low, high]
  double high = 0.0;
  double mean_distance = 0.0;
  double mean_accuracy = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> members;  // test-task positions
};

/// Groups average distances into J equal-width bins of width max/J over
/// (0, max]; a distance of exactly 0 goes to the first bin. Empty bins are
/// omitted. If every distance is 0 a single bin holding everything is returned.
inline std::vector<DiagramBin> correlation_diagram(const std::vector<double>& distances,
                                                   const std::vector<double>& accuracies, int bins) {
  if (distances.size() != accuracies.size()) {
    throw ArgumentError("correlation_diagram: " + std::to_string(distances.size()) + " distances but " +
                        std::to_string(accuracies.size()) + " accuracies");
  }
  if (distances.empty()) throw ArgumentError("correlation_diagram: no test tasks");
  if (bins < 1) throw ArgumentError("correlation_diagram: bin count must be at least 1");
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) throw ArgumentError("correlation_diagram: distances must be finite and >= 0");
  }
  const double top = *std::max_element(distances.begin(), distances.end());
  const int used_bins = top > 0.0 ? bins : 1;
  const double width = top / used_bins;

  std::vector<DiagramBin> all(static_cast<std::size_t>(used_bins));
  for (int j = 1; j <= used_bins; ++j) {
    auto& bin = all[static_cast<std::size_t>(j - 1)];
    bin.index = j;
    bin.low = (j - 1) * width;
    bin.high = j == used_bins ? top : j * width;
  }
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = distances[i];
    int j = 1;
    if (width > 0.0) {
      j = std::clamp(static_cast<int>(std::ceil(d / width)), 1, used_bins);
      // keep membership consistent with the reported interval bounds
      while (j > 1 && d <= all[static_cast<std::size_t>(j - 1)].low) --j;
      while (j < used_bins && d > all[static_cast<std::size_t>(j - 1)].high) ++j;
    }
    auto& bin = all[static_cast<std::size_t>(j - 1)];
    bin.members.push_back(i);
    bin.mean_distance += d;
    bin.mean_accuracy += accuracies[i];
  }
  std::vector<DiagramBin> out;
  for (auto& bin : all) {
    if (bin.members.empty()) continue;
    bin.count = bin.members.size();
    bin.mean_distance /= static_cast<double>(bin.count);
    bin.mean_accuracy /= static_cast<double>(bin.count);
    out.push_back(std::move(bin));
  }
  return out;
}

/// Mean over test tasks of KL[q(.; lambda_test) || q(.; lambda_train_d)] for every training task d.
inline Eigen::VectorXd selection_scores(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                                        unsigned threads = 1) {
  const DistanceReport report = distance_matrix(test, train, threads);
  return report.kl.colwise().mean().transpose();
}

/// Indices of the `count` training tasks with the smallest score, ordered by
/// score with ties broken by index.
inline std::vector<std::size_t> select_tasks(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                                             std::size_t count, unsigned threads = 1) {
  if (count > static_cast<std::size_t>(train.rows())) {
    throw ArgumentError("select_tasks: asked for " + std::to_string(count) + " of " +
                        std::to_string(train.rows()) + " training tasks");
  }
  if (count == 0) return {};
  const Eigen::VectorXd scores = selection_scores(train, test, threads);
  std::vector<std::size_t> order(static_cast<std::size_t>(train.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  order.resize(count);
  return order;
}

}  // namespace ldcc
