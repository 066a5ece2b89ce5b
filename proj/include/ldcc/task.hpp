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

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ldcc/error.hpp"

namespace ldcc {

/// N x D block of samples; one row per sample.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A classification task: one sample block per class. Classes may hold
/// different numbers of samples but share the feature dimension.
struct Task {
  std::string id;
  std::vector<SampleMatrix> classes;

  Eigen::Index num_classes() const noexcept { return static_cast<Eigen::Index>(classes.size()); }
  Eigen::Index dimension() const noexcept { return classes.empty() ? 0 : classes.front().cols(); }

  Eigen::Index num_samples() const noexcept {
    Eigen::Index total = 0;
    for (const auto& block : classes) total += block.rows();
    return total;
  }

  void validate() const {
    if (classes.empty()) throw ArgumentError("task '" + id + "': needs at least one class");
    const Eigen::Index dim = dimension();
    if (dim < 1) throw ArgumentError("task '" + id + "': dimension must be at least 1");
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto& block = classes[c];
      if (block.rows() < 1) {
        throw ArgumentError("task '" + id + "': class " + std::to_string(c) + " has no samples");
      }
      if (block.cols() != dim) {
        throw ArgumentError("task '" + id + "': class " + std::to_string(c) +
                            " has dimension " + std::to_string(block.cols()) + ", expected " +
                            std::to_string(dim));
      }
      if (!block.allFinite()) {
        throw ArgumentError("task '" + id + "': class " + std::to_string(c) +
                            " contains non-finite values");
      }
    }
  }
};

/// Ordered set of tasks sharing one feature dimension.
struct TaskCollection {
  std::vector<Task> tasks;
  Eigen::Index dimension = 0;

  std::size_t size() const noexcept { return tasks.size(); }

  void validate() const {
    if (tasks.empty()) throw ArgumentError("task collection is empty");
    std::unordered_set<std::string> seen;
    for (const auto& task : tasks) {
      task.validate();
      if (task.dimension() != dimension) {
        throw ArgumentError("task '" + task.id + "' has dimension " +
                            std::to_string(task.dimension()) + ", collection expects " +
                            std::to_string(dimension));
      }
      if (!seen.insert(task.id).second) throw ArgumentError("duplicate task id '" + task.id + "'");
    }
  }
};

}  // namespace ldcc
