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

// Global updates: pooled Gaussian M-step, Newton step for the Dirichlet rows
// alpha, the Robbins-Monro learning rate and the online mini-batch driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ldcc/error.hpp"
#include "ldcc/inference.hpp"
#include "ldcc/model.hpp"
#include "ldcc/parallel.hpp"
#include "ldcc/random.hpp"
#include "ldcc/specfn.hpp"
#include "ldcc/task.hpp"

namespace ldcc {

inline constexpr double kAlphaFloor = 1e-6;
inline constexpr double kMinThemeMass = 1e-8;

/// Responsibility-weighted sufficient statistics of the image-themes.
struct LocalThemeStats {
  Eigen::MatrixXd task_mass;                 // tasks x K, N_dk
  Eigen::VectorXd mass;                      // K, sum_d N_dk
  Eigen::MatrixXd weighted_sum;              // K x D, sum r x
  std::vector<Eigen::MatrixXd> scatter;      // K of D x D, sum r x x^T
  double sample_count = 0.0;
};

inline LocalThemeStats accumulate_stats(std::span<const Task* const> tasks,
                                        std::span<const VariationalState> states) {
  if (tasks.size() != states.size()) {
    throw ArgumentError("accumulate_stats: " + std::to_string(tasks.size()) + " tasks but " +
                        std::to_string(states.size()) + " states");
  }
  if (tasks.empty()) throw ArgumentError("accumulate_stats: empty batch");
  const Eigen::Index dim = tasks.front()->dimension();
  const Eigen::Index k_count = states.front().gamma.cols();
  LocalThemeStats stats;
  stats.task_mass = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tasks.size()), k_count);
  stats.mass = Eigen::VectorXd::Zero(k_count);
  stats.weighted_sum = Eigen::MatrixXd::Zero(k_count, dim);
  stats.scatter.assign(k_count, Eigen::MatrixXd::Zero(dim, dim));

  for (std::size_t d = 0; d < tasks.size(); ++d) {
    const Task& task = *tasks[d];
    const VariationalState& state = states[d];
    if (task.dimension() != dim) throw ArgumentError("accumulate_stats: tasks differ in dimension");
    if (static_cast<Eigen::Index>(state.r.size()) != task.num_classes()) {
      throw ArgumentError("accumulate_stats: state of task '" + task.id + "' has the wrong class count");
    }
    for (Eigen::Index c = 0; c < task.num_classes(); ++c) {
      const SampleMatrix& x = task.classes[c];
      const Eigen::MatrixXd& r = state.r[c];
      if (r.rows() != x.rows() || r.cols() != k_count) {
        throw ArgumentError("accumulate_stats: responsibilities of task '" + task.id + "' have the wrong shape");
      }
      stats.task_mass.row(static_cast<Eigen::Index>(d)) += r.colwise().sum();
      stats.weighted_sum.noalias() += r.transpose() * x;
      for (Eigen::Index k = 0; k < k_count; ++k) {
        stats.scatter[k].noalias() += x.transpose() * r.col(k).asDiagonal() * x;
      }
      stats.sample_count += static_cast<double>(x.rows());
    }
  }
  stats.mass = stats.task_mass.colwise().sum().transpose();
  return stats;
}

inline LocalThemeStats accumulate_stats(std::span<const Task> tasks, std::span<const VariationalState> states) {
  std::vector<const Task*> ptrs;
  ptrs.reserve(tasks.size());
  for (const auto& t : tasks) ptrs.push_back(&t);
  return accumulate_stats(std::span<const Task* const>(ptrs), states);
}

/// Maximisers of the Gaussian part of the bound for the pooled statistics.
struct LocalThemes {
  Eigen::MatrixXd mu;
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<bool> kept_previous;  // theme had (almost) no mass
};

inline LocalThemes local_mstep(const LocalThemeStats& stats, double jitter, const ThemeModel& previous) {
  const Eigen::Index k_count = stats.mass.size();
  const Eigen::Index dim = stats.weighted_sum.cols();
  if (k_count != previous.num_image_themes() || dim != previous.dimension()) {
    throw ArgumentError("local_mstep: statistics do not match the model shape");
  }
  LocalThemes out;
  out.mu.resize(k_count, dim);
  out.sigma.resize(k_count);
  out.kept_previous.assign(k_count, false);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double mass = stats.mass[k];
    if (!(mass >= kMinThemeMass)) {
      out.mu.row(k) = previous.mu().row(k);
      out.sigma[k] = previous.sigma(k);
      out.kept_previous[k] = true;
      continue;
    }
    const Eigen::RowVectorXd mean = stats.weighted_sum.row(k) / mass;
    Eigen::MatrixXd cov = stats.scatter[k] / mass - mean.transpose() * mean;
    cov = 0.5 * (cov + cov.transpose()).eval();
    cov.diagonal().array() += jitter;
    out.mu.row(k) = mean;
    out.sigma[k] = std::move(cov);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dirichlet rows alpha.

/// The alpha-dependent part of the bound summed over a batch:
///   sum_d sum_c sum_l eta_dcl [ln Gamma(sum_k alpha_lk) - sum_k ln Gamma(alpha_lk)
///                               + sum_k (alpha_lk - 1) E[ln theta_dck]].
inline double alpha_objective(std::span<const VariationalState> states, const Eigen::MatrixXd& alpha) {
  const Eigen::VectorXd log_b = detail::alpha_log_normalisers(alpha);
  double total = 0.0;
  for (const auto& state : states) {
    for (Eigen::Index c = 0; c < state.gamma.rows(); ++c) {
      const Eigen::VectorXd log_theta = dirichlet_expected_log(state.gamma.row(c).transpose());
      const Eigen::VectorXd per_theme = -log_b + (alpha.array() - 1.0).matrix() * log_theta;
      total += state.eta.row(c).dot(per_theme);
    }
  }
  return total;
}

/// d/d alpha_lk of alpha_objective:
///   sum_d sum_c eta_dcl [psi(sum_j alpha_lj) - psi(alpha_lk) + E[ln theta_dck]].
inline Eigen::MatrixXd alpha_gradient(std::span<const VariationalState> states, const Eigen::MatrixXd& alpha) {
  const Eigen::Index l_count = alpha.rows();
  const Eigen::Index k_count = alpha.cols();
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(l_count);      // sum eta_dcl
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(l_count, k_count);  // sum eta_dcl E[ln theta_dck]
  for (const auto& state : states) {
    if (state.eta.cols() != l_count || state.gamma.cols() != k_count) {
      throw ArgumentError("alpha_gradient: state shape does not match alpha");
    }
    for (Eigen::Index c = 0; c < state.gamma.rows(); ++c) {
      const Eigen::VectorXd log_theta = dirichlet_expected_log(state.gamma.row(c).transpose());
      weight += state.eta.row(c).transpose();
      expected.noalias() += state.eta.row(c).transpose() * log_theta.transpose();
    }
  }
  Eigen::MatrixXd g(l_count, k_count);
  for (Eigen::Index l = 0; l < l_count; ++l) {
    const double psi_total = digamma(alpha.row(l).sum());
    for (Eigen::Index k = 0; k < k_count; ++k) {
      g(l, k) = weight[l] * (psi_total - digamma(alpha(l, k))) + expected(l, k);
    }
  }
  return g;
}

/// Gradient and the structured Hessian H_l = diag(q_l) + u_l 1 1^T of each
/// alpha row, with q_lk = -n_l psi'(alpha_lk), u_l = n_l psi'(sum_k alpha_lk)
/// and n_l = sum_d sum_c eta_dcl.
struct AlphaNewtonWork {
  Eigen::MatrixXd g;       // L x K
  Eigen::MatrixXd q_diag;  // L x K
  Eigen::VectorXd u;       // L
  Eigen::VectorXd b;       // L, filled by alpha_newton_direction
};

inline AlphaNewtonWork alpha_newton_work(std::span<const VariationalState> states, const Eigen::MatrixXd& alpha) {
  AlphaNewtonWork work;
  work.g = alpha_gradient(states, alpha);
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(alpha.rows());
  for (const auto& state : states) weight += state.eta.colwise().sum().transpose();
  work.q_diag.resize(alpha.rows(), alpha.cols());
  work.u.resize(alpha.rows());
  work.b = Eigen::VectorXd::Zero(alpha.rows());
  for (Eigen::Index l = 0; l < alpha.rows(); ++l) {
    for (Eigen::Index k = 0; k < alpha.cols(); ++k) work.q_diag(l, k) = -weight[l] * trigamma(alpha(l, k));
    work.u[l] = weight[l] * trigamma(alpha.row(l).sum());
  }
  return work;
}

/// H^{-1} g row by row via Sherman-Morrison:
///   (H^{-1} g)_lk = (g_lk - b_l) / q_lk,  b_l = sum_j (g_lj / q_lj) / (1/u_l + sum_j 1/q_lj).
/// Rows without any assignment mass get a zero direction; a vanishing
/// denominator falls back to the diagonal-only direction g / q.
inline Eigen::MatrixXd alpha_newton_direction(AlphaNewtonWork& work) {
  const Eigen::Index l_count = work.g.rows();
  const Eigen::Index k_count = work.g.cols();
  Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(l_count, k_count);
  work.b = Eigen::VectorXd::Zero(l_count);
  for (Eigen::Index l = 0; l < l_count; ++l) {
    const auto q = work.q_diag.row(l).array();
    if ((q == 0.0).any() || !(work.u[l] != 0.0)) continue;
    const double inv_q_sum = q.inverse().sum();
    const double denom = 1.0 / work.u[l] + inv_q_sum;
    const double scale = std::abs(1.0 / work.u[l]) + q.inverse().abs().sum();
    if (std::abs(denom) <= 1e-12 * scale) {
      dir.row(l) = (work.g.row(l).array() / q).matrix();
      continue;
    }
    work.b[l] = (work.g.row(l).array() / q).sum() / denom;
    dir.row(l) = ((work.g.row(l).array() - work.b[l]) / q).matrix();
  }
  return dir;
}

inline Eigen::MatrixXd alpha_newton_direction(const AlphaNewtonWork& work) {
  AlphaNewtonWork copy = work;
  return alpha_newton_direction(copy);
}

/// rho_d = (tau0 + d)^(-tau1), d >= 1.
inline double learning_rate(double tau0, double tau1, std::size_t d) {
  if (d < 1) throw ArgumentError("learning_rate: batch index starts at 1");
  return std::pow(tau0 + static_cast<double>(d), -tau1);
}

/// mu <- (1-rho) mu + rho mu~, Sigma <- (1-rho) Sigma + rho Sigma~,
/// alpha <- alpha - rho H^{-1} g. A step that would make some alpha entry
/// non-positive is halved up to 20 times; survivors are floored at 1e-6.
inline ThemeModel online_update(const ThemeModel& model, const LocalThemes& local,
                                const Eigen::MatrixXd& newton_dir, double rho, double jitter = kDefaultJitter) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ArgumentError("online_update: rho must lie in [0, 1]");
  const Eigen::Index k_count = model.num_image_themes();
  if (local.mu.rows() != k_count || static_cast<Eigen::Index>(local.sigma.size()) != k_count ||
      newton_dir.rows() != model.alpha().rows() || newton_dir.cols() != model.alpha().cols()) {
    throw ArgumentError("online_update: local values do not match the model shape");
  }
  Eigen::MatrixXd mu = (1.0 - rho) * model.mu() + rho * local.mu;
  std::vector<Eigen::MatrixXd> sigma(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) sigma[k] = (1.0 - rho) * model.sigma(k) + rho * local.sigma[k];

  Eigen::MatrixXd step = rho * newton_dir;
  for (int halving = 0; halving < 20 && ((model.alpha() - step).array() <= 0.0).any(); ++halving) step *= 0.5;
  Eigen::MatrixXd alpha = (model.alpha() - step).cwiseMax(kAlphaFloor);
  if (!alpha.allFinite()) throw NumericError("online_update: alpha became non-finite");

  // Convex combinations of SPD matrices are SPD; rounding can still break the
  // factorisation of a nearly singular theme, so retry with added jitter.
  const double bump = jitter > 0.0 ? jitter : 1e-12;
  for (int attempt = 0;; ++attempt) {
    try {
      return ThemeModel(mu, sigma, alpha, model.delta());
    } catch (const ModelError& e) {
      if (attempt == 3) throw NumericError(std::string("online_update: ") + e.what());
      for (auto& s : sigma) s.diagonal().array() += bump;
    }
  }
}

// ---------------------------------------------------------------------------
// Training driver.

struct BatchDiagnostics {
  std::size_t batch = 0;  // 1-based
  double rho = 0.0;
  double mean_elbo = 0.0;  // under the model used for the batch's E-steps
  double alpha_min = 0.0;  // after the update
  double alpha_max = 0.0;
  double estep_iters_mean = 0.0;
  int gamma_clamps = 0;
  int themes_kept = 0;  // image-themes without mass in this batch
};

struct TrainResult {
  ThemeModel model;
  std::vector<BatchDiagnostics> log;
};

using BatchObserver = std::function<void(const BatchDiagnostics&, const ThemeModel&)>;

/// Online training. Tasks are visited in a seeded shuffled order, one epoch
/// after another, in batches of config.batch_size (the last batch of an epoch
/// may be shorter). Each batch: E-steps in parallel, one pooled M-step over the
/// batch (so local themes are responsibility-mass weighted averages of the
/// per-task maximisers), a Newton step for alpha, and an online update with
/// rho indexed by the batch counter.
inline TrainResult train(const TaskCollection& tasks, Eigen::Index num_task_themes, Eigen::Index num_image_themes,
                         const TrainConfig& config, const BatchObserver& observer = {}) {
  config.validate();
  if (tasks.tasks.empty()) throw ArgumentError("train: empty task collection");
  tasks.validate();

  ThemeModel model = init_model(tasks, num_task_themes, num_image_themes, config.delta, config.seed, config.jitter);
  TrainResult result{model, {}};

  const std::size_t total = tasks.size();
  std::vector<std::size_t> order(total);
  std::size_t cursor = total;
  std::size_t epoch = 0;

  for (std::size_t batch = 1; batch <= config.max_batches; ++batch) {
    if (cursor == total) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Xoshiro256 shuffle_rng(config.seed, stream_id(0x73687566ULL, epoch++));
      for (std::size_t i = total; i > 1; --i) {
        const auto j = static_cast<std::size_t>(sample_uniform(shuffle_rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
      }
      cursor = 0;
    }
    const std::size_t size = std::min(config.batch_size, total - cursor);
    std::vector<const Task*> members(size);
    std::vector<std::size_t> indices(size);
    for (std::size_t i = 0; i < size; ++i) {
      indices[i] = order[cursor + i];
      members[i] = &tasks.tasks[indices[i]];
    }
    cursor += size;

    std::vector<VariationalState> states(size);
    std::vector<double> elbos(size);
    std::vector<int> iters(size);
    std::vector<int> clamps(size);
    parallel_for(size, config.threads, [&](std::size_t i) {
      EStepResult e = run_estep(*members[i], result.model, config, stream_id(batch, indices[i]));
      elbos[i] = elbo(*members[i], e.state, result.model);
      iters[i] = e.iterations;
      clamps[i] = e.gamma_clamps;
      states[i] = std::move(e.state);
    });

    const LocalThemeStats stats = accumulate_stats(std::span<const Task* const>(members), states);
    const LocalThemes local = local_mstep(stats, config.jitter, result.model);
    const Eigen::MatrixXd direction =
        alpha_newton_direction(alpha_newton_work(states, result.model.alpha()));
    const double rho = learning_rate(config.tau0, config.tau1, batch);
    result.model = online_update(result.model, local, direction, rho, config.jitter);

    BatchDiagnostics diag;
    diag.batch = batch;
    diag.rho = rho;
    diag.mean_elbo = std::accumulate(elbos.begin(), elbos.end(), 0.0) / static_cast<double>(size);
    diag.alpha_min = result.model.alpha().minCoeff();
    diag.alpha_max = result.model.alpha().maxCoeff();
    diag.estep_iters_mean = std::accumulate(iters.begin(), iters.end(), 0.0) / static_cast<double>(size);
    diag.gamma_clamps = std::accumulate(clamps.begin(), clamps.end(), 0);
    diag.themes_kept = static_cast<int>(std::count(local.kept_previous.begin(), local.kept_previous.end(), true));
    result.log.push_back(diag);
    if (observer) observer(diag, result.model);
  }
  return result;
}

}  // namespace ldcc
