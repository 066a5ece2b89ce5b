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

// Per-task E-step: coordinate ascent over the variational parameters
//   r     (per sample, K-simplex)   q(z_dcn)
//   gamma (per class, K positive)   q(theta_dc)
//   eta   (per class, L-simplex)    q(y_dc)
//   lambda (per task, L positive)   q(phi_d)
// together with the evidence lower bound they maximise.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ldcc/error.hpp"
#include "ldcc/model.hpp"
#include "ldcc/random.hpp"
#include "ldcc/specfn.hpp"
#include "ldcc/task.hpp"

namespace ldcc {

inline constexpr double kGammaFloor = 1e-8;

struct VariationalState {
  std::vector<Eigen::MatrixXd> r;  // per class: N_c x K responsibilities
  Eigen::MatrixXd gamma;           // C x K
  Eigen::MatrixXd eta;             // C x L
  Eigen::VectorXd lambda;          // L
};

/// E[ln x] under Dir(u): psi(u_k) - psi(sum_j u_j).
inline Eigen::VectorXd dirichlet_expected_log(const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() == 0) throw DomainError("dirichlet_expected_log: empty parameter vector");
  const double total = digamma(u.sum());
  Eigen::VectorXd out(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) out[k] = digamma(u[k]) - total;
  return out;
}

namespace detail {

// Shared by update_r and run_estep; loglik is N_c x K.
inline void update_r_from_loglik(const Eigen::MatrixXd& loglik, Eigen::Index c, VariationalState& state) {
  const Eigen::VectorXd log_theta = dirichlet_expected_log(state.gamma.row(c).transpose());
  Eigen::MatrixXd& r = state.r[c];
  r.resize(loglik.rows(), loglik.cols());
  Eigen::VectorXd logits(loglik.cols());
  for (Eigen::Index n = 0; n < loglik.rows(); ++n) {
    logits = log_theta + loglik.row(n).transpose();
    const double norm = log_sum_exp(logits);
    if (!std::isfinite(norm)) throw NumericError("update_r: responsibilities cannot be normalised");
    r.row(n) = (logits.array() - norm).exp().transpose();
  }
}

inline Eigen::VectorXd alpha_log_normalisers(const Eigen::MatrixXd& alpha) {
  Eigen::VectorXd out(alpha.rows());
  for (Eigen::Index l = 0; l < alpha.rows(); ++l) out[l] = log_beta_dirichlet(alpha.row(l).transpose());
  return out;
}

inline void update_eta_with(const Eigen::MatrixXd& alpha, const Eigen::VectorXd& log_b_alpha, Eigen::Index c,
                            VariationalState& state) {
  const Eigen::VectorXd log_phi = dirichlet_expected_log(state.lambda);
  const Eigen::VectorXd log_theta = dirichlet_expected_log(state.gamma.row(c).transpose());
  const Eigen::VectorXd logits =
      log_phi - log_b_alpha + (alpha.array() - 1.0).matrix() * log_theta;
  const double norm = log_sum_exp(logits);
  if (!std::isfinite(norm)) throw NumericError("update_eta: assignment cannot be normalised");
  state.eta.row(c) = (logits.array() - norm).exp().transpose();
}

}  // namespace detail

/// r_cnk proportional to exp{E[ln theta_ck] + ln N(x_cn; mu_k, Sigma_k)}.
inline void update_r(const Task& task, Eigen::Index c, VariationalState& state, const ThemeModel& model) {
  detail::update_r_from_loglik(detail::block_log_pdf(model, task.classes[c]), c, state);
}

/// gamma_ck = 1 + sum_n r_cnk + sum_l eta_cl (alpha_lk - 1). Entries that
/// would fall below 1e-8 are clamped there; returns how many were clamped.
inline int update_gamma(VariationalState& state, Eigen::Index c, const Eigen::MatrixXd& alpha) {
  const Eigen::RowVectorXd counts = state.r[c].colwise().sum();
  const Eigen::RowVectorXd prior = state.eta.row(c) * (alpha.array() - 1.0).matrix();
  int clamped = 0;
  for (Eigen::Index k = 0; k < alpha.cols(); ++k) {
    double g = 1.0 + counts[k] + prior[k];
    if (!(g >= kGammaFloor)) {
      g = kGammaFloor;
      ++clamped;
    }
    state.gamma(c, k) = g;
  }
  return clamped;
}

/// eta_cl proportional to exp{E[ln phi_l] - ln B(alpha_l) + sum_k (alpha_lk - 1) E[ln theta_ck]}.
inline void update_eta(VariationalState& state, Eigen::Index c, const ThemeModel& model) {
  detail::update_eta_with(model.alpha(), detail::alpha_log_normalisers(model.alpha()), c, state);
}

/// lambda_l = delta_l + sum_c eta_cl.
inline void update_lambda(VariationalState& state, const Eigen::VectorXd& delta) {
  state.lambda = delta + state.eta.colwise().sum().transpose();
}

/// Starting point: r and eta rows drawn from a symmetric Dirichlet(100)
/// (near uniform, with enough noise to break theme symmetry), then gamma and
/// lambda from their update equations.
inline VariationalState init_state(const Task& task, const ThemeModel& model, Xoshiro256& rng) {
  const Eigen::Index classes = task.num_classes();
  const Eigen::Index k_count = model.num_image_themes();
  const Eigen::Index l_count = model.num_task_themes();
  const Eigen::VectorXd r_conc = Eigen::VectorXd::Constant(k_count, 100.0);
  const Eigen::VectorXd eta_conc = Eigen::VectorXd::Constant(l_count, 100.0);

  VariationalState state;
  state.r.resize(classes);
  state.gamma.resize(classes, k_count);
  state.eta.resize(classes, l_count);
  for (Eigen::Index c = 0; c < classes; ++c) {
    state.r[c].resize(task.classes[c].rows(), k_count);
    for (Eigen::Index n = 0; n < task.classes[c].rows(); ++n) {
      state.r[c].row(n) = sample_dirichlet(rng, r_conc).transpose();
    }
    state.eta.row(c) = sample_dirichlet(rng, eta_conc).transpose();
  }
  for (Eigen::Index c = 0; c < classes; ++c) update_gamma(state, c, model.alpha());
  update_lambda(state, model.delta());
  return state;
}

struct EStepResult {
  VariationalState state;
  int iterations = 0;
  bool converged = false;
  int gamma_clamps = 0;
};

/// Called after every sweep with the current state and 1-based sweep number.
using SweepObserver = std::function<void(const VariationalState&, int)>;

/// Coordinate ascent r -> gamma -> eta -> lambda until the mean absolute
/// change of lambda and of gamma in one sweep both drop below config.e_tol, or
/// config.max_e_iters sweeps have run. Initial noise comes from stream
/// `stream` of config.seed.
inline EStepResult run_estep(const Task& task, const ThemeModel& model, const TrainConfig& config,
                             std::uint64_t stream = 0, const SweepObserver& observer = {}) {
  if (task.dimension() != model.dimension()) {
    throw ArgumentError("task '" + task.id + "' has dimension " + std::to_string(task.dimension()) +
                        ", model expects " + std::to_string(model.dimension()));
  }
  const Eigen::Index classes = task.num_classes();
  std::vector<Eigen::MatrixXd> loglik(classes);
  for (Eigen::Index c = 0; c < classes; ++c) loglik[c] = detail::block_log_pdf(model, task.classes[c]);
  const Eigen::VectorXd log_b_alpha = detail::alpha_log_normalisers(model.alpha());

  Xoshiro256 rng(config.seed, stream);
  EStepResult result;
  result.state = init_state(task, model, rng);
  VariationalState& state = result.state;

  for (int sweep = 1; sweep <= config.max_e_iters; ++sweep) {
    const Eigen::VectorXd lambda_before = state.lambda;
    const Eigen::MatrixXd gamma_before = state.gamma;
    for (Eigen::Index c = 0; c < classes; ++c) {
      detail::update_r_from_loglik(loglik[c], c, state);
      result.gamma_clamps += update_gamma(state, c, model.alpha());
    }
    for (Eigen::Index c = 0; c < classes; ++c) detail::update_eta_with(model.alpha(), log_b_alpha, c, state);
    update_lambda(state, model.delta());
    result.iterations = sweep;
    if (observer) observer(state, sweep);

    const double lambda_change = (state.lambda - lambda_before).cwiseAbs().mean();
    const double gamma_change = (state.gamma - gamma_before).cwiseAbs().mean();
    if (lambda_change < config.e_tol && gamma_change < config.e_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evidence lower bound of a single task.

/// The nine expectations making up the per-task ELBO. The `q_*` members are
/// E[ln q(.)] (negative entropies) and enter the total with a minus sign.
struct ElboTerms {
  double p_x = 0.0;      // E[ln p(x | z, mu, Sigma)]
  double p_z = 0.0;      // E[ln p(z | theta)]
  double p_theta = 0.0;  // E[ln p(theta | y, alpha)]
  double p_y = 0.0;      // E[ln p(y | phi)]
  double p_phi = 0.0;    // E[ln p(phi | delta)]
  double q_z = 0.0;
  double q_theta = 0.0;
  double q_y = 0.0;
  double q_phi = 0.0;

  double total() const noexcept {
    return p_x + p_z + p_theta + p_y + p_phi - q_z - q_theta - q_y - q_phi;
  }
};

namespace detail {

// 0 ln 0 = 0
inline double sum_x_log_x(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      if (v > 0.0) acc += v * std::log(v);
    }
  return acc;
}

}  // namespace detail

inline ElboTerms elbo_terms(const Task& task, const VariationalState& state, const ThemeModel& model) {
  const Eigen::MatrixXd& alpha = model.alpha();
  const Eigen::VectorXd log_b_alpha = detail::alpha_log_normalisers(alpha);
  const Eigen::VectorXd log_phi = dirichlet_expected_log(state.lambda);
  ElboTerms t;
  for (Eigen::Index c = 0; c < task.num_classes(); ++c) {
    const Eigen::MatrixXd& r = state.r[c];
    const Eigen::VectorXd gamma = state.gamma.row(c).transpose();
    const Eigen::VectorXd eta = state.eta.row(c).transpose();
    const Eigen::VectorXd log_theta = dirichlet_expected_log(gamma);
    const Eigen::MatrixXd loglik = detail::block_log_pdf(model, task.classes[c]);

    t.p_x += r.cwiseProduct(loglik).sum();
    t.p_z += (r * log_theta).sum();
    t.p_theta += eta.dot(-log_b_alpha + (alpha.array() - 1.0).matrix() * log_theta);
    t.p_y += eta.dot(log_phi);
    t.q_z += detail::sum_x_log_x(r);
    t.q_theta += -log_beta_dirichlet(gamma) + (gamma.array() - 1.0).matrix().dot(log_theta);
    t.q_y += detail::sum_x_log_x(eta);
  }
  const Eigen::VectorXd& delta = model.delta();
  t.p_phi = -log_beta_dirichlet(delta) + (delta.array() - 1.0).matrix().dot(log_phi);
  t.q_phi = -log_beta_dirichlet(state.lambda) + (state.lambda.array() - 1.0).matrix().dot(log_phi);
  return t;
}

inline double elbo(const Task& task, const VariationalState& state, const ThemeModel& model) {
  return elbo_terms(task, state, model).total();
}

}  // namespace ldcc
