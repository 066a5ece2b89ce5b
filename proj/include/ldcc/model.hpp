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

// Global model parameters: K Gaussian image-themes (mean, covariance) shared
// by every task, the L x K Dirichlet rows generating class-level image-theme
// mixtures, and the task-theme prior delta.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "ldcc/error.hpp"
#include "ldcc/random.hpp"
#include "ldcc/task.hpp"

namespace ldcc {

inline constexpr double kDefaultJitter = 1e-6;

class ThemeModel {
 public:
  /// Validates and factorises every covariance. Throws ModelError on any
  /// violated invariant.
  ThemeModel(Eigen::MatrixXd mu, std::vector<Eigen::MatrixXd> sigma, Eigen::MatrixXd alpha,
             Eigen::VectorXd delta)
      : mu_(std::move(mu)), sigma_(std::move(sigma)), alpha_(std::move(alpha)), delta_(std::move(delta)) {
    const Eigen::Index k_count = mu_.rows();
    const Eigen::Index dim = mu_.cols();
    if (k_count < 1 || dim < 1) throw ModelError("model needs K >= 1 image-themes of dimension D >= 1");
    if (alpha_.rows() < 1) throw ModelError("model needs L >= 1 task-themes");
    if (alpha_.cols() != k_count) {
      throw ModelError("alpha has " + std::to_string(alpha_.cols()) + " columns, expected K = " +
                       std::to_string(k_count));
    }
    if (delta_.size() != alpha_.rows()) {
      throw ModelError("delta has " + std::to_string(delta_.size()) + " entries, expected L = " +
                       std::to_string(alpha_.rows()));
    }
    if (static_cast<Eigen::Index>(sigma_.size()) != k_count) {
      throw ModelError("expected " + std::to_string(k_count) + " covariance matrices, got " +
                       std::to_string(sigma_.size()));
    }
    if (!mu_.allFinite()) throw ModelError("mu contains non-finite values");
    if (!alpha_.allFinite() || (alpha_.array() <= 0.0).any()) {
      throw ModelError("alpha entries must be finite and strictly positive");
    }
    if (!delta_.allFinite() || (delta_.array() <= 0.0).any()) {
      throw ModelError("delta entries must be finite and strictly positive");
    }
    chol_.reserve(sigma_.size());
    log_det_.resize(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
      auto& s = sigma_[k];
      if (s.rows() != dim || s.cols() != dim) {
        throw ModelError("covariance " + std::to_string(k) + " is not " + std::to_string(dim) + "x" +
                         std::to_string(dim));
      }
      if (!s.allFinite()) throw ModelError("covariance " + std::to_string(k) + " is not finite");
      const double scale = s.cwiseAbs().maxCoeff();
      if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ModelError("covariance " + std::to_string(k) + " is not symmetric");
      }
      s = 0.5 * (s + s.transpose()).eval();
      Eigen::LLT<Eigen::MatrixXd> llt(s);
      if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
        throw ModelError("covariance " + std::to_string(k) + " is not positive definite");
      }
      log_det_[k] = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      chol_.push_back(std::move(llt));
    }
  }

  Eigen::Index num_task_themes() const noexcept { return alpha_.rows(); }
  Eigen::Index num_image_themes() const noexcept { return mu_.rows(); }
  Eigen::Index dimension() const noexcept { return mu_.cols(); }

  const Eigen::MatrixXd& mu() const noexcept { return mu_; }
  const std::vector<Eigen::MatrixXd>& sigma() const noexcept { return sigma_; }
  const Eigen::MatrixXd& sigma(Eigen::Index k) const { return sigma_[k]; }
  const Eigen::LLT<Eigen::MatrixXd>& cholesky(Eigen::Index k) const { return chol_[k]; }
  double log_det(Eigen::Index k) const { return log_det_[k]; }
  const Eigen::MatrixXd& alpha() const noexcept { return alpha_; }
  const Eigen::VectorXd& delta() const noexcept { return delta_; }

 private:
  Eigen::MatrixXd mu_;
  std::vector<Eigen::MatrixXd> sigma_;
  Eigen::MatrixXd alpha_;
  Eigen::VectorXd delta_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
  Eigen::VectorXd log_det_;
};

/// Hyper-parameters of online training and of the per-task E-step.
struct TrainConfig {
  double tau0 = 100.0;          // learning-rate delay, >= 0
  double tau1 = 0.51;           // forgetting exponent, in (0.5, 1]
  std::size_t batch_size = 500;
  double e_tol = 1e-3;          // mean absolute change in lambda (and gamma) per sweep
  int max_e_iters = 100;
  double jitter = kDefaultJitter;
  std::uint64_t seed = 0;
  std::size_t max_batches = 300;
  double delta = 0.5;           // symmetric task-theme prior
  unsigned threads = 0;         // 0: all hardware threads

  void validate() const {
    if (!(tau0 >= 0.0) || !std::isfinite(tau0)) throw ArgumentError("tau0 must be finite and >= 0");
    if (!(tau1 > 0.5 && tau1 <= 1.0)) {
      throw ArgumentError("tau1 must lie in (0.5, 1] so the learning-rate schedule converges, got " +
                          std::to_string(tau1));
    }
    if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
    if (!(e_tol > 0.0)) throw ArgumentError("E-step tolerance must be positive");
    if (max_e_iters < 1) throw ArgumentError("max E-step iterations must be at least 1");
    if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ArgumentError("jitter must be finite and >= 0");
    if (max_batches < 1) throw ArgumentError("max batches must be at least 1");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ArgumentError("delta must be finite and positive");
  }
};

/// Log density of N(x; mu_k, Sigma_k) through the cached Cholesky factor.
inline double gaussian_log_pdf(const ThemeModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                               Eigen::Index k) {
  if (k < 0 || k >= model.num_image_themes()) {
    throw ArgumentError("image-theme index " + std::to_string(k) + " out of range");
  }
  if (x.size() != model.dimension()) {
    throw ArgumentError("sample has dimension " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(model.dimension()));
  }
  if (!x.allFinite()) throw DomainError("gaussian_log_pdf: sample contains non-finite values");
  Eigen::VectorXd diff = x - model.mu().row(k).transpose();
  model.cholesky(k).matrixL().solveInPlace(diff);
  const double dim = static_cast<double>(model.dimension());
  return -0.5 * (dim * std::log(2.0 * std::numbers::pi) + model.log_det(k) + diff.squaredNorm());
}

namespace detail {

/// Row-wise log densities of one sample block under every image-theme (N x K).
inline Eigen::MatrixXd block_log_pdf(const ThemeModel& model, const SampleMatrix& block) {
  const Eigen::Index n = block.rows();
  const Eigen::Index k_count = model.num_image_themes();
  const double constant = static_cast<double>(model.dimension()) * std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd out(n, k_count);
  Eigen::MatrixXd centred(model.dimension(), n);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    centred = (block.rowwise() - model.mu().row(k)).transpose();
    model.cholesky(k).matrixL().solveInPlace(centred);
    out.col(k) = -0.5 * (centred.colwise().squaredNorm().transpose().array() + constant + model.log_det(k));
  }
  return out;
}

}  // namespace detail

/// Initial model: means are K distinct data rows picked by D^2 (k-means++)
/// seeding, every covariance is the pooled sample covariance (1/n
/// normalisation) plus jitter * I, alpha is all ones and delta symmetric.
inline ThemeModel init_model(const TaskCollection& sample, Eigen::Index num_task_themes,
                             Eigen::Index num_image_themes, double delta_value, std::uint64_t seed,
                             double jitter = kDefaultJitter) {
  sample.validate();
  if (num_task_themes < 1 || num_image_themes < 1) throw ArgumentError("L and K must be at least 1");
  if (!(delta_value > 0.0)) throw ArgumentError("delta must be positive");

  std::vector<const double*> rows;
  for (const auto& task : sample.tasks)
    for (const auto& block : task.classes)
      for (Eigen::Index n = 0; n < block.rows(); ++n) rows.push_back(block.row(n).data());
  const auto count = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index dim = sample.dimension;
  if (num_image_themes > count) {
    throw ArgumentError("K = " + std::to_string(num_image_themes) + " exceeds the " +
                        std::to_string(count) + " available samples");
  }
  auto row = [&](Eigen::Index i) { return Eigen::Map<const Eigen::RowVectorXd>(rows[i], dim); };

  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < count; ++i) mean += row(i);
  mean /= static_cast<double>(count);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::RowVectorXd centred = row(i) - mean;
    cov.noalias() += centred.transpose() * centred;
  }
  cov /= static_cast<double>(count);
  cov.diagonal().array() += jitter;

  Xoshiro256 rng(seed, 0x696e6974ULL);
  std::vector<bool> taken(count, false);
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(count, std::numeric_limits<double>::infinity());
  Eigen::MatrixXd mu(num_image_themes, dim);
  for (Eigen::Index k = 0; k < num_image_themes; ++k) {
    Eigen::Index pick = 0;
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(count);
    for (Eigen::Index i = 0; i < count; ++i) weights[i] = taken[i] ? 0.0 : (k == 0 ? 1.0 : nearest[i]);
    if (weights.sum() > 0.0) {
      pick = sample_categorical(rng, weights);
    } else {
      // remaining rows duplicate chosen ones; fall back to any unused index
      for (Eigen::Index i = 0; i < count; ++i) weights[i] = taken[i] ? 0.0 : 1.0;
      pick = sample_categorical(rng, weights);
    }
    taken[pick] = true;
    mu.row(k) = row(pick);
    for (Eigen::Index i = 0; i < count; ++i) {
      nearest[i] = std::min(nearest[i], (row(i) - mu.row(k)).squaredNorm());
    }
  }

  return ThemeModel(std::move(mu), std::vector<Eigen::MatrixXd>(num_image_themes, cov),
                    Eigen::MatrixXd::Ones(num_task_themes, num_image_themes),
                    Eigen::VectorXd::Constant(num_task_themes, delta_value));
}

// ---------------------------------------------------------------------------
// Checkpoint persistence (JSON, full-precision decimals).

inline nlohmann::json model_to_json(const ThemeModel& model) {
  using nlohmann::json;
  json out;
  out["version"] = 1;
  out["L"] = model.num_task_themes();
  out["K"] = model.num_image_themes();
  out["D"] = model.dimension();
  out["delta"] = std::vector<double>(model.delta().data(), model.delta().data() + model.delta().size());
  json alpha = json::array();
  for (Eigen::Index l = 0; l < model.num_task_themes(); ++l) {
    json row = json::array();
    for (Eigen::Index k = 0; k < model.num_image_themes(); ++k) row.push_back(model.alpha()(l, k));
    alpha.push_back(std::move(row));
  }
  out["alpha"] = std::move(alpha);
  json mu = json::array();
  json sigma = json::array();
  for (Eigen::Index k = 0; k < model.num_image_themes(); ++k) {
    json mean = json::array();
    json cov = json::array();
    for (Eigen::Index i = 0; i < model.dimension(); ++i) {
      mean.push_back(model.mu()(k, i));
      json cov_row = json::array();
      for (Eigen::Index j = 0; j < model.dimension(); ++j) cov_row.push_back(model.sigma(k)(i, j));
      cov.push_back(std::move(cov_row));
    }
    mu.push_back(std::move(mean));
    sigma.push_back(std::move(cov));
  }
  out["mu"] = std::move(mu);
  out["sigma"] = std::move(sigma);
  return out;
}

inline ThemeModel model_from_json(const nlohmann::json& in) {
  try {
    if (in.at("version").get<int>() != 1) throw CheckpointError("unsupported checkpoint version");
    const auto l_count = in.at("L").get<Eigen::Index>();
    const auto k_count = in.at("K").get<Eigen::Index>();
    const auto dim = in.at("D").get<Eigen::Index>();
    if (l_count < 1 || k_count < 1 || dim < 1) throw CheckpointError("L, K and D must be positive");

    auto matrix = [](const nlohmann::json& rows, Eigen::Index r, Eigen::Index c, const char* name) {
      if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != r) {
        throw CheckpointError(std::string(name) + " has the wrong number of rows");
      }
      Eigen::MatrixXd m(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
          throw CheckpointError(std::string(name) + " row " + std::to_string(i) + " has the wrong length");
        }
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
      }
      return m;
    };

    const auto& delta_json = in.at("delta");
    if (!delta_json.is_array() || static_cast<Eigen::Index>(delta_json.size()) != l_count) {
      throw CheckpointError("delta must have L entries");
    }
    Eigen::VectorXd delta(l_count);
    for (Eigen::Index l = 0; l < l_count; ++l) delta[l] = delta_json[static_cast<std::size_t>(l)].get<double>();

    Eigen::MatrixXd alpha = matrix(in.at("alpha"), l_count, k_count, "alpha");
    Eigen::MatrixXd mu = matrix(in.at("mu"), k_count, dim, "mu");
    const auto& sigma_json = in.at("sigma");
    if (!sigma_json.is_array() || static_cast<Eigen::Index>(sigma_json.size()) != k_count) {
      throw CheckpointError("sigma must hold K matrices");
    }
    std::vector<Eigen::MatrixXd> sigma;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      sigma.push_back(matrix(sigma_json[static_cast<std::size_t>(k)], dim, dim, "sigma"));
    }
    return ThemeModel(std::move(mu), std::move(sigma), std::move(alpha), std::move(delta));
  } catch (const ModelError& e) {
    throw CheckpointError(std::string("checkpoint failed validation: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_model(const ThemeModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw ArgumentError("failed writing '" + path.string() + "'");
}

inline ThemeModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace ldcc
