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
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ldcc/model.hpp"
#include "oracles.hpp"

namespace {

using fixtures::TempDir;

ldcc::ThemeModel one_theme(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  return ldcc::ThemeModel(mu.transpose(), {sigma}, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1));
}

void expect_same_model(const ldcc::ThemeModel& a, const ldcc::ThemeModel& b) {
  EXPECT_TRUE((a.mu().array() == b.mu().array()).all());
  EXPECT_TRUE((a.alpha().array() == b.alpha().array()).all());
  EXPECT_TRUE((a.delta().array() == b.delta().array()).all());
  ASSERT_EQ(a.sigma().size(), b.sigma().size());
  for (std::size_t k = 0; k < a.sigma().size(); ++k) EXPECT_TRUE((a.sigma()[k].array() == b.sigma()[k].array()).all());
}

TEST(GaussianLogPdf, HandValues) {
  const auto unit = one_theme(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_NEAR(ldcc::gaussian_log_pdf(unit, Eigen::VectorXd::Zero(1), 0), -0.9189385332, 1e-10);

  const Eigen::Vector3d mu(0.5, -1.0, 2.0);
  const auto at_mean = one_theme(mu, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_NEAR(ldcc::gaussian_log_pdf(at_mean, mu, 0), -1.5 * std::log(2.0 * std::numbers::pi), 1e-12);

  // -1/2 [2 ln 2pi + ln 4 + (2^2/4 + 1^2/1)]
  const auto diag = one_theme(Eigen::Vector2d(1, 0), Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix());
  const double hand = -0.5 * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(4.0) + 2.0);
  EXPECT_NEAR(hand, -3.5310242470, 1e-9);
  EXPECT_NEAR(ldcc::gaussian_log_pdf(diag, Eigen::Vector2d(3, 1), 0), hand, 1e-12);
}

TEST(GaussianLogPdf, ErrorPaths) {
  const auto unit = one_theme(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_THROW(ldcc::gaussian_log_pdf(unit, Eigen::Vector2d(0, std::nan("")), 0), ldcc::DomainError);
  EXPECT_THROW(ldcc::gaussian_log_pdf(unit, Eigen::Vector2d(0, 0), 1), ldcc::ArgumentError);
  EXPECT_THROW(ldcc::gaussian_log_pdf(unit, Eigen::Vector3d(0, 0, 0), 0), ldcc::ArgumentError);
}

TEST(GaussianLogPdf, IntegratesToOneInOneDimension) {
  std::mt19937_64 rng(3);
  const auto model = fixtures::random_model(2, 4, 1, rng);
  for (Eigen::Index k = 0; k < model.num_image_themes(); ++k) {
    const double mu = model.mu()(k, 0);
    const double sd = std::sqrt(model.sigma(k)(0, 0));
    const double lo = mu - 12 * sd, hi = mu + 12 * sd;
    const int steps = 20000;
    const double h = (hi - lo) / steps;
    double integral = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      integral += w * std::exp(ldcc::gaussian_log_pdf(model, Eigen::VectorXd::Constant(1, lo + i * h), k));
    }
    EXPECT_NEAR(integral * h, 1.0, 1e-4) << "theme " << k;
  }
}

TEST(GaussianLogPdf, FactorisationMatchesExplicitInverse) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (Eigen::Index dim = 1; dim <= 8; ++dim) {
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd mu(dim), x(dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        mu[i] = normal(rng);
        x[i] = normal(rng);
      }
      const Eigen::MatrixXd sigma = oracle::random_spd(dim, rng);
      const auto model = one_theme(mu, sigma);
      EXPECT_NEAR(ldcc::gaussian_log_pdf(model, x, 0), oracle::log_normal(x, mu, sigma), 1e-8);
    }
  }
}

TEST(ThemeModel, CachesLogDeterminant) {
  std::mt19937_64 rng(5);
  const auto model = fixtures::random_model(2, 3, 4, rng);
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_NEAR(model.log_det(k), std::log(model.sigma(k).determinant()), 1e-10);
  }
}

TEST(ThemeModel, RejectsInvalidParameters) {
  const Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(2, 2);
  const std::vector<Eigen::MatrixXd> spd(2, Eigen::MatrixXd::Identity(2, 2));
  const Eigen::MatrixXd alpha = Eigen::MatrixXd::Ones(1, 2);
  const Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  EXPECT_NO_THROW(ldcc::ThemeModel(mu, spd, alpha, delta));

  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  EXPECT_THROW(ldcc::ThemeModel(mu, {spd[0], indefinite}, alpha, delta), ldcc::ModelError);
  Eigen::MatrixXd asymmetric(2, 2);
  asymmetric << 2, 0.5, 0, 2;
  EXPECT_THROW(ldcc::ThemeModel(mu, {spd[0], asymmetric}, alpha, delta), ldcc::ModelError);
  EXPECT_THROW(ldcc::ThemeModel(mu, {spd[0]}, alpha, delta), ldcc::ModelError);
  Eigen::MatrixXd negative_alpha = alpha;
  negative_alpha(0, 1) = -0.1;
  EXPECT_THROW(ldcc::ThemeModel(mu, spd, negative_alpha, delta), ldcc::ModelError);
  EXPECT_THROW(ldcc::ThemeModel(mu, spd, alpha, Eigen::VectorXd::Zero(1)), ldcc::ModelError);
  EXPECT_THROW(ldcc::ThemeModel(mu, spd, Eigen::MatrixXd::Ones(1, 3), delta), ldcc::ModelError);
  EXPECT_THROW(ldcc::ThemeModel(mu, spd, alpha, Eigen::VectorXd::Ones(2)), ldcc::ModelError);
}

ldcc::TaskCollection toy_collection() {
  ldcc::SampleMatrix block(4, 2);
  block << 0, 0,
           2, 0,
           0, 4,
           2, 4;
  return ldcc::TaskCollection{{fixtures::single_class_task("toy", block)}, 2};
}

TEST(InitModel, ToyCovarianceByHand) {
  // mean (1, 2); centred rows (+-1, +-2): var_x = 1, var_y = 4, cov = 0
  const auto model = ldcc::init_model(toy_collection(), 2, 3, 0.5, 1, 1e-6);
  Eigen::Matrix2d expected;
  expected << 1.0 + 1e-6, 0.0, 0.0, 4.0 + 1e-6;
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_TRUE(model.sigma(k).isApprox(expected, 1e-14));
  EXPECT_TRUE((model.alpha().array() == 1.0).all());
  EXPECT_EQ(model.alpha().rows(), 2);
  EXPECT_TRUE((model.delta().array() == 0.5).all());
}

TEST(InitModel, MeansAreDistinctDataRows) {
  const auto coll = toy_collection();
  const auto model = ldcc::init_model(coll, 1, 4, 0.5, 9);
  std::set<std::pair<double, double>> rows;
  for (Eigen::Index n = 0; n < 4; ++n) rows.insert({coll.tasks[0].classes[0](n, 0), coll.tasks[0].classes[0](n, 1)});
  std::set<std::pair<double, double>> picked;
  for (Eigen::Index k = 0; k < 4; ++k) {
    const std::pair<double, double> mu{model.mu()(k, 0), model.mu()(k, 1)};
    EXPECT_TRUE(rows.count(mu)) << "mean " << k << " is not a data row";
    picked.insert(mu);
  }
  EXPECT_EQ(picked.size(), 4u);
}

TEST(InitModel, SingleThemeUsesGlobalCovariance) {
  const auto gen = ldcc::generate_synthetic(fixtures::planted_model(), 5, 3, 4, 2);
  const auto model = ldcc::init_model(gen.tasks, 2, 1, 0.5, 0);
  Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
  int n = 0;
  for (const auto& t : gen.tasks.tasks)
    for (const auto& b : t.classes) {
      mean += b.colwise().sum();
      n += static_cast<int>(b.rows());
    }
  mean /= n;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  bool mu_is_row = false;
  for (const auto& t : gen.tasks.tasks)
    for (const auto& b : t.classes)
      for (Eigen::Index i = 0; i < b.rows(); ++i) {
        const Eigen::RowVector2d c = b.row(i) - mean;
        cov += c.transpose() * c;
        mu_is_row |= (b.row(i).array() == model.mu().row(0).array()).all();
      }
  cov /= n;
  cov.diagonal().array() += ldcc::kDefaultJitter;
  EXPECT_TRUE(mu_is_row);
  EXPECT_TRUE(model.sigma(0).isApprox(cov, 1e-12));
}

TEST(InitModel, DeterministicForFixedSeed) {
  const auto gen = ldcc::generate_synthetic(fixtures::planted_model(), 10, 3, 4, 2);
  expect_same_model(ldcc::init_model(gen.tasks, 2, 3, 0.5, 42), ldcc::init_model(gen.tasks, 2, 3, 0.5, 42));
}

TEST(InitModel, TooManyThemesIsArgumentError) {
  EXPECT_THROW(ldcc::init_model(toy_collection(), 1, 5, 0.5, 0), ldcc::ArgumentError);
  EXPECT_THROW(ldcc::init_model(ldcc::TaskCollection{}, 1, 1, 0.5, 0), ldcc::ArgumentError);
}

TEST(TrainConfig, ValidatesRanges) {
  ldcc::TrainConfig config;
  EXPECT_NO_THROW(config.validate());
  config.tau1 = 0.4;
  EXPECT_THROW(config.validate(), ldcc::ArgumentError);
  config.tau1 = 0.5;
  EXPECT_THROW(config.validate(), ldcc::ArgumentError);
  config.tau1 = 1.0;
  EXPECT_NO_THROW(config.validate());
  config.tau0 = -1.0;
  EXPECT_THROW(config.validate(), ldcc::ArgumentError);
  config = {};
  config.batch_size = 0;
  EXPECT_THROW(config.validate(), ldcc::ArgumentError);
  config = {};
  config.e_tol = 0.0;
  EXPECT_THROW(config.validate(), ldcc::ArgumentError);
}

TEST(Checkpoint, RoundTripOfInitialisedModel) {
  TempDir dir;
  const auto gen = ldcc::generate_synthetic(fixtures::planted_model(), 10, 3, 4, 2);
  const auto model = ldcc::init_model(gen.tasks, 2, 3, 0.5, 42);
  ldcc::save_model(model, dir / "ckpt.json");
  expect_same_model(model, ldcc::load_model(dir / "ckpt.json"));
}

TEST(Checkpoint, RoundTripPreservesAwkwardDoubles) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const auto model = fixtures::random_model(3, 4, 3, rng);
  ldcc::save_model(model, dir / "ckpt.json");
  const auto back = ldcc::load_model(dir / "ckpt.json");
  expect_same_model(model, back);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_EQ(model.log_det(k), back.log_det(k));
}

TEST(Checkpoint, RejectsInvalidContent) {
  TempDir dir;
  const auto model = fixtures::planted_model();
  auto doc = ldcc::model_to_json(model);
  doc["alpha"][0][1] = -0.5;
  std::ofstream(dir / "neg.json") << doc.dump();
  EXPECT_THROW(ldcc::load_model(dir / "neg.json"), ldcc::CheckpointError);

  doc = ldcc::model_to_json(model);
  doc["sigma"][1] = {{1.0, 2.0}, {2.0, 1.0}};
  std::ofstream(dir / "indef.json") << doc.dump();
  EXPECT_THROW(ldcc::load_model(dir / "indef.json"), ldcc::CheckpointError);

  doc = ldcc::model_to_json(model);
  doc["version"] = 2;
  std::ofstream(dir / "ver.json") << doc.dump();
  EXPECT_THROW(ldcc::load_model(dir / "ver.json"), ldcc::CheckpointError);

  doc = ldcc::model_to_json(model);
  doc["mu"].erase(0);
  std::ofstream(dir / "short.json") << doc.dump();
  EXPECT_THROW(ldcc::load_model(dir / "short.json"), ldcc::CheckpointError);

  std::ofstream(dir / "garbage.json") << "[1, 2";
  EXPECT_THROW(ldcc::load_model(dir / "garbage.json"), ldcc::CheckpointError);
  EXPECT_THROW(ldcc::load_model(dir / "absent.json"), ldcc::CheckpointError);
}

}  // namespace
