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
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ldcc/ldcc.hpp"

namespace {

using fixtures::TempDir;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  Outcome run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.path().string() + "' && '" LDCC_CLI_PATH "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void generate(const std::string& out = "gen", const std::string& extra = "") {
    const Outcome r = run("gen --random-model 2 3 2 --tasks 10 --classes 5 --shots 4 --seed 7 --out " + out + " " + extra);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  TempDir dir_;
};

TEST_F(Cli, GenWritesManifestAndTaskFiles) {
  generate();
  const auto coll = ldcc::load_tasks(path("gen/manifest.json"));
  EXPECT_EQ(coll.size(), 10u);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(path("gen"))) files += entry.path().extension() == ".ldcc";
  EXPECT_EQ(files, 10);
  EXPECT_TRUE(fs::exists(path("gen/latent.json")));
  EXPECT_TRUE(fs::exists(path("gen/model.json")));
  EXPECT_TRUE(fs::exists(path("gen/config.toml")));
  for (const auto& t : coll.tasks) {
    EXPECT_EQ(t.num_classes(), 5);
    EXPECT_EQ(t.classes[0].rows(), 4);
  }
}

TEST_F(Cli, GenIsByteIdenticalForSameSeed) {
  generate("a");
  generate("b");
  for (const auto& entry : fs::directory_iterator(path("a"))) {
    const auto name = entry.path().filename();
    if (name == "config.toml") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(path("b") / name)) << name;
  }
}

TEST_F(Cli, GenUsageErrors) {
  EXPECT_EQ(run("gen --random-model 2 3 2 --tasks 0 --classes 5 --shots 4 --out g").code, 2);
  EXPECT_EQ(run("gen --tasks 3 --classes 5 --shots 4 --out g").code, 2);
  EXPECT_EQ(run("gen --random-model 2 3 --tasks 3 --classes 5 --shots 4 --out g").code, 2);
  EXPECT_EQ(run("gen --random-model 2 0 2 --tasks 3 --classes 5 --shots 4 --out g").code, 2);
  EXPECT_EQ(run("gen --random-model 2 3 2 --model m.json --tasks 3 --classes 5 --shots 4 --out g").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, GenFromCheckpoint) {
  ldcc::save_model(fixtures::planted_model(), path("planted.json"));
  const Outcome r = run("gen --model planted.json --tasks 4 --classes 3 --shots 2 --seed 1 --out g");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("g/model.json")), slurp(path("planted.json")));
  EXPECT_EQ(ldcc::load_tasks(path("g/manifest.json")).size(), 4u);
}

TEST_F(Cli, TrainSmokeAndReplay) {
  generate();
  const std::string args = "train --data gen/manifest.json --task-themes 2 --image-themes 3 --batch 4 --max-batches 6 --seed 3";
  Outcome r = run(args + " --out t1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = ldcc::load_model(path("t1/checkpoint.json"));
  EXPECT_EQ(model.num_task_themes(), 2);
  EXPECT_EQ(model.num_image_themes(), 3);
  const std::string log = slurp(path("t1/train_log.csv"));
  EXPECT_EQ(log.substr(0, log.find('\n')), "batch,rho,mean_elbo,alpha_min,alpha_max,estep_iters_mean");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 7);

  const std::string config = slurp(path("t1/config.toml"));
  EXPECT_NE(config.find("tau1=0.51"), std::string::npos);
  EXPECT_NE(config.find("max-batches=6"), std::string::npos);
  r = run("--config t1/config.toml train --out t2 --threads 2");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("t1/checkpoint.json")), slurp(path("t2/checkpoint.json")));
  EXPECT_EQ(log, slurp(path("t2/train_log.csv")));
}

TEST_F(Cli, TrainRejectsBadSchedule) {
  generate();
  const Outcome r = run("train --data gen/manifest.json --task-themes 2 --image-themes 3 --tau1 0.4 --out t");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("(0.5, 1]"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("t/checkpoint.json")));
  EXPECT_EQ(run("train --data gen/manifest.json --task-themes 2 --image-themes 3 --tau0 -1 --out t").code, 2);
  EXPECT_EQ(run("train --data gen/manifest.json --task-themes 0 --image-themes 3 --out t").code, 2);
}

TEST_F(Cli, CorruptTaskFileIsDataError) {
  generate();
  std::ofstream(path("gen/task_000003.ldcc"), std::ios::binary | std::ios::trunc) << "LDCX";
  const Outcome r = run("train --data gen/manifest.json --task-themes 2 --image-themes 3 --max-batches 1 --out t");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("task_000003"), std::string::npos) << r.err;
}

TEST_F(Cli, InferProducesPositiveDeterministicRows) {
  generate();
  ASSERT_EQ(run("train --data gen/manifest.json --task-themes 2 --image-themes 3 --max-batches 3 --out t").code, 0);
  ASSERT_EQ(run("infer --model t/checkpoint.json --data gen/manifest.json --out l1.csv --threads 1").code, 0);
  ASSERT_EQ(run("infer --model t/checkpoint.json --data gen/manifest.json --out l2.csv --threads 3").code, 0);
  EXPECT_EQ(slurp(path("l1.csv")), slurp(path("l2.csv")));
  const auto table = ldcc::read_lambda_csv(path("l1.csv"));
  EXPECT_EQ(table.ids.size(), 10u);
  EXPECT_EQ(table.values.cols(), 2);
  EXPECT_TRUE((table.values.array() > 0.0).all() && table.values.allFinite());
  // lambda sums to sum(delta) + C
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) EXPECT_NEAR(table.values.row(i).sum(), 1.0 + 5.0, 1e-9);
}

TEST_F(Cli, InferSingleThemeClosedForm) {
  generate();
  const ldcc::ThemeModel single(Eigen::MatrixXd::Zero(1, 2), {Eigen::MatrixXd::Identity(2, 2)},
                                Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, 0.25));
  ldcc::save_model(single, path("single.json"));
  ASSERT_EQ(run("infer --model single.json --data gen/manifest.json --out l.csv").code, 0);
  const auto table = ldcc::read_lambda_csv(path("l.csv"));
  EXPECT_TRUE((table.values.array() == 5.25).all());
}

TEST_F(Cli, InferDimensionMismatchIsDataError) {
  generate();
  ASSERT_EQ(run("gen --random-model 1 2 3 --tasks 2 --classes 2 --shots 2 --out g3").code, 0);
  const Outcome r = run("infer --model g3/model.json --data gen/manifest.json --out l.csv");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("dimension"), std::string::npos);
}

TEST_F(Cli, BadCheckpointIsDataError) {
  generate();
  std::ofstream(path("broken.json")) << "{\"version\": 1, \"alpha\": [[-1]]}";
  EXPECT_EQ(run("infer --model broken.json --data gen/manifest.json --out l.csv").code, 3);
}

void write_lambdas(const fs::path& p, const std::string& body) { std::ofstream(p) << "task_id,lambda_1,lambda_2\n" << body; }

TEST_F(Cli, DistanceAndSelect) {
  write_lambdas(path("train.csv"), "a,1,1\nb,5,1\nc,1,5\n");
  write_lambdas(path("test.csv"), "x,4,1\ny,5,1.2\n");
  Outcome r = run("distance --test test.csv --train train.csv --out d.csv --matrix m.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto d = ldcc::read_csv_table(path("d.csv"));
  EXPECT_EQ(d.header, (std::vector<std::string>{"test_id", "mean_kl"}));
  EXPECT_EQ(d.ids, (std::vector<std::string>{"x", "y"}));
  const auto m = ldcc::read_csv_table(path("m.csv"));
  EXPECT_EQ(m.header, (std::vector<std::string>{"test_id", "a", "b", "c"}));
  EXPECT_NEAR(d.values(0, 0), m.values.row(0).mean(), 1e-12);

  r = run("select --train train.csv --test test.csv --count 3 --out all.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("all.txt")), "b\na\nc\n");
  ASSERT_EQ(run("select --train train.csv --test test.csv --count 1 --out one.txt").code, 0);
  EXPECT_EQ(slurp(path("one.txt")), "b\n");
  EXPECT_EQ(run("select --train train.csv --test test.csv --count 4 --out x.txt").code, 2);

  std::ofstream(path("wide.csv")) << "task_id,lambda_1,lambda_2,lambda_3\nz,1,1,1\n";
  EXPECT_EQ(run("distance --test wide.csv --train train.csv --out w.csv").code, 3);
  write_lambdas(path("neg.csv"), "z,1,-1\n");
  EXPECT_EQ(run("distance --test neg.csv --train train.csv --out w.csv").code, 3);
}

TEST_F(Cli, DiagramHandInstance) {
  std::ofstream(path("d.csv")) << "test_id,mean_kl\nt1,1\nt2,3\n";
  std::ofstream(path("acc.csv")) << "task_id,accuracy\nt2,0.8\nt1,0.9\n";
  const Outcome r = run("diagram --distances d.csv --accuracy acc.csv --bins 2 --out g.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("g.csv")), "bin,low,high,mean_distance,mean_accuracy,count\n1,0,1.5,1,0.9,1\n2,1.5,3,3,0.8,1\n");
  EXPECT_TRUE(fs::exists(path("g.csv.config.toml")));
}

TEST_F(Cli, DiagramFromLambdas) {
  write_lambdas(path("train.csv"), "a,1,1\nb,5,1\n");
  write_lambdas(path("test.csv"), "x,4,1\ny,1,3\n");
  std::ofstream(path("acc.csv")) << "task_id,accuracy\nx,0.5\ny,0.7\n";
  ASSERT_EQ(run("distance --test test.csv --train train.csv --out d.csv").code, 0);
  ASSERT_EQ(run("diagram --distances d.csv --accuracy acc.csv --bins 3 --out g1.csv").code, 0);
  ASSERT_EQ(run("diagram --test test.csv --train train.csv --accuracy acc.csv --bins 3 --out g2.csv").code, 0);
  EXPECT_EQ(slurp(path("g1.csv")), slurp(path("g2.csv")));
  EXPECT_EQ(run("diagram --distances d.csv --test test.csv --train train.csv --accuracy acc.csv --out g.csv").code, 2);
  EXPECT_EQ(run("diagram --accuracy acc.csv --out g.csv").code, 2);
}

TEST_F(Cli, DiagramUnknownAccuracyIds) {
  std::ofstream(path("d.csv")) << "test_id,mean_kl\nt1,1\nt2,3\n";
  std::ofstream(path("acc.csv")) << "task_id,accuracy\nt1,0.9\nghost,0.1\nt2,0.8\nphantom,0.2\n";
  Outcome r = run("diagram --distances d.csv --accuracy acc.csv --out g.csv");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("ghost, phantom"), std::string::npos) << r.err;
  std::ofstream(path("short.csv")) << "task_id,accuracy\nt1,0.9\n";
  r = run("diagram --distances d.csv --accuracy short.csv --out g.csv");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("t2"), std::string::npos) << r.err;
}

}  // namespace
