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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldcc/ldcc.hpp"

namespace ldcc::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 2, kDataFailure = 3, kNumericFailure = 4 };

namespace detail {

namespace fs = std::filesystem;

// Resolved options of a subcommand as a config section; `ldcc --config FILE`
// replays it. Optional inputs that were never given are left out.
inline void echo_config(const CLI::App& sub, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  std::set<std::string> unset;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string& def = opt->get_default_str();
    if (opt->count() == 0 && (def.empty() || def == "{}")) unset.insert(opt->get_single_name());
  }
  out << '[' << sub.get_name() << "]\n";
  std::istringstream lines(sub.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    if (unset.count(line.substr(0, line.find('=')))) continue;
    out << line << '\n';
  }
}

inline fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".config.toml"); }



struct GenArgs {
  std::string model;
  std::vector<long long> random_model;
  double delta = 0.5;
  std::size_t tasks = 0;
  std::size_t classes = 0;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;
};

struct TrainArgs {
  std::string data;
  long long task_themes = 0;
  long long image_themes = 0;
  TrainConfig config;
  std::string out;
};

struct InferArgs {
  std::string model;
  std::string data;
  std::string out;
  TrainConfig config;
};

struct DistanceArgs {
  std::string test;
  std::string train;
  std::string out;
  std::string matrix;
  unsigned threads = 0;
};

struct SelectArgs {
  std::string train;
  std::string test;
  std::size_t count = 0;
  std::string out;
  unsigned threads = 0;
};

struct DiagramArgs {
  std::string distances;
  std::string test;
  std::string train;
  std::string accuracy;
  int bins = 10;
  std::string out;
  unsigned threads = 0;
};

inline CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& description) {
  CLI::App* sub = app.add_subcommand(name, description);
  sub->option_defaults()->always_capture_default();
  sub->configurable();
  return sub;
}

inline void run_gen(const GenArgs& a, const CLI::App& sub, std::ostream& out) {
  std::optional<ThemeModel> model;
  if (!a.model.empty()) {
    model = load_model(a.model);
  } else {
    if (a.random_model.size() != 3) throw ArgumentError("--random-model takes L K D");
    for (long long v : a.random_model) {
      if (v < 1) throw ArgumentError("--random-model values must be at least 1");
    }
    model = random_model(a.random_model[0], a.random_model[1], a.random_model[2], a.seed, a.delta);
  }
  const fs::path dir(a.out);
  const SyntheticTasks gen = generate_synthetic(*model, a.tasks, a.classes, a.shots, a.seed, a.threads);
  echo_config(sub, dir / "config.toml");
  save_tasks(gen.tasks, dir / "manifest.json");
  save_latent(gen.latent, dir / "latent.json");
  save_model(*model, dir / "model.json");
  out << "wrote " << gen.tasks.size() << " tasks to " << (dir / "manifest.json").string() << '\n';
}

inline void run_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  a.config.validate();
  const TaskCollection tasks = load_tasks(a.data);
  const fs::path dir(a.out);
  echo_config(sub, dir / "config.toml");
  const TrainResult result = train(tasks, a.task_themes, a.image_themes, a.config);
  save_model(result.model, dir / "checkpoint.json");
  write_training_log(dir / "train_log.csv", result.log);
  out << "trained on " << tasks.size() << " tasks for " << result.log.size() << " batches";
  if (!result.log.empty()) out << ", last mean ELBO " << format_double(result.log.back().mean_elbo);
  out << '\n';
}

inline void run_infer(const InferArgs& a, const CLI::App& sub, std::ostream& out) {
  a.config.validate();
  const ThemeModel model = load_model(a.model);
  const TaskCollection tasks = load_tasks(a.data);
  if (tasks.dimension != model.dimension()) {
    throw DataError("data has dimension " + std::to_string(tasks.dimension) + " but the model expects " +
                    std::to_string(model.dimension()));
  }
  echo_config(sub, sidecar(a.out));
  Eigen::MatrixXd lambdas(static_cast<Eigen::Index>(tasks.size()), model.num_task_themes());
  std::vector<int> unconverged(tasks.size(), 0);
  parallel_for(tasks.size(), a.config.threads, [&](std::size_t d) {
    const EStepResult e = run_estep(tasks.tasks[d], model, a.config, d);
    lambdas.row(static_cast<Eigen::Index>(d)) = e.state.lambda.transpose();
    unconverged[d] = e.converged ? 0 : 1;
  });
  std::vector<std::string> ids;
  for (const auto& t : tasks.tasks) ids.push_back(t.id);
  write_lambda_csv(a.out, ids, lambdas);
  out << "inferred lambda for " << tasks.size() << " tasks";
  const int missed = std::accumulate(unconverged.begin(), unconverged.end(), 0);
  if (missed > 0) out << " (" << missed << " stopped at the sweep limit)";
  out << '\n';
}

inline void require_same_width(const CsvTable& test, const CsvTable& train) {
  if (test.values.cols() != train.values.cols()) {
    throw DataError("test lambdas have " + std::to_string(test.values.cols()) + " columns, training lambdas " +
                    std::to_string(train.values.cols()));
  }
}

inline void run_distance(const DistanceArgs& a, const CLI::App& sub, std::ostream& out) {
  const CsvTable test = read_lambda_csv(a.test);
  const CsvTable train = read_lambda_csv(a.train);
  require_same_width(test, train);
  echo_config(sub, sidecar(a.out));
  const DistanceReport report = distance_matrix(test.values, train.values, a.threads);
  write_distance_csv(a.out, test.ids, report.mean);
  if (!a.matrix.empty()) write_distance_matrix_csv(a.matrix, test.ids, train.ids, report.kl);
  out << "wrote distances for " << test.ids.size() << " test tasks\n";
}

inline void run_select(const SelectArgs& a, const CLI::App& sub, std::ostream& out) {
  const CsvTable train = read_lambda_csv(a.train);
  const CsvTable test = read_lambda_csv(a.test);
  require_same_width(test, train);
  if (a.count > train.ids.size()) {
    throw ArgumentError("--count " + std::to_string(a.count) + " exceeds the " + std::to_string(train.ids.size()) +
                        " training tasks");
  }
  echo_config(sub, sidecar(a.out));
  const auto picked = select_tasks(train.values, test.values, a.count, a.threads);
  std::vector<std::string> ids;
  for (std::size_t i : picked) ids.push_back(train.ids[i]);
  write_id_list(a.out, ids);
  out << "selected " << ids.size() << " of " << train.ids.size() << " training tasks\n";
}

inline std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& item : items) s += (s.empty() ? "" : ", ") + item;
  return s;
}

inline void run_diagram(const DiagramArgs& a, const CLI::App& sub, std::ostream& out) {
  std::vector<std::string> ids;
  std::vector<double> distances;
  if (!a.distances.empty()) {
    const CsvTable table = read_csv_table(a.distances);
    if (table.values.cols() != 1) throw DataError(a.distances + ": expected columns test_id,mean_kl");
    ids = table.ids;
    distances.assign(table.values.data(), table.values.data() + table.values.size());
  } else {
    const CsvTable test = read_lambda_csv(a.test);
    const CsvTable train = read_lambda_csv(a.train);
    require_same_width(test, train);
    const DistanceReport report = distance_matrix(test.values, train.values, a.threads);
    ids = test.ids;
    distances.assign(report.mean.data(), report.mean.data() + report.mean.size());
  }
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) throw DataError("distances must be finite and non-negative");
  }

  const CsvTable acc = read_csv_table(a.accuracy);
  if (acc.values.cols() != 1) throw DataError(a.accuracy + ": expected columns task_id,accuracy");
  std::map<std::string, double> by_id;
  std::vector<std::string> unknown;
  const std::set<std::string> known(ids.begin(), ids.end());
  for (std::size_t i = 0; i < acc.ids.size(); ++i) {
    if (!known.count(acc.ids[i])) {
      unknown.push_back(acc.ids[i]);
      continue;
    }
    if (!by_id.emplace(acc.ids[i], acc.values(static_cast<Eigen::Index>(i), 0)).second) {
      throw DataError(a.accuracy + ": task '" + acc.ids[i] + "' listed twice");
    }
  }
  if (!unknown.empty()) throw DataError("unknown task ids in " + a.accuracy + ": " + join(unknown));
  std::vector<std::string> missing;
  std::vector<double> accuracies;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
    } else {
      accuracies.push_back(it->second);
    }
  }
  if (!missing.empty()) throw DataError("no accuracy for test tasks: " + join(missing));

  echo_config(sub, sidecar(a.out));
  const auto bins = correlation_diagram(distances, accuracies, a.bins);
  write_diagram_csv(a.out, bins);
  out << "wrote " << bins.size() << " bins\n";
}

}  // namespace detail

/// Parses and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app("Continuous latent Dirichlet co-clustering of classification tasks", "ldcc");
  app.require_subcommand(1);
  app.set_config("--config", "", "Replay a config echoed by an earlier run");

  GenArgs gen_args;
  CLI::App* gen = add_command(app, "gen", "Sample synthetic tasks from a model");
  auto* model_opt = gen->add_option("--model", gen_args.model, "Checkpoint to sample from")->check(CLI::ExistingFile);
  auto* random_opt = gen->add_option("--random-model", gen_args.random_model, "Random model with L K D")
                         ->expected(3);
  model_opt->excludes(random_opt);
  gen->add_option("--delta", gen_args.delta, "Task-theme prior of the random model")->check(CLI::PositiveNumber);
  gen->add_option("--tasks", gen_args.tasks, "Number of tasks M")->required()->check(CLI::PositiveNumber);
  gen->add_option("--classes", gen_args.classes, "Classes per task C")->required()->check(CLI::PositiveNumber);
  gen->add_option("--shots", gen_args.shots, "Samples per class N")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_args.seed, "Random seed");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--threads", gen_args.threads, "Worker threads (0 = all cores)");

  TrainArgs train_args;
  CLI::App* train_cmd = add_command(app, "train", "Fit a model by online variational inference");
  TrainConfig& tc = train_args.config;
  train_cmd->add_option("--data", train_args.data, "Task manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--task-themes", train_args.task_themes, "Task-themes L")->required()->check(CLI::PositiveNumber);
  train_cmd->add_option("--image-themes", train_args.image_themes, "Image-themes K")->required()->check(CLI::PositiveNumber);
  train_cmd->add_option("--delta", tc.delta, "Symmetric task-theme prior")->check(CLI::PositiveNumber);
  train_cmd->add_option("--tau0", tc.tau0, "Learning-rate delay (>= 0)");
  train_cmd->add_option("--tau1", tc.tau1, "Learning-rate decay in (0.5, 1]");
  train_cmd->add_option("--batch", tc.batch_size, "Tasks per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-batches", tc.max_batches, "Number of batches")->check(CLI::PositiveNumber);
  train_cmd->add_option("--e-tol", tc.e_tol, "E-step tolerance on mean absolute change");
  train_cmd->add_option("--max-e-iters", tc.max_e_iters, "E-step sweep limit")->check(CLI::PositiveNumber);
  train_cmd->add_option("--jitter", tc.jitter, "Diagonal added to covariance estimates");
  train_cmd->add_option("--seed", tc.seed, "Random seed");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--threads", tc.threads, "Worker threads (0 = all cores)");

  InferArgs infer_args;
  CLI::App* infer = add_command(app, "infer", "Infer task-theme posteriors lambda");
  infer->add_option("--model", infer_args.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", infer_args.data, "Task manifest")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", infer_args.out, "Lambda CSV")->required();
  infer->add_option("--e-tol", infer_args.config.e_tol, "E-step tolerance");
  infer->add_option("--max-e-iters", infer_args.config.max_e_iters, "E-step sweep limit")->check(CLI::PositiveNumber);
  infer->add_option("--seed", infer_args.config.seed, "Random seed");
  infer->add_option("--threads", infer_args.config.threads, "Worker threads (0 = all cores)");

  DistanceArgs distance_args;
  CLI::App* distance = add_command(app, "distance", "Mean KL from each test task to the training tasks");
  distance->add_option("--test", distance_args.test, "Test lambda CSV")->required()->check(CLI::ExistingFile);
  distance->add_option("--train", distance_args.train, "Training lambda CSV")->required()->check(CLI::ExistingFile);
  distance->add_option("--out", distance_args.out, "Output CSV (test_id,mean_kl)")->required();
  distance->add_option("--matrix", distance_args.matrix, "Optional full KL matrix CSV");
  distance->add_option("--threads", distance_args.threads, "Worker threads (0 = all cores)");

  SelectArgs select_args;
  CLI::App* select = add_command(app, "select", "Training tasks closest to the test tasks");
  select->add_option("--train", select_args.train, "Training lambda CSV")->required()->check(CLI::ExistingFile);
  select->add_option("--test", select_args.test, "Test lambda CSV")->required()->check(CLI::ExistingFile);
  select->add_option("--count", select_args.count, "Number of tasks to keep")->required();
  select->add_option("--out", select_args.out, "Output id list")->required();
  select->add_option("--threads", select_args.threads, "Worker threads (0 = all cores)");

  DiagramArgs diagram_args;
  CLI::App* diagram = add_command(app, "diagram", "Accuracy against distance in equal-width bins");
  auto* dist_opt = diagram->add_option("--distances", diagram_args.distances, "Distance CSV (test_id,mean_kl)")
                       ->check(CLI::ExistingFile);
  auto* test_opt = diagram->add_option("--test", diagram_args.test, "Test lambda CSV")->check(CLI::ExistingFile);
  auto* train_opt = diagram->add_option("--train", diagram_args.train, "Training lambda CSV")->check(CLI::ExistingFile);
  dist_opt->excludes(test_opt)->excludes(train_opt);
  test_opt->needs(train_opt);
  train_opt->needs(test_opt);
  diagram->add_option("--accuracy", diagram_args.accuracy, "Accuracy CSV (task_id,accuracy)")
      ->required()
      ->check(CLI::ExistingFile);
  diagram->add_option("--bins", diagram_args.bins, "Number of bins J")->check(CLI::PositiveNumber);
  diagram->add_option("--out", diagram_args.out, "Output CSV")->required();
  diagram->add_option("--threads", diagram_args.threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_args.model.empty() && gen_args.random_model.empty()) {
        throw ArgumentError("gen needs --model or --random-model");
      }
      run_gen(gen_args, *gen, out);
    } else if (train_cmd->parsed()) {
      run_train(train_args, *train_cmd, out);
    } else if (infer->parsed()) {
      run_infer(infer_args, *infer, out);
    } else if (distance->parsed()) {
      run_distance(distance_args, *distance, out);
    } else if (select->parsed()) {
      run_select(select_args, *select, out);
    } else if (diagram->parsed()) {
      if (diagram_args.distances.empty() && diagram_args.test.empty()) {
        throw ArgumentError("diagram needs --distances or --test/--train");
      }
      run_diagram(diagram_args, *diagram, out);
    }
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const DomainError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kNumericFailure;
  }
  return kSuccess;
}

}  // namespace ldcc::cli
