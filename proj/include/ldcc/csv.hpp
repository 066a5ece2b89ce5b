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

// CSV outputs: header row, comma separated, '\n' line endings, floats in
// shortest round-trip form.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Core>

#include "ldcc/error.hpp"
#include "ldcc/learning.hpp"
#include "ldcc/similarity.hpp"

namespace ldcc {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Rows of ids with a fixed number of real columns.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::string> ids;
  Eigen::MatrixXd values;
};

namespace detail {

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError(where + ": '" + field + "' is not a number");
  }
  return v;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

/// Reads `id, v_1, ..., v_m`; every row must have the header's column count.
inline CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_line(line);
    if (table.header.empty()) {
      if (fields.size() < 2) throw DataError(path.string() + ": header needs an id column and a value column");
      table.header = std::move(fields);
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != table.header.size()) {
      throw DataError(where + ": expected " + std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    table.ids.push_back(fields[0]);
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(detail::parse_double(fields[i], where));
    rows.push_back(std::move(values));
  }
  if (table.header.empty()) throw DataError(path.string() + ": empty file");
  const auto cols = static_cast<Eigen::Index>(table.header.size() - 1);
  table.values.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) table.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return table;
}

/// `task_id, lambda_1 .. lambda_L`
inline void write_lambda_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                             const Eigen::MatrixXd& lambdas) {
  auto out = detail::open_output(path);
  out << "task_id";
  for (Eigen::Index l = 0; l < lambdas.cols(); ++l) out << ",lambda_" << (l + 1);
  out << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (Eigen::Index l = 0; l < lambdas.cols(); ++l) out << ',' << format_double(lambdas(static_cast<Eigen::Index>(i), l));
    out << '\n';
  }
}

/// Lambda table with validated positive entries.
inline CsvTable read_lambda_csv(const std::filesystem::path& path) {
  CsvTable table = read_csv_table(path);
  if (table.ids.empty()) throw DataError(path.string() + ": no tasks");
  if (!table.values.allFinite() || !(table.values.array() > 0.0).all()) {
    throw DataError(path.string() + ": lambda entries must be finite and positive");
  }
  return table;
}

/// `batch, rho, mean_elbo, alpha_min, alpha_max, estep_iters_mean`
inline void write_training_log(const std::filesystem::path& path, const std::vector<BatchDiagnostics>& log) {
  auto out = detail::open_output(path);
  out << "batch,rho,mean_elbo,alpha_min,alpha_max,estep_iters_mean\n";
  for (const auto& d : log) {
    out << d.batch << ',' << format_double(d.rho) << ',' << format_double(d.mean_elbo) << ','
        << format_double(d.alpha_min) << ',' << format_double(d.alpha_max) << ','
        << format_double(d.estep_iters_mean) << '\n';
  }
}

/// `test_id, mean_kl`
inline void write_distance_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                               const Eigen::VectorXd& mean_kl) {
  auto out = detail::open_output(path);
  out << "test_id,mean_kl\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << format_double(mean_kl[static_cast<Eigen::Index>(i)]) << '\n';
}

/// Full test x train KL matrix: `test_id, <train ids...>`.
inline void write_distance_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& test_ids,
                                      const std::vector<std::string>& train_ids, const Eigen::MatrixXd& kl) {
  auto out = detail::open_output(path);
  out << "test_id";
  for (const auto& id : train_ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < test_ids.size(); ++i) {
    out << test_ids[i];
    for (Eigen::Index d = 0; d < kl.cols(); ++d) out << ',' << format_double(kl(static_cast<Eigen::Index>(i), d));
    out << '\n';
  }
}

/// `bin, low, high, mean_distance, mean_accuracy, count`
inline void write_diagram_csv(const std::filesystem::path& path, const std::vector<DiagramBin>& bins) {
  auto out = detail::open_output(path);
  out << "bin,low,high,mean_distance,mean_accuracy,count\n";
  for (const auto& b : bins) {
    out << b.index << ',' << format_double(b.low) << ',' << format_double(b.high) << ','
        << format_double(b.mean_distance) << ',' << format_double(b.mean_accuracy) << ',' << b.count << '\n';
  }
}

/// One id per line.
inline void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  auto out = detail::open_output(path);
  for (const auto& id : ids) out << id << '\n';
}

}  // namespace ldcc
