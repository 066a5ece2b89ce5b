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

// Synthetic task generation and on-disk task formats.
//
// Task file (little-endian):
//   "LDCC" | u16 version = 1 | u32 C | u32 D | C x ( u32 N_c | N_c*D float32 row-major )
// Collection manifest (JSON): {"dimension": D, "tasks": [{"id": ..., "path": ...}]}
// with paths relative to the manifest's directory.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ldcc/error.hpp"
#include "ldcc/model.hpp"
#include "ldcc/parallel.hpp"
#include "ldcc/random.hpp"
#include "ldcc/task.hpp"

namespace ldcc {

/// Latent draws behind a synthetic collection.
struct LatentRecord {
  std::vector<Eigen::VectorXd> phi;                    // per task, L-simplex
  std::vector<std::vector<int>> y;                     // per task, per class
  std::vector<std::vector<std::vector<int>>> z;        // per task, class, sample
};

struct SyntheticTasks {
  TaskCollection tasks;
  LatentRecord latent;
};

inline std::string synthetic_task_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task_%06zu", index);
  return buf;
}

/// Seeded random model: means uniform in [-10, 10]^D, covariances
/// 0.09 A A^T + diag(U[0.5, 1.5]) with standard normal A, alpha entries
/// log-uniform in [0.1, 10], delta constant.
inline ThemeModel random_model(Eigen::Index num_task_themes, Eigen::Index num_image_themes, Eigen::Index dim,
                               std::uint64_t seed, double delta = 0.5) {
  if (num_task_themes < 1 || num_image_themes < 1 || dim < 1) {
    throw ArgumentError("random_model: L, K and D must all be at least 1");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ArgumentError("random_model: delta must be positive");
  Xoshiro256 rng(seed, stream_id(0x6d6f64656cULL, 0));
  Eigen::MatrixXd mu(num_image_themes, dim);
  for (Eigen::Index k = 0; k < num_image_themes; ++k)
    for (Eigen::Index i = 0; i < dim; ++i) mu(k, i) = -10.0 + 20.0 * sample_uniform(rng);
  std::vector<Eigen::MatrixXd> sigma;
  for (Eigen::Index k = 0; k < num_image_themes; ++k) {
    Eigen::MatrixXd a(dim, dim);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = 0.3 * sample_standard_normal(rng);
    Eigen::MatrixXd s = a * a.transpose();
    for (Eigen::Index i = 0; i < dim; ++i) s(i, i) += 0.5 + sample_uniform(rng);
    sigma.push_back(0.5 * (s + s.transpose()));
  }
  Eigen::MatrixXd alpha(num_task_themes, num_image_themes);
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    alpha.data()[i] = std::exp(std::log(0.1) + 2.0 * std::log(10.0) * sample_uniform(rng));
  }
  return ThemeModel(mu, sigma, alpha, Eigen::VectorXd::Constant(num_task_themes, delta));
}

/// Samples M tasks of C classes with N samples each from the generative
/// process. Task d draws from its own stream (seed, d); values are rounded to
/// float32 so a saved collection reloads identically.
inline SyntheticTasks generate_synthetic(const ThemeModel& model, std::size_t num_tasks,
                                         std::size_t num_classes, std::size_t shots,
                                         std::uint64_t seed, unsigned threads = 0) {
  if (num_tasks < 1 || num_classes < 1 || shots < 1) {
    throw ArgumentError("generate_synthetic: M, C and N must all be at least 1");
  }
  const Eigen::Index dim = model.dimension();
  SyntheticTasks out;
  out.tasks.dimension = dim;
  out.tasks.tasks.resize(num_tasks);
  out.latent.phi.resize(num_tasks);
  out.latent.y.resize(num_tasks);
  out.latent.z.resize(num_tasks);

  parallel_for(num_tasks, threads, [&](std::size_t d) {
    Xoshiro256 rng(seed, d);
    Task& task = out.tasks.tasks[d];
    task.id = synthetic_task_id(d);
    task.classes.resize(num_classes);
    out.latent.phi[d] = sample_dirichlet(rng, model.delta());
    out.latent.y[d].resize(num_classes);
    out.latent.z[d].assign(num_classes, std::vector<int>(shots));
    Eigen::VectorXd noise(dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
      const Eigen::Index y = sample_categorical(rng, out.latent.phi[d]);
      out.latent.y[d][c] = static_cast<int>(y);
      const Eigen::VectorXd theta = sample_dirichlet(rng, model.alpha().row(y).transpose());
      SampleMatrix& block = task.classes[c];
      block.resize(static_cast<Eigen::Index>(shots), dim);
      for (std::size_t n = 0; n < shots; ++n) {
        const Eigen::Index z = sample_categorical(rng, theta);
        out.latent.z[d][c][n] = static_cast<int>(z);
        for (Eigen::Index i = 0; i < dim; ++i) noise[i] = sample_standard_normal(rng);
        const Eigen::VectorXd x = model.mu().row(z).transpose() + model.cholesky(z).matrixL() * noise;
        for (Eigen::Index i = 0; i < dim; ++i) {
          block(static_cast<Eigen::Index>(n), i) = static_cast<double>(static_cast<float>(x[i]));
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Binary task files.

namespace detail {

inline constexpr std::array<char, 4> kTaskMagic{'L', 'D', 'C', 'C'};
inline constexpr std::uint16_t kTaskVersion = 1;

inline void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<char>((v >> s) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void expect(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated file while reading ") + what, pos_);
  }

  std::uint16_t u16(const char* what) {
    expect(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                      static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    expect(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void magic() {
    expect(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, kTaskMagic.data(), 4) != 0) {
      throw FormatError("bad magic, expected \"LDCC\"", pos_);
    }
    pos_ += 4;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("failed writing '" + path.string() + "'");
}

}  // namespace detail

inline std::string encode_task(const Task& task) {
  task.validate();
  std::string buf(detail::kTaskMagic.begin(), detail::kTaskMagic.end());
  detail::put_u16(buf, detail::kTaskVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(task.num_classes()));
  detail::put_u32(buf, static_cast<std::uint32_t>(task.dimension()));
  for (const auto& block : task.classes) {
    detail::put_u32(buf, static_cast<std::uint32_t>(block.rows()));
    for (Eigen::Index n = 0; n < block.rows(); ++n)
      for (Eigen::Index i = 0; i < block.cols(); ++i)
        detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(block(n, i))));
  }
  return buf;
}

/// Parses a task file image. `expected_dim` < 0 accepts any dimension.
inline Task decode_task(const std::string& bytes, std::string id, Eigen::Index expected_dim = -1) {
  detail::ByteReader reader(bytes);
  reader.magic();
  const std::size_t version_at = reader.offset();
  if (reader.u16("version") != detail::kTaskVersion) throw FormatError("unsupported version", version_at);
  const std::size_t classes_at = reader.offset();
  const std::uint32_t num_classes = reader.u32("class count");
  if (num_classes == 0) throw FormatError("class count must be at least 1", classes_at);
  const std::size_t dim_at = reader.offset();
  const std::uint32_t dim = reader.u32("dimension");
  if (dim == 0) throw FormatError("dimension must be at least 1", dim_at);
  if (expected_dim >= 0 && static_cast<Eigen::Index>(dim) != expected_dim) {
    throw FormatError("dimension " + std::to_string(dim) + " does not match expected " +
                          std::to_string(expected_dim),
                      dim_at);
  }
  Task task;
  task.id = std::move(id);
  task.classes.reserve(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    const std::size_t count_at = reader.offset();
    const std::uint32_t rows = reader.u32("sample count");
    if (rows == 0) throw FormatError("class " + std::to_string(c) + " has no samples", count_at);
    reader.expect(static_cast<std::size_t>(rows) * dim * 4, "samples");
    SampleMatrix block(rows, dim);
    for (std::uint32_t n = 0; n < rows; ++n) {
      for (std::uint32_t i = 0; i < dim; ++i) {
        const std::size_t value_at = reader.offset();
        const float v = reader.f32("sample");
        if (!std::isfinite(v)) throw FormatError("non-finite sample value", value_at);
        block(n, i) = v;
      }
    }
    task.classes.push_back(std::move(block));
  }
  if (!reader.at_end()) throw FormatError("trailing bytes after last class", reader.offset());
  return task;
}

inline void write_task_file(const Task& task, const std::filesystem::path& path) {
  detail::write_file(path, encode_task(task));
}

inline Task read_task_file(const std::filesystem::path& path, std::string id, Eigen::Index expected_dim = -1) {
  try {
    return decode_task(detail::read_file(path), std::move(id), expected_dim);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

/// Writes one `<id>.ldcc` file per task next to the manifest.
inline void save_tasks(const TaskCollection& coll, const std::filesystem::path& manifest_path) {
  coll.validate();
  const auto dir = manifest_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["dimension"] = coll.dimension;
  manifest["tasks"] = nlohmann::json::array();
  for (const auto& task : coll.tasks) {
    if (task.id.empty() || task.id.find_first_of("/\\") != std::string::npos || task.id == "." ||
        task.id == "..") {
      throw ArgumentError("task id '" + task.id + "' cannot be used as a file name");
    }
    const std::string file = task.id + ".ldcc";
    write_task_file(task, dir / file);
    manifest["tasks"].push_back({{"id", task.id}, {"path", file}});
  }
  detail::write_file(manifest_path, manifest.dump(2) + "\n");
}

inline TaskCollection load_tasks(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  TaskCollection coll;
  try {
    coll.dimension = manifest.at("dimension").get<Eigen::Index>();
    if (coll.dimension < 1) throw DataError("manifest dimension must be at least 1");
    for (const auto& entry : manifest.at("tasks")) {
      std::filesystem::path path = entry.at("path").get<std::string>();
      if (path.is_relative()) path = manifest_path.parent_path() / path;
      coll.tasks.push_back(read_task_file(path, entry.at("id").get<std::string>(), coll.dimension));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  try {
    coll.validate();
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
  return coll;
}

// ---------------------------------------------------------------------------
// Latent sidecar.

inline nlohmann::json latent_to_json(const LatentRecord& latent) {
  nlohmann::json out;
  out["phi"] = nlohmann::json::array();
  for (const auto& phi : latent.phi) out["phi"].push_back(std::vector<double>(phi.data(), phi.data() + phi.size()));
  out["y"] = latent.y;
  out["z"] = latent.z;
  return out;
}

inline LatentRecord latent_from_json(const nlohmann::json& in) {
  LatentRecord latent;
  try {
    for (const auto& row : in.at("phi")) {
      const auto values = row.get<std::vector<double>>();
      latent.phi.emplace_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    latent.y = in.at("y").get<std::vector<std::vector<int>>>();
    latent.z = in.at("z").get<std::vector<std::vector<std::vector<int>>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed latent record: ") + e.what());
  }
  return latent;
}

inline void save_latent(const LatentRecord& latent, const std::filesystem::path& path) {
  detail::write_file(path, latent_to_json(latent).dump() + "\n");
}

inline LatentRecord load_latent(const std::filesystem::path& path) {
  try {
    return latent_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("latent record '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ldcc
