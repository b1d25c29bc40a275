// Copyright 2026 The linrec authors
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

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"
#include "linrec/model.hpp"
#include "linrec/nearby.hpp"
#include "linrec/search.hpp"
#include "linrec/spectral.hpp"

static_assert(std::endian::native == std::endian::little,
              "matrix files are little-endian; big-endian hosts need byte "
              "swapping");

namespace linrec {

inline constexpr int kArchiveVersion = 1;
inline constexpr char kMatrixMagic[] = "LRMAT1\n";

// Dense float64 matrix file: magic, one text header line
// "<rows> <cols> f64 row-major", then rows*cols little-endian doubles in
// row-major order.
inline void write_matrix_file(const std::filesystem::path& path,
                              const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMatrixMagic;
  out << m.rows() << " " << m.cols() << " f64 row-major\n";
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw DataError("short write to " + path.string());
}

inline Eigen::MatrixXd read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string magic(sizeof(kMatrixMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kMatrixMagic)
    throw DataError(path.string() + " is not a matrix file (bad magic)");
  std::string header;
  if (!std::getline(in, header))
    throw DataError(path.string() + ": missing header line");
  std::int64_t rows = -1, cols = -1;
  char dtype[8] = {0}, layout[16] = {0};
  if (std::sscanf(header.c_str(), "%ld %ld %7s %15s", &rows, &cols, dtype,
                  layout) != 4 ||
      rows < 0 || cols < 0 || std::string(dtype) != "f64" ||
      std::string(layout) != "row-major")
    throw DataError(path.string() + ": bad matrix header '" + header + "'");
  Eigen::MatrixXd m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw DataError(path.string() + ": truncated payload");
    for (std::int64_t c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)];
  }
  char extra;
  if (in.read(&extra, 1))
    throw DataError(path.string() + ": trailing bytes after payload");
  return m;
}

namespace detail {

inline std::uint32_t crc32_of_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  char buffer[1 << 16];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buffer),
                static_cast<uInt>(in.gcount()));
    if (in.eof()) break;
  }
  return static_cast<std::uint32_t>(crc);
}

inline nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [key, value] : p.params) params[key] = value;
  return nlohmann::json{{"model", p.model},
                        {"params", params},
                        {"lambdas", p.lambdas},
                        {"data_fingerprint", p.data_fingerprint},
                        {"spectral_fingerprint", p.spectral_fingerprint},
                        {"notes", p.notes}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.model = j.at("model").get<std::string>();
  for (const auto& [key, value] : j.at("params").items())
    p.params[key] = value.get<double>();
  p.lambdas = j.at("lambdas").get<std::vector<double>>();
  p.data_fingerprint = j.at("data_fingerprint").get<std::uint32_t>();
  p.spectral_fingerprint = j.at("spectral_fingerprint").get<std::uint32_t>();
  p.notes = j.at("notes").get<std::vector<std::string>>();
  return p;
}

}  // namespace detail

// Writes members as matrix files into a directory and records each one's
// checksum in the manifest; finish() writes the manifest itself.
class ArchiveWriter {
 public:
  ArchiveWriter(const std::filesystem::path& dir, const std::string& kind)
      : dir_(dir) {
    std::filesystem::create_directories(dir);
    manifest_["format_version"] = kArchiveVersion;
    manifest_["kind"] = kind;
    manifest_["members"] = nlohmann::json::object();
  }

  void add_matrix(const std::string& name, const Eigen::MatrixXd& m) {
    std::string file = name + ".mat";
    write_matrix_file(dir_ / file, m);
    manifest_["members"][name] = {
        {"file", file}, {"crc32", detail::crc32_of_file(dir_ / file)}};
  }

  void add_vector(const std::string& name, const Eigen::VectorXd& v) {
    add_matrix(name, Eigen::MatrixXd(v));
  }

  nlohmann::json& manifest() { return manifest_; }

  void finish() {
    std::ofstream out(dir_ / "manifest", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir_ / "manifest").string());
    out << manifest_.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
};

// Reads an archive directory, refusing version mismatches and verifying the
// checksum of every member it loads.
class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& dir) : dir_(dir) {
    std::ifstream in(dir / "manifest", std::ios::binary);
    if (!in)
      throw DataError("no archive manifest at " + (dir / "manifest").string());
    try {
      manifest_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad manifest in " + dir.string() + ": " + e.what());
    }
    int version = manifest_.value("format_version", -1);
    if (version != kArchiveVersion)
      throw DataError("archive " + dir.string() + " has format version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kArchiveVersion));
  }

  std::string kind() const { return manifest_.at("kind").get<std::string>(); }
  const nlohmann::json& manifest() const { return manifest_; }
  bool has_member(const std::string& name) const {
    return manifest_.at("members").contains(name);
  }

  Eigen::MatrixXd matrix(const std::string& name) const {
    const nlohmann::json& members = manifest_.at("members");
    if (!members.contains(name))
      throw DataError("archive " + dir_.string() + " has no member '" + name +
                      "'");
    const nlohmann::json& entry = members.at(name);
    std::filesystem::path file = dir_ / entry.at("file").get<std::string>();
    std::uint32_t expected = entry.at("crc32").get<std::uint32_t>();
    std::uint32_t actual = detail::crc32_of_file(file);
    if (actual != expected)
      throw DataError("checksum mismatch for member '" + name + "' in " +
                      dir_.string());
    return read_matrix_file(file);
  }

  Eigen::VectorXd vector(const std::string& name) const {
    Eigen::MatrixXd m = matrix(name);
    if (m.cols() != 1)
      throw DataError("member '" + name + "' is not a column vector");
    return Eigen::VectorXd(m.col(0));
  }

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
};

// ---- InteractionMatrix ----

inline void save_archive(const std::filesystem::path& dir,
                         const InteractionMatrix& m) {
  ArchiveWriter w(dir, "interactions");
  Eigen::MatrixXd row_ptr(1, static_cast<Eigen::Index>(m.num_users) + 1);
  std::size_t nnz = m.num_interactions();
  Eigen::MatrixXd items(1, static_cast<Eigen::Index>(nnz));
  Eigen::Index at = 0;
  row_ptr(0, 0) = 0;
  for (std::size_t u = 0; u < m.num_users; ++u) {
    for (std::uint32_t item : m.rows[u]) items(0, at++) = item;
    row_ptr(0, static_cast<Eigen::Index>(u) + 1) = static_cast<double>(at);
  }
  w.add_matrix("row_ptr", row_ptr);
  w.add_matrix("items", items);
  w.manifest()["num_users"] = m.num_users;
  w.manifest()["num_items"] = m.num_items;
  w.manifest()["user_ids"] = m.user_ids;
  w.manifest()["item_ids"] = m.item_ids;
  w.manifest()["fingerprint"] = m.fingerprint();
  w.finish();
}

inline InteractionMatrix load_interactions_archive(
    const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "interactions")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected interactions");
  InteractionMatrix m;
  m.num_users = r.manifest().at("num_users").get<std::size_t>();
  m.num_items = r.manifest().at("num_items").get<std::size_t>();
  m.user_ids = r.manifest().at("user_ids").get<std::vector<std::string>>();
  m.item_ids = r.manifest().at("item_ids").get<std::vector<std::string>>();
  Eigen::MatrixXd row_ptr = r.matrix("row_ptr");
  Eigen::MatrixXd items = r.matrix("items");
  if (row_ptr.cols() != static_cast<Eigen::Index>(m.num_users) + 1)
    throw DataError(dir.string() + ": row_ptr length mismatch");
  m.rows.resize(m.num_users);
  for (std::size_t u = 0; u < m.num_users; ++u) {
    auto begin = static_cast<Eigen::Index>(row_ptr(0, u));
    auto end = static_cast<Eigen::Index>(row_ptr(0, u + 1));
    if (begin > end || end > items.cols())
      throw DataError(dir.string() + ": row_ptr out of range");
    for (Eigen::Index i = begin; i < end; ++i)
      m.rows[u].push_back(static_cast<std::uint32_t>(items(0, i)));
  }
  std::uint32_t expected = r.manifest().at("fingerprint").get<std::uint32_t>();
  if (m.fingerprint() != expected)
    throw DataError(dir.string() + ": interaction fingerprint mismatch");
  return m;
}

// ---- SpectralDecomposition ----

inline void save_archive(const std::filesystem::path& dir,
                         const SpectralDecomposition& spec) {
  ArchiveWriter w(dir, "spectral");
  w.add_matrix("V", spec.basis);
  w.add_vector("sigma", spec.sigma);
  w.manifest()["rank_tolerance"] = spec.rank_tolerance;
  w.manifest()["data_fingerprint"] = spec.data_fingerprint;
  w.finish();
}

inline SpectralDecomposition load_spectral(const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "spectral")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected spectral");
  SpectralDecomposition spec;
  spec.basis = r.matrix("V");
  spec.sigma = r.vector("sigma");
  spec.rank_tolerance = r.manifest().at("rank_tolerance").get<double>();
  spec.data_fingerprint =
      r.manifest().at("data_fingerprint").get<std::uint32_t>();
  if (spec.basis.cols() != spec.sigma.size())
    throw DataError(dir.string() + ": V and sigma disagree on rank");
  return spec;
}

// ---- SimilarityModel ----

namespace detail {

inline void write_similarity_members(ArchiveWriter& w,
                                     const SimilarityModel& m) {
  w.manifest()["layout"] =
      m.kind == SimilarityModel::Kind::Dense ? "dense" : "factored";
  w.manifest()["zero_diagonal"] = m.zero_diagonal;
  w.manifest()["provenance"] = provenance_to_json(m.provenance);
  if (m.kind == SimilarityModel::Kind::Dense) {
    w.add_matrix("W", m.dense);
  } else {
    w.add_matrix("V", m.basis);
    w.add_vector("d", m.diag_ratios);
    if (m.sigma.size() > 0) w.add_vector("sigma", m.sigma);
    if (m.has_left_scale()) w.add_vector("left_scale", m.left_scale);
    if (m.has_right_scale()) w.add_vector("right_scale", m.right_scale);
  }
}

inline SimilarityModel read_similarity_members(const ArchiveReader& r,
                                               const std::string& dir_name) {
  SimilarityModel m;
  std::string layout = r.manifest().at("layout").get<std::string>();
  if (layout == "dense") {
    m.kind = SimilarityModel::Kind::Dense;
    m.dense = r.matrix("W");
  } else if (layout == "factored") {
    m.kind = SimilarityModel::Kind::Factored;
    m.basis = r.matrix("V");
    m.diag_ratios = r.vector("d");
    if (r.has_member("sigma")) m.sigma = r.vector("sigma");
    if (r.has_member("left_scale")) m.left_scale = r.vector("left_scale");
    if (r.has_member("right_scale")) m.right_scale = r.vector("right_scale");
  } else {
    throw DataError(dir_name + ": unknown model layout '" + layout + "'");
  }
  m.zero_diagonal = r.manifest().at("zero_diagonal").get<bool>();
  m.provenance = provenance_from_json(r.manifest().at("provenance"));
  return m;
}

}  // namespace detail

inline void save_archive(const std::filesystem::path& dir,
                         const SimilarityModel& m) {
  ArchiveWriter w(dir, "similarity");
  detail::write_similarity_members(w, m);
  w.finish();
}

inline SimilarityModel load_similarity(const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "similarity" && r.kind() != "tuned" && r.kind() != "nearby")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected a similarity model");
  return detail::read_similarity_members(r, dir.string());
}

// ---- FactorModel ----

inline void save_archive(const std::filesystem::path& dir,
                         const FactorModel& m) {
  ArchiveWriter w(dir, "factor");
  w.manifest()["factor_kind"] =
      m.kind == FactorModel::Kind::SpectralMf ? "mf" : "wmf";
  w.manifest()["shrinkage"] = m.shrinkage;
  w.manifest()["alpha"] = m.alpha;
  w.manifest()["objective_trace"] = m.objective_trace;
  w.manifest()["provenance"] = detail::provenance_to_json(m.provenance);
  w.add_matrix("P", m.user_factors);
  w.add_matrix("Q", m.item_factors);
  if (m.sigma.size() > 0) w.add_vector("sigma", m.sigma);
  w.finish();
}

inline FactorModel load_factor(const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "factor")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected a factor model");
  FactorModel m;
  std::string fk = r.manifest().at("factor_kind").get<std::string>();
  if (fk == "mf")
    m.kind = FactorModel::Kind::SpectralMf;
  else if (fk == "wmf")
    m.kind = FactorModel::Kind::Wmf;
  else
    throw DataError(dir.string() + ": unknown factor kind '" + fk + "'");
  m.shrinkage = r.manifest().at("shrinkage").get<double>();
  m.alpha = r.manifest().at("alpha").get<double>();
  m.objective_trace =
      r.manifest().at("objective_trace").get<std::vector<double>>();
  m.provenance = detail::provenance_from_json(r.manifest().at("provenance"));
  m.user_factors = r.matrix("P");
  m.item_factors = r.matrix("Q");
  if (r.has_member("sigma")) m.sigma = r.vector("sigma");
  return m;
}

// ---- TunedModel ----

inline void save_archive(const std::filesystem::path& dir,
                         const TunedModel& tuned) {
  ArchiveWriter w(dir, "tuned");
  detail::write_similarity_members(w, tuned.model);
  w.add_vector("alphas", tuned.alphas);
  w.manifest()["lambda0"] = tuned.lambda0;
  w.manifest()["c"] = tuned.c;
  w.manifest()["loss_trace"] = tuned.loss_trace;
  w.finish();
}

inline TunedModel load_tuned(const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "tuned")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected a tuned model");
  TunedModel tuned;
  tuned.model = detail::read_similarity_members(r, dir.string());
  tuned.alphas = r.vector("alphas");
  tuned.lambda0 = r.manifest().at("lambda0").get<double>();
  tuned.c = r.manifest().at("c").get<double>();
  tuned.loss_trace = r.manifest().at("loss_trace").get<std::vector<double>>();
  tuned.lambdas = tuned.model.provenance.lambdas;
  return tuned;
}

// ---- Nearby augmentations ----

inline void save_archive(const std::filesystem::path& dir,
                         const NearbyResult& result, NearbyMode mode) {
  ArchiveWriter w(dir, "nearby");
  detail::write_similarity_members(w, result.model);
  w.manifest()["loss_trace"] = result.loss_trace;
  if (mode == NearbyMode::HeadTail) {
    w.manifest()["mode"] = "ht";
    w.add_vector("h", result.ht.h);
    w.add_vector("t", result.ht.t);
  } else {
    w.manifest()["mode"] = "sparse";
    w.manifest()["threshold"] = result.sparsify.threshold;
    Eigen::MatrixXd survivors(
        static_cast<Eigen::Index>(result.sparsify.survivors()), 3);
    for (std::size_t e = 0; e < result.sparsify.survivors(); ++e) {
      survivors(static_cast<Eigen::Index>(e), 0) = result.sparsify.rows[e];
      survivors(static_cast<Eigen::Index>(e), 1) = result.sparsify.cols[e];
      survivors(static_cast<Eigen::Index>(e), 2) =
          result.sparsify.s_logits(static_cast<Eigen::Index>(e));
    }
    w.add_matrix("survivors", survivors);
  }
  w.finish();
}

inline NearbyResult load_nearby(const std::filesystem::path& dir) {
  ArchiveReader r(dir);
  if (r.kind() != "nearby")
    throw DataError(dir.string() + " is a '" + r.kind() +
                    "' archive, expected a nearby augmentation");
  NearbyResult result;
  result.model = detail::read_similarity_members(r, dir.string());
  result.loss_trace = r.manifest().at("loss_trace").get<std::vector<double>>();
  std::string mode = r.manifest().at("mode").get<std::string>();
  if (mode == "ht") {
    result.ht.h = r.vector("h");
    result.ht.t = r.vector("t");
  } else if (mode == "sparse") {
    result.sparsify.threshold = r.manifest().at("threshold").get<double>();
    Eigen::MatrixXd survivors = r.matrix("survivors");
    result.sparsify.s_logits.resize(survivors.rows());
    for (Eigen::Index e = 0; e < survivors.rows(); ++e) {
      result.sparsify.rows.push_back(
          static_cast<std::uint32_t>(survivors(e, 0)));
      result.sparsify.cols.push_back(
          static_cast<std::uint32_t>(survivors(e, 1)));
      result.sparsify.s_logits(e) = survivors(e, 2);
    }
  } else {
    throw DataError(dir.string() + ": unknown augmentation mode '" + mode +
                    "'");
  }
  return result;
}

}  // namespace linrec
