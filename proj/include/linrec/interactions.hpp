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

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include "linrec/common.hpp"
#include "linrec/rng.hpp"

namespace linrec {

// Sparse binary user x item matrix: one strictly increasing item-index list
// per user, plus the external-id maps for both axes.
struct InteractionMatrix {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::vector<std::uint32_t>> rows;  // sorted, deduplicated
  std::vector<std::string> user_ids;             // dense index -> external id
  std::vector<std::string> item_ids;

  std::size_t num_interactions() const {
    std::size_t total = 0;
    for (const auto& row : rows) total += row.size();
    return total;
  }

  bool user_has_item(std::size_t user, std::uint32_t item) const {
    const auto& row = rows[user];
    return std::binary_search(row.begin(), row.end(), item);
  }

  // Content fingerprint (CRC32 over shape and row data), used to tie
  // decompositions and models back to the matrix they were built from.
  std::uint32_t fingerprint() const {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::uint64_t shape[2] = {num_users, num_items};
    crc = crc32(crc, reinterpret_cast<const Bytef*>(shape), sizeof(shape));
    for (const auto& row : rows) {
      std::uint64_t len = row.size();
      crc = crc32(crc, reinterpret_cast<const Bytef*>(&len), sizeof(len));
      if (!row.empty()) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(row.data()),
                    static_cast<uInt>(row.size() * sizeof(std::uint32_t)));
      }
    }
    return static_cast<std::uint32_t>(crc);
  }
};

enum class Protocol { StrongGeneralization, LeaveOneOut };

struct SplitSpec {
  Protocol protocol = Protocol::StrongGeneralization;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  double holdout_fraction = 0.2;  // share of a held-out user's items hidden

  void validate() const {
    double sum = train_fraction + validation_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
    if (train_fraction < 0 || validation_fraction < 0 || test_fraction < 0)
      throw ConfigError("split fractions must be nonnegative");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw ConfigError("holdout fraction must lie in (0,1)");
  }
};

// One evaluated user: the items fed to the model and the items it must rank.
struct FoldPair {
  std::vector<std::uint32_t> input_items;
  std::vector<std::uint32_t> held_out_items;
};

struct Dataset {
  InteractionMatrix train;
  std::vector<FoldPair> validation_folds;
  std::vector<FoldPair> test_folds;
  std::size_t skipped_users = 0;  // LeaveOneOut users with < 2 items
};

struct LoadOptions {
  char delimiter = ',';
  bool skip_header = false;
  double binarize_threshold = 4.0;
  std::size_t min_user_items = 5;
  std::size_t min_item_users = 1;
};

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Reads `user,item[,rating]` rows, binarizes, and filters. Ratings below the
// threshold are dropped first; the min-count filters then iterate to a fixed
// point (dropping users can strand items and vice versa). Surviving users and
// items receive dense indices in order of first appearance in the file.
inline InteractionMatrix load_interactions(const std::string& path,
                                           const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path);

  struct RawRow {
    std::string user, item;
  };
  std::vector<RawRow> raw;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (first && opts.skip_header) {
      first = false;
      continue;
    }
    first = false;
    std::string trimmed = detail::strip(line);
    if (trimmed.empty()) continue;

    std::vector<std::string> fields;
    std::stringstream ss(trimmed);
    std::string field;
    while (std::getline(ss, field, opts.delimiter))
      fields.push_back(detail::strip(field));
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty())
      throw DataError("malformed row at line " + std::to_string(line_no) +
                      ": expected user" + opts.delimiter + "item[" +
                      opts.delimiter + "rating]");
    if (fields.size() >= 3 && !fields[2].empty()) {
      double rating;
      try {
        std::size_t pos = 0;
        rating = std::stod(fields[2], &pos);
        if (pos != fields[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError("malformed rating at line " + std::to_string(line_no) +
                        ": '" + fields[2] + "'");
      }
      if (rating < opts.binarize_threshold) continue;
    }
    raw.push_back({fields[0], fields[1]});
  }

  // Deduplicate (user,item) pairs, keeping first-seen order.
  std::unordered_map<std::string, std::size_t> user_first, item_first;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  {
    std::vector<std::string> users, items;
    std::unordered_map<std::uint64_t, bool> seen;
    for (const auto& row : raw) {
      auto uit = user_first.find(row.user);
      std::size_t u;
      if (uit == user_first.end()) {
        u = users.size();
        user_first.emplace(row.user, u);
        users.push_back(row.user);
      } else {
        u = uit->second;
      }
      auto iit = item_first.find(row.item);
      std::size_t i;
      if (iit == item_first.end()) {
        i = items.size();
        item_first.emplace(row.item, i);
        items.push_back(row.item);
      } else {
        i = iit->second;
      }
      std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
      if (!seen.emplace(key, true).second) continue;
      pairs.emplace_back(u, i);
    }

    // Iterated min-count filtering to a fixed point.
    std::vector<char> user_alive(users.size(), 1), item_alive(items.size(), 1);
    for (;;) {
      std::vector<std::size_t> user_count(users.size(), 0),
          item_count(items.size(), 0);
      for (const auto& [u, i] : pairs) {
        if (user_alive[u] && item_alive[i]) {
          ++user_count[u];
          ++item_count[i];
        }
      }
      bool changed = false;
      for (std::size_t u = 0; u < users.size(); ++u) {
        if (user_alive[u] && user_count[u] < opts.min_user_items) {
          user_alive[u] = 0;
          changed = true;
        }
      }
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (item_alive[i] && item_count[i] < opts.min_item_users) {
          item_alive[i] = 0;
          changed = true;
        }
      }
      if (!changed) break;
    }

    InteractionMatrix out;
    std::vector<std::size_t> user_remap(users.size(), SIZE_MAX),
        item_remap(items.size(), SIZE_MAX);
    for (std::size_t u = 0; u < users.size(); ++u) {
      if (user_alive[u]) {
        user_remap[u] = out.user_ids.size();
        out.user_ids.push_back(users[u]);
      }
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (item_alive[i]) {
        item_remap[i] = out.item_ids.size();
        out.item_ids.push_back(items[i]);
      }
    }
    out.num_users = out.user_ids.size();
    out.num_items = out.item_ids.size();
    out.rows.resize(out.num_users);
    for (const auto& [u, i] : pairs) {
      if (user_alive[u] && item_alive[i]) {
        out.rows[user_remap[u]].push_back(
            static_cast<std::uint32_t>(item_remap[i]));
      }
    }
    for (auto& row : out.rows) std::sort(row.begin(), row.end());
    if (out.num_interactions() == 0)
      throw DataError("empty matrix after filtering");
    return out;
  }
}

// Splits into train plus validation/test fold pairs.
//
// StrongGeneralization: users are shuffled once (Fisher-Yates, mt19937_64
// seeded with spec.seed) and partitioned by the fractions (train and
// validation sizes floored, test takes the remainder). Each validation/test
// user hides max(1, floor(items * holdout_fraction)) items, drawn without
// replacement, users processed in ascending dense index so draws are stable.
//
// LeaveOneOut: every user with >= 2 items hides exactly one uniformly drawn
// item (test fold); the train matrix keeps everything else. Users with fewer
// items are skipped with a warning and counted.
inline Dataset split(const InteractionMatrix& data, const SplitSpec& spec) {
  spec.validate();
  Dataset out;

  if (spec.protocol == Protocol::LeaveOneOut) {
    Rng rng(spec.seed);
    out.train.num_users = data.num_users;
    out.train.num_items = data.num_items;
    out.train.user_ids = data.user_ids;
    out.train.item_ids = data.item_ids;
    out.train.rows.resize(data.num_users);
    for (std::size_t u = 0; u < data.num_users; ++u) {
      const auto& row = data.rows[u];
      if (row.size() < 2) {
        out.train.rows[u] = row;
        ++out.skipped_users;
        continue;
      }
      std::size_t held_pos = rng.next_index(row.size());
      FoldPair fold;
      fold.held_out_items.push_back(row[held_pos]);
      for (std::size_t p = 0; p < row.size(); ++p)
        if (p != held_pos) fold.input_items.push_back(row[p]);
      out.train.rows[u] = fold.input_items;
      out.test_folds.push_back(std::move(fold));
    }
    if (out.skipped_users > 0)
      log_warn("leave-one-out skipped " + std::to_string(out.skipped_users) +
               " user(s) with fewer than 2 items");
    return out;
  }

  // Strong generalization.
  for (std::size_t u = 0; u < data.num_users; ++u) {
    if (data.rows[u].size() < 2)
      throw DataError("strong generalization requires every user to have >= 2 "
                      "items; user index " +
                      std::to_string(u) + " has " +
                      std::to_string(data.rows[u].size()));
  }
  Rng rng(spec.seed);
  std::vector<std::size_t> order(data.num_users);
  for (std::size_t u = 0; u < data.num_users; ++u) order[u] = u;
  rng.shuffle(order);

  const std::size_t n_train = static_cast<std::size_t>(
      static_cast<double>(data.num_users) * spec.train_fraction);
  const std::size_t n_val = static_cast<std::size_t>(
      static_cast<double>(data.num_users) * spec.validation_fraction);

  enum class Group { Train, Validation, Test };
  std::vector<Group> group(data.num_users, Group::Test);
  for (std::size_t p = 0; p < data.num_users; ++p) {
    if (p < n_train)
      group[order[p]] = Group::Train;
    else if (p < n_train + n_val)
      group[order[p]] = Group::Validation;
  }

  out.train.num_items = data.num_items;
  out.train.item_ids = data.item_ids;
  for (std::size_t u = 0; u < data.num_users; ++u) {
    if (group[u] != Group::Train) continue;
    out.train.rows.push_back(data.rows[u]);
    out.train.user_ids.push_back(data.user_ids[u]);
  }
  out.train.num_users = out.train.rows.size();

  // Hold-out draws consume the same stream, in user-index order.
  for (std::size_t u = 0; u < data.num_users; ++u) {
    if (group[u] == Group::Train) continue;
    const auto& row = data.rows[u];
    std::size_t n_held = static_cast<std::size_t>(
        static_cast<double>(row.size()) * spec.holdout_fraction);
    if (n_held < 1) n_held = 1;
    auto held_positions = rng.sample_without_replacement(row.size(), n_held);
    std::vector<char> is_held(row.size(), 0);
    for (std::size_t p : held_positions) is_held[p] = 1;
    FoldPair fold;
    for (std::size_t p = 0; p < row.size(); ++p) {
      if (is_held[p])
        fold.held_out_items.push_back(row[p]);
      else
        fold.input_items.push_back(row[p]);
    }
    if (group[u] == Group::Validation)
      out.validation_folds.push_back(std::move(fold));
    else
      out.test_folds.push_back(std::move(fold));
  }
  return out;
}

}  // namespace linrec
