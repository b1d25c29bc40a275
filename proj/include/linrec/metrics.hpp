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
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "linrec/common.hpp"

namespace linrec {

// Indices of the k largest scores, ranked best first. Equal scores break
// toward the lower item index so rankings are reproducible across runs and
// platforms. Entries equal to -infinity are excluded candidates and are never
// returned, even when fewer than k finite scores remain.
inline std::vector<std::uint32_t> top_k_indices(const Eigen::VectorXd& scores,
                                                std::size_t k) {
  std::vector<std::uint32_t> order;
  order.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (scores(i) != -std::numeric_limits<double>::infinity())
      order.push_back(static_cast<std::uint32_t>(i));
  auto better = [&scores](std::uint32_t a, std::uint32_t b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  };
  if (order.size() > k) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), better);
    order.resize(k);
  } else {
    std::sort(order.begin(), order.end(), better);
  }
  return order;
}

// Fraction of the held-out items recovered in the top k, normalized by
// min(k, |held|) so a short holdout can still reach 1.0.
inline double recall_at_k(const std::vector<std::uint32_t>& ranked,
                          const std::vector<std::uint32_t>& held,
                          std::size_t k) {
  if (held.empty()) throw ConfigError("recall_at_k: empty held-out set");
  std::size_t depth = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t pos = 0; pos < depth; ++pos)
    if (std::binary_search(held.begin(), held.end(), ranked[pos])) ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(std::min(k, held.size()));
}

// Binary truncated nDCG: DCG sums 1/log2(pos+1) over hit positions (1-based),
// the ideal places min(k, |held|) hits at the top.
inline double ndcg_at_k(const std::vector<std::uint32_t>& ranked,
                        const std::vector<std::uint32_t>& held, std::size_t k) {
  if (held.empty()) throw ConfigError("ndcg_at_k: empty held-out set");
  std::size_t depth = std::min(k, ranked.size());
  double dcg = 0.0;
  for (std::size_t pos = 0; pos < depth; ++pos)
    if (std::binary_search(held.begin(), held.end(), ranked[pos]))
      dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  double idcg = 0.0;
  std::size_t ideal = std::min(k, held.size());
  for (std::size_t pos = 0; pos < ideal; ++pos)
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  return dcg / idcg;
}

}  // namespace linrec
