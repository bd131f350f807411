#pragma once

// Brute-force ranking oracle and a small random graph for evaluator checks.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tsam/data/triple_store.hpp"
#include "tsam/eval/evaluator.hpp"

namespace tsam::testing {

namespace data = tsam::data;

// 20 entities, 3 relations, random disjoint splits.
inline data::TripleStore small_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::set<data::Triple> all;
  while (all.size() < 90) {
    all.insert({static_cast<std::uint32_t>(rng() % 20), static_cast<std::uint32_t>(rng() % 3),
                static_cast<std::uint32_t>(rng() % 20)});
  }
  std::vector<data::Triple> v(all.begin(), all.end());
  std::shuffle(v.begin(), v.end(), rng);
  std::vector<std::string> ents, rels;
  for (int i = 0; i < 20; ++i) ents.push_back("e" + std::to_string(i));
  for (int i = 0; i < 3; ++i) rels.push_back("r" + std::to_string(i));
  return data::TripleStore(ents, rels, {v.begin(), v.begin() + 60}, {v.begin() + 60, v.begin() + 75},
                           {v.begin() + 75, v.end()});
}

// Deterministic pseudo-random scores on a coarse grid, so ties are common.
inline float table_score(std::uint32_t head, std::uint32_t rel, std::uint32_t cand, std::uint64_t salt) {
  std::uint64_t x = (static_cast<std::uint64_t>(head) * 1315423911u) ^ (rel * 2654435761u) ^ (cand * 97531u) ^ salt;
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 29;
  return static_cast<float>(x % 7) * 0.25f;
}

inline eval::QueryScorer table_scorer(std::size_t entities, std::uint64_t salt) {
  return [=](std::span<const data::Triple> qs, std::vector<float>& out) {
    for (const auto& q : qs)
      for (std::uint32_t e = 0; e < entities; ++e) out.push_back(table_score(q.head, q.relation, e, salt));
  };
}

struct OracleMetrics {
  double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
};

// Independent re-implementation: enumerate every triple and candidate with
// plain loops, no filter index and no chunking.
inline OracleMetrics brute_force(const data::TripleStore& store, data::Split split, bool filtered, std::uint64_t salt) {
  std::vector<data::Triple> known;
  for (auto s : {data::Split::kTrain, data::Split::kValid, data::Split::kTest})
    for (const auto& t : store.split(s)) known.push_back(t);
  auto is_true = [&](std::uint32_t h, std::uint32_t r, std::uint32_t t) {
    return std::find(known.begin(), known.end(), data::Triple{h, r, t}) != known.end();
  };
  const auto R = static_cast<std::uint32_t>(store.relation_count());
  std::vector<std::size_t> ranks;
  for (int direction = 0; direction < 2; ++direction) {
    for (const auto& t : store.split(split)) {
      // Tail query (h, r, ?) or head query (?, r, t) asked as (t, r + R, ?).
      const std::uint32_t anchor = direction == 0 ? t.head : t.tail;
      const std::uint32_t gold = direction == 0 ? t.tail : t.head;
      const std::uint32_t rel = direction == 0 ? t.relation : t.relation + R;
      const float g = table_score(anchor, rel, gold, salt);
      std::size_t rank = 1;
      for (std::uint32_t e = 0; e < store.entity_count(); ++e) {
        if (e == gold) continue;
        const bool answer = direction == 0 ? is_true(anchor, t.relation, e) : is_true(e, t.relation, anchor);
        if (filtered && answer) continue;
        if (table_score(anchor, rel, e, salt) >= g) ++rank;
      }
      ranks.push_back(rank);
    }
  }
  OracleMetrics m;
  for (std::size_t r : ranks) {
    m.mrr += 1.0 / r;
    m.h1 += r <= 1;
    m.h3 += r <= 3;
    m.h10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.h1 /= n;
  m.h3 /= n;
  m.h10 /= n;
  return m;
}

}  // namespace tsam::testing
