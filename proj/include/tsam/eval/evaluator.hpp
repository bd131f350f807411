#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsam/data/triple_store.hpp"
#include "tsam/error.hpp"

namespace tsam::eval {

/// Pessimistic filtered rank of `gold`: 1 + the number of unfiltered
/// candidates scoring at least as high, gold itself excluded.
template <typename S>
std::size_t rank_query(std::span<const S> scores, std::uint32_t gold, std::span<const std::uint32_t> filter_out) {
  if (gold >= scores.size()) throw ContractError("rank_query: gold id out of range");
  std::vector<bool> skip(scores.size(), false);
  for (std::uint32_t f : filter_out) {
    if (f == gold) throw ContractError("rank_query: gold entity " + std::to_string(gold) + " is filtered out");
    if (f < skip.size()) skip[f] = true;
  }
  const S g = scores[gold];
  std::size_t rank = 1;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e != gold && !skip[e] && scores[e] >= g) ++rank;
  }
  return rank;
}

struct RankResult {
  data::Triple query;  // (head, relation, gold tail); relation may be an inverse id
  std::size_t rank = 0;
  bool filtered = true;
};

struct DirectionMetrics {
  std::size_t queries = 0;
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
};

struct Metrics {
  data::Split split = data::Split::kTest;
  bool filtered = true;
  DirectionMetrics tail;  // (h, r, ?)
  DirectionMetrics head;  // (t, r^-1, ?)
  DirectionMetrics both;  // all queries pooled
};

DirectionMetrics summarize(std::span<const std::size_t> ranks);

/// Fills `scores` with one row of entity_count scores per query (head,
/// relation), higher is better. Scores are only compared within a row.
using QueryScorer = std::function<void(std::span<const data::Triple> queries, std::vector<float>& scores)>;

/// Ranks both directions of every triple in `split`. Head prediction uses
/// the inverse relation. In filtered mode all other known answers are
/// removed from each query's candidates.
Metrics evaluate(const QueryScorer& scorer, const data::TripleStore& store, data::Split split, bool filtered,
                 std::vector<RankResult>* ranks = nullptr);

// "metric=value" lines, fixed order.
std::string format_kv(const Metrics& m);
// Human-readable table.
std::string format_report(const Metrics& m);
void write_kv(const Metrics& m, const std::filesystem::path& path);

}  // namespace tsam::eval
