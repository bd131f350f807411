#include "tsam/eval/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace tsam::eval {

namespace {

constexpr std::size_t kQueryChunk = 256;

struct Query {
  data::Triple triple;
  bool head_side;
};

void append_kv(std::string& out, const std::string& prefix, const DirectionMetrics& d) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s.queries=%zu\n%s.mrr=%.6f\n%s.hits@1=%.6f\n%s.hits@3=%.6f\n%s.hits@10=%.6f\n",
                prefix.c_str(), d.queries, prefix.c_str(), d.mrr, prefix.c_str(), d.hits1, prefix.c_str(), d.hits3,
                prefix.c_str(), d.hits10);
  out += buf;
}

}  // namespace

DirectionMetrics summarize(std::span<const std::size_t> ranks) {
  DirectionMetrics d;
  d.queries = ranks.size();
  if (ranks.empty()) return d;
  double rr = 0;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  for (std::size_t r : ranks) {
    rr += 1.0 / static_cast<double>(r);
    h1 += r <= 1;
    h3 += r <= 3;
    h10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  d.mrr = rr / n;
  d.hits1 = static_cast<double>(h1) / n;
  d.hits3 = static_cast<double>(h3) / n;
  d.hits10 = static_cast<double>(h10) / n;
  return d;
}

Metrics evaluate(const QueryScorer& scorer, const data::TripleStore& store, data::Split split, bool filtered,
                 std::vector<RankResult>* ranks) {
  const auto triples = store.split(split);
  const std::size_t E = store.entity_count();
  std::vector<Query> queries;
  queries.reserve(2 * triples.size());
  for (const auto& t : triples) queries.push_back({t, false});
  for (const auto& t : triples) queries.push_back({store.inverted(t), true});

  std::vector<std::size_t> tail_ranks, head_ranks;
  std::vector<data::Triple> chunk;
  std::vector<float> scores;
  std::vector<std::uint32_t> filter;
  for (std::size_t begin = 0; begin < queries.size(); begin += kQueryChunk) {
    const std::size_t end = std::min(queries.size(), begin + kQueryChunk);
    chunk.clear();
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(queries[i].triple);
    scores.clear();
    scorer(chunk, scores);
    if (scores.size() != chunk.size() * E) {
      throw ContractError("evaluate: scorer returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(chunk.size()) + " queries over " + std::to_string(E) + " entities");
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& q = queries[i];
      filter.clear();
      if (filtered) {
        for (std::uint32_t a : store.known_answers(q.triple.head, q.triple.relation)) {
          if (a != q.triple.tail) filter.push_back(a);
        }
      }
      const std::span<const float> row(scores.data() + (i - begin) * E, E);
      const std::size_t rank = rank_query<float>(row, q.triple.tail, filter);
      (q.head_side ? head_ranks : tail_ranks).push_back(rank);
      if (ranks) ranks->push_back({q.triple, rank, filtered});
    }
  }

  Metrics m;
  m.split = split;
  m.filtered = filtered;
  m.tail = summarize(tail_ranks);
  m.head = summarize(head_ranks);
  std::vector<std::size_t> all = tail_ranks;
  all.insert(all.end(), head_ranks.begin(), head_ranks.end());
  m.both = summarize(all);
  return m;
}

std::string format_kv(const Metrics& m) {
  std::string out = "split=" + std::string(data::split_name(m.split)) + "\n";
  out += std::string("setting=") + (m.filtered ? "filtered" : "raw") + "\n";
  append_kv(out, "tail", m.tail);
  append_kv(out, "head", m.head);
  append_kv(out, "mean", m.both);
  return out;
}

std::string format_report(const Metrics& m) {
  std::string out = "split " + std::string(data::split_name(m.split)) + " (" + (m.filtered ? "filtered" : "raw") +
                    ")\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %8s %8s %8s %8s %8s\n", "", "queries", "MRR", "Hits@1", "Hits@3", "Hits@10");
  out += buf;
  auto row = [&](const char* name, const DirectionMetrics& d) {
    std::snprintf(buf, sizeof buf, "%-6s %8zu %8.4f %8.4f %8.4f %8.4f\n", name, d.queries, d.mrr, d.hits1, d.hits3,
                  d.hits10);
    out += buf;
  };
  row("tail", m.tail);
  row("head", m.head);
  row("mean", m.both);
  return out;
}

void write_kv(const Metrics& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_kv(m);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace tsam::eval
