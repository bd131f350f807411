#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tsam::data {

struct Triple {
  std::uint32_t head = 0;
  std::uint32_t relation = 0;
  std::uint32_t tail = 0;

  auto operator<=>(const Triple&) const = default;
};

enum class Split { kTrain, kValid, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

/// Entity/relation vocabularies, the three splits, and the filter index of
/// all known answers. Relation ids in [0, R) are the stored relations; ids in
/// [R, 2R) are their inverses, used for head prediction.
class TripleStore {
 public:
  TripleStore() = default;

  // Validates ids and split disjointness; throws ContractError on violation.
  TripleStore(std::vector<std::string> entity_names, std::vector<std::string> relation_names,
              std::vector<Triple> train, std::vector<Triple> valid, std::vector<Triple> test);

  std::size_t entity_count() const { return entity_names_.size(); }
  std::size_t relation_count() const { return relation_names_.size(); }
  // Base plus inverse relations.
  std::size_t query_relation_count() const { return 2 * relation_names_.size(); }

  std::uint32_t inverse(std::uint32_t relation) const {
    const auto r = static_cast<std::uint32_t>(relation_count());
    return relation < r ? relation + r : relation - r;
  }
  // (t, r + R, h) for a stored (h, r, t).
  Triple inverted(const Triple& t) const { return {t.tail, inverse(t.relation), t.head}; }

  std::span<const Triple> split(Split s) const;

  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  // Sorted known answers for the query (head, relation, ?) over all splits;
  // relation may be an inverse id.
  std::span<const std::uint32_t> known_answers(std::uint32_t head, std::uint32_t relation) const;
  bool is_known(const Triple& t) const;

 private:
  std::uint64_t key(std::uint32_t head, std::uint32_t relation) const {
    return static_cast<std::uint64_t>(head) * query_relation_count() + relation;
  }

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::vector<Triple> train_, valid_, test_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> filter_;
};

/// Reads entity2id, relation2id, train, valid and test (each optionally with
/// a .txt suffix) from `dir`. Errors carry file and line.
TripleStore load_triples(const std::filesystem::path& dir);

void write_triples(const TripleStore& store, const std::filesystem::path& dir);

}  // namespace tsam::data
