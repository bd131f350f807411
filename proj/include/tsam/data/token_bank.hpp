#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tsam::data {

enum class Modality : std::uint8_t { kVisual = 1, kTextual = 2 };

std::string_view modality_name(Modality m);

/// Per-entity sequences of fixed-width token vectors for one modality.
/// Entities keep the order they were added in (the on-disk order), and any
/// entity may be absent.
class TokenBank {
 public:
  struct Entry {
    std::uint64_t entity_id;
    std::uint32_t token_count;
    std::size_t offset;  // into values(), in floats
  };

  TokenBank(Modality modality, std::uint32_t dim);

  // `tokens` holds token_count * dim values, row-major. Throws FormatError
  // (kDuplicateEntity) on a repeated id and ShapeError on a ragged token.
  void add(std::uint64_t entity_id, std::span<const float> tokens);

  Modality modality() const { return modality_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t entity_count() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::span<const float> values() const { return values_; }

  bool contains(std::uint64_t entity_id) const { return index_.contains(entity_id); }
  // Row-major tokens of one entity, or nullopt if absent.
  std::optional<std::span<const float>> tokens(std::uint64_t entity_id) const;
  std::uint32_t token_count(std::uint64_t entity_id) const;

  // Entities with id < entity_count that have a sequence.
  std::size_t coverage(std::size_t entity_count) const;

 private:
  Modality modality_;
  std::uint32_t dim_;
  std::vector<Entry> entries_;
  std::vector<float> values_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

inline constexpr std::uint16_t kTokenBankVersion = 1;

/// MMTK layout (little-endian): "MMTK", u16 version, u8 modality, u8 reserved,
/// u32 dim, u64 entity_count, then per entity u64 id, u32 token_count and
/// token_count * dim f32 values.
std::vector<std::uint8_t> encode_token_bank(const TokenBank& bank);
TokenBank decode_token_bank(std::span<const std::uint8_t> bytes, std::optional<Modality> expected,
                            std::string_view source = "<memory>");

void write_token_bank(const TokenBank& bank, const std::filesystem::path& path);
TokenBank load_token_bank(const std::filesystem::path& path, std::optional<Modality> expected);

}  // namespace tsam::data
