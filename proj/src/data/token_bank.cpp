#include "tsam/data/token_bank.hpp"

#include <string>

#include "tsam/error.hpp"
#include "tsam/util/binary_io.hpp"

namespace tsam::data {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kVisual: return "visual";
    case Modality::kTextual: return "textual";
  }
  return "?";
}

TokenBank::TokenBank(Modality modality, std::uint32_t dim) : modality_(modality), dim_(dim) {
  if (dim == 0) throw ShapeError("token bank dimension must be positive");
}

void TokenBank::add(std::uint64_t entity_id, std::span<const float> tokens) {
  if (tokens.empty() || tokens.size() % dim_ != 0) {
    throw ShapeError("entity " + std::to_string(entity_id) + ": " + std::to_string(tokens.size()) +
                     " values is not a positive multiple of dim " + std::to_string(dim_));
  }
  if (!index_.emplace(entity_id, entries_.size()).second) {
    throw FormatError(FormatError::Code::kDuplicateEntity,
                      "entity " + std::to_string(entity_id) + " appears twice in token bank");
  }
  entries_.push_back({entity_id, static_cast<std::uint32_t>(tokens.size() / dim_), values_.size()});
  values_.insert(values_.end(), tokens.begin(), tokens.end());
}

std::optional<std::span<const float>> TokenBank::tokens(std::uint64_t entity_id) const {
  auto it = index_.find(entity_id);
  if (it == index_.end()) return std::nullopt;
  const Entry& e = entries_[it->second];
  return std::span<const float>(values_).subspan(e.offset, std::size_t{e.token_count} * dim_);
}

std::uint32_t TokenBank::token_count(std::uint64_t entity_id) const {
  auto it = index_.find(entity_id);
  return it == index_.end() ? 0 : entries_[it->second].token_count;
}

std::size_t TokenBank::coverage(std::size_t entity_count) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.entity_id < entity_count ? 1 : 0;
  return n;
}

std::vector<std::uint8_t> encode_token_bank(const TokenBank& bank) {
  util::ByteWriter w;
  w.bytes("MMTK");
  w.u16(kTokenBankVersion);
  w.u8(static_cast<std::uint8_t>(bank.modality()));
  w.u8(0);
  w.u32(bank.dim());
  w.u64(bank.entity_count());
  const auto values = bank.values();
  for (const auto& e : bank.entries()) {
    w.u64(e.entity_id);
    w.u32(e.token_count);
    for (std::size_t i = 0; i < std::size_t{e.token_count} * bank.dim(); ++i) w.f32(values[e.offset + i]);
  }
  return w.take();
}

TokenBank decode_token_bank(std::span<const std::uint8_t> bytes, std::optional<Modality> expected,
                            std::string_view source) {
  const std::string src(source);
  util::ByteReader r(bytes, src);
  if (bytes.size() >= 4 && r.bytes(4, "magic") != "MMTK") {
    throw FormatError(FormatError::Code::kBadMagic, src + ": not an MMTK token bank (bad magic)");
  }
  if (bytes.size() < 4) r.bytes(4, "magic");
  const std::uint16_t version = r.u16("version");
  if (version != kTokenBankVersion) {
    throw FormatError(FormatError::Code::kVersionMismatch,
                      src + ": unsupported MMTK version " + std::to_string(version) + " (expected " +
                          std::to_string(kTokenBankVersion) + ")");
  }
  const std::uint8_t modality_byte = r.u8("modality");
  const std::uint8_t reserved = r.u8("reserved");
  if (modality_byte != 1 && modality_byte != 2) {
    throw FormatError(FormatError::Code::kInvalidHeader,
                      src + ": unknown modality byte " + std::to_string(modality_byte));
  }
  const auto modality = static_cast<Modality>(modality_byte);
  if (expected && *expected != modality) {
    throw FormatError(FormatError::Code::kModalityMismatch,
                      src + ": bank holds " + std::string(modality_name(modality)) + " tokens, expected " +
                          std::string(modality_name(*expected)));
  }
  if (reserved != 0) throw FormatError(FormatError::Code::kInvalidHeader, src + ": reserved byte is not zero");
  const std::uint32_t dim = r.u32("dim");
  if (dim == 0) throw FormatError(FormatError::Code::kInvalidHeader, src + ": dim is zero");
  const std::uint64_t count = r.u64("entity_count");

  TokenBank bank(modality, dim);
  std::vector<float> buf;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.u64("entity id");
    const std::uint32_t tokens = r.u32("token count");
    if (tokens == 0) {
      throw FormatError(FormatError::Code::kInvalidHeader,
                        src + ": entity " + std::to_string(id) + " has zero tokens");
    }
    buf.clear();
    r.f32_array(std::uint64_t{tokens} * dim, buf, "token values");
    bank.add(id, buf);
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Code::kTrailingData,
                      src + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
  }
  return bank;
}

void write_token_bank(const TokenBank& bank, const std::filesystem::path& path) {
  util::write_file(path, encode_token_bank(bank));
}

TokenBank load_token_bank(const std::filesystem::path& path, std::optional<Modality> expected) {
  const auto bytes = util::read_file(path);
  return decode_token_bank(bytes, expected, path.string());
}

}  // namespace tsam::data
