#include "tsam/train/checkpoint.hpp"

#include <algorithm>
#include <string>

#include "tsam/error.hpp"
#include "tsam/util/binary_io.hpp"

namespace tsam::train {

namespace {

constexpr std::string_view kMagic = "TSCK";
constexpr std::uint8_t kMaxRank = 8;

void write_floats(util::ByteWriter& w, std::span<const float> values) {
  for (float x : values) w.f32(x);
}

}  // namespace

bool is_checkpoint(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), bytes.begin());
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  util::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kCheckpointVersion);
  w.u16(0);
  w.u64(ckpt.config_hash);
  w.u64(ckpt.epoch);
  w.str(ckpt.config_text);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& t = ckpt.params.tensors()[i];
    w.str(ckpt.params.names()[i]);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    write_floats(w, t.data());
  }
  const auto& a = ckpt.adam;
  w.u64(a.step);
  w.f64(a.options.lr);
  w.f64(a.options.beta1);
  w.f64(a.options.beta2);
  w.f64(a.options.eps);
  if (a.m.size() != a.v.size()) throw ContractError("checkpoint: Adam moment buffers are misaligned");
  w.u32(static_cast<std::uint32_t>(a.m.size()));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    if (a.m[i].size() != a.v[i].size()) throw ContractError("checkpoint: Adam moment buffers are misaligned");
    w.u64(a.m[i].size());
    write_floats(w, a.m[i]);
    write_floats(w, a.v[i]);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::string_view source) {
  const std::string src(source);
  util::ByteReader r(bytes, src);
  if (r.bytes(std::min<std::size_t>(4, bytes.size()), "magic") != kMagic) {
    throw FormatError(FormatError::Code::kBadMagic, src + ": not a TSAM checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Code::kVersionMismatch,
                      src + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (r.u16("reserved") != 0) throw FormatError(FormatError::Code::kInvalidHeader, src + ": reserved field is not 0");

  Checkpoint ckpt;
  ckpt.config_hash = r.u64("config hash");
  ckpt.epoch = r.u64("epoch");
  ckpt.config_text = r.str("config text");
  if (util::fnv1a64(ckpt.config_text) != ckpt.config_hash) {
    throw FormatError(FormatError::Code::kInvalidHeader, src + ": config hash does not match the stored config");
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    const std::uint8_t rank = r.u8("tensor rank");
    if (rank > kMaxRank) {
      throw FormatError(FormatError::Code::kInvalidHeader, src + ": tensor '" + name + "' has rank " +
                                                                 std::to_string(rank));
    }
    ad::Shape shape;
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64("tensor dims");
      if (d == 0 || n > r.remaining() / d) {
        throw FormatError(FormatError::Code::kTruncated, src + ": tensor '" + name + "' exceeds the file");
      }
      n *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    std::vector<float> values;
    r.f32_array(n, values, "tensor values");
    if (ckpt.params.contains(name)) {
      throw FormatError(FormatError::Code::kInvalidHeader, src + ": duplicate tensor '" + name + "'");
    }
    ckpt.params.add(name, ad::Tensor<float>(std::move(shape), std::move(values)));
  }
  auto& a = ckpt.adam;
  a.step = r.u64("adam step");
  a.options.lr = r.f64("adam lr");
  a.options.beta1 = r.f64("adam beta1");
  a.options.beta2 = r.f64("adam beta2");
  a.options.eps = r.f64("adam eps");
  const std::uint32_t buffers = r.u32("adam buffer count");
  if (buffers != 0 && buffers != count) {
    throw FormatError(FormatError::Code::kLayoutMismatch,
                      src + ": " + std::to_string(buffers) + " Adam buffers for " + std::to_string(count) + " tensors");
  }
  for (std::uint32_t i = 0; i < buffers; ++i) {
    const std::uint64_t n = r.u64("adam buffer length");
    if (n != ckpt.params.tensors()[i].size()) {
      throw FormatError(FormatError::Code::kLayoutMismatch, src + ": Adam buffer " + std::to_string(i) +
                                                                " does not match its tensor");
    }
    a.m.emplace_back();
    a.v.emplace_back();
    r.f32_array(n, a.m.back(), "adam m");
    r.f32_array(n, a.v.back(), "adam v");
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Code::kTrailingData,
                      src + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  util::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = util::read_file(path);
  return decode_checkpoint(bytes, path.string());
}

}  // namespace tsam::train
