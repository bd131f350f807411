#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/data/token_bank.hpp"
#include "tsam/model/param_store.hpp"
#include "tsam/model/transformer.hpp"

namespace tsam::model {

enum class Pooling { kEnt, kMean };

struct EncoderConfig {
  TransformerShape transformer;
  Pooling pooling = Pooling::kEnt;
  bool positional = false;
  std::size_t max_tokens = 16;
};

// Token projection into the shared space: out_i = token_i W + b.
template <typename T>
struct ProjectionParams {
  ad::Tensor<T> weight;  // [token_dim x d]
  ad::Tensor<T> bias;    // [d]

  static ProjectionParams create(ParamStore<T>& store, const std::string& prefix, std::size_t token_dim,
                                 std::size_t dim, std::mt19937_64& rng);
  static ProjectionParams bind(const ParamStore<T>& store, const std::string& prefix);
};

template <typename T>
struct EncoderParams {
  EncoderConfig config;
  ad::Tensor<T> ent_token;    // [d]
  ad::Tensor<T> placeholder;  // [token_dim], stands in for a missing modality
  ad::Tensor<T> positions;    // [max_tokens x d]; undefined when positional is off
  std::vector<TransformerLayer<T>> layers;

  static EncoderParams create(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& config,
                              std::size_t token_dim, std::mt19937_64& rng);
  static EncoderParams bind(const ParamStore<T>& store, const std::string& prefix, const EncoderConfig& config);
};

// Per-entity token rows pulled from a bank and truncated to max_tokens. An
// entity absent from the bank has an empty row range.
struct ModalityTokens {
  std::size_t token_dim = 0;
  std::vector<float> values;         // stacked rows, row-major
  std::vector<std::size_t> offsets;  // entity e owns rows [offsets[e], offsets[e+1])

  std::size_t entity_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t token_count(std::size_t entity) const { return offsets[entity + 1] - offsets[entity]; }
};

ModalityTokens prepare_tokens(const data::TokenBank& bank, std::size_t entity_count, std::size_t max_tokens);

template <typename T>
ad::Tensor<T> project_tokens(const ad::Tensor<T>& tokens, const ProjectionParams<T>& proj);

/// Prepends [ENT], runs the blocks and pools to a [d] vector.
template <typename T>
ad::Tensor<T> encode_sequence(const ad::Tensor<T>& projected, const EncoderParams<T>& enc);

/// Batched encoder over the listed entities: returns [entities.size() x d].
/// Entities without tokens are encoded from the placeholder token.
template <typename T>
ad::Tensor<T> encode_entities(const ModalityTokens& tokens, const std::vector<std::size_t>& entities,
                              const ProjectionParams<T>& proj, const EncoderParams<T>& enc);

}  // namespace tsam::model
