#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/data/token_bank.hpp"
#include "tsam/data/triple_store.hpp"
#include "tsam/eval/evaluator.hpp"
#include "tsam/model/decoder.hpp"
#include "tsam/model/encoder.hpp"
#include "tsam/model/fusion.hpp"
#include "tsam/model/kge.hpp"
#include "tsam/model/param_store.hpp"
#include "tsam/model/sacl.hpp"
#include "tsam/train/config.hpp"

namespace tsam::train {

struct ModelDims {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;  // stored relations; inverses are added
  std::size_t visual_dim = 0;
  std::size_t textual_dim = 0;
  std::size_t max_tokens = 16;
};

/// Every trainable tensor of the model, bound by name into one store. The
/// visual and textual encoders share [ENT] and the transformer blocks; each
/// modality keeps its own projection, placeholder and positional table.
template <typename T>
struct Model {
  ModelConfig config;
  std::size_t max_tokens = 16;
  model::ParamStore<T> store;
  model::KgeParams<T> kge;
  model::ProjectionParams<T> proj_visual, proj_textual;
  model::EncoderParams<T> enc_visual, enc_textual;
  model::FusionParams<T> fusion;
  model::DecoderParams<T> decoder;  // decoder score mode only

  static Model create(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed);
  static Model bind(const ModelConfig& config, std::size_t max_tokens, model::ParamStore<T> store);

  template <typename U>
  Model<U> cast() const {
    return Model<U>::bind(config, max_tokens, store.template cast<U>());
  }

  std::size_t entity_count() const { return kge.entity.rows(); }
};

struct ModalityInputs {
  model::ModalityTokens visual;
  model::ModalityTokens textual;

  static ModalityInputs from_banks(const data::TokenBank& visual, const data::TokenBank& textual,
                                   std::size_t entity_count, std::size_t max_tokens);
};

template <typename T>
struct EntityTable {
  ad::Tensor<T> e_f;      // [E x d]
  ad::Tensor<T> weights;  // [E x 3] (s, v, t); undefined without FgMAF
};

// Fused embeddings for every entity (e_str alone when FgMAF is off).
template <typename T>
EntityTable<T> entity_table(const Model<T>& m, const ModalityInputs& inputs);

/// Raw Score(h, r, t_n) for every query row and candidate: [B x E]. Decoder
/// mode dots the decoded t^p with each e_f row; kge mode applies the
/// configured plausibility to fused heads and candidates.
template <typename T>
ad::Tensor<T> candidate_logits(const Model<T>& m, const ad::Tensor<T>& e_f, std::span<const data::Triple> queries);

// sigmoid(candidate_logits).
template <typename T>
ad::Tensor<T> score_candidates(const Model<T>& m, const ad::Tensor<T>& e_f, std::span<const data::Triple> queries);

template <typename T>
struct BatchLosses {
  ad::Tensor<T> total;
  ad::Tensor<T> prediction;
  ad::Tensor<T> sv;
  ad::Tensor<T> st;
};

/// Forward pass for one batch of (h, r, t) training queries. SaCL runs on
/// the distinct heads of the batch and draws its negatives from `rng`.
template <typename T>
BatchLosses<T> batch_losses(const Model<T>& m, const ModalityInputs& inputs, std::span<const data::Triple> batch,
                            const model::SaclConfig& sacl, double label_smoothing, std::mt19937_64& rng);

// Ranks on raw scores; sigmoid is monotone and would only add float ties.
eval::QueryScorer model_scorer(const Model<float>& m, const ModalityInputs& inputs);

}  // namespace tsam::train
