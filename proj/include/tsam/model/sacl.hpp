#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "tsam/ad/tensor.hpp"

namespace tsam::model {

struct SaclConfig {
  double tau = 0.02;
  std::size_t k = 16;
  bool enable_sv = true;
  bool enable_st = true;
  std::uint64_t seed = 0;
};

/// Row-major B x K matrix; row i holds K distinct indices drawn uniformly
/// from {0..B-1} \ {i}.
std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t k, std::mt19937_64& rng);
std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t k, std::uint64_t seed);

/// Mean InfoNCE over B anchors with cosine similarity. `negatives` stacks
/// the K negatives of anchor i in rows [i*K, (i+1)*K).
template <typename T>
ad::Tensor<T> info_nce(const ad::Tensor<T>& anchors, const ad::Tensor<T>& positives,
                       const ad::Tensor<T>& negatives, std::size_t k, double tau);

/// InfoNCE whose negatives for anchor i are rows index[i*K + j] of `pool`.
template <typename T>
ad::Tensor<T> info_nce_indexed(const ad::Tensor<T>& anchors, const ad::Tensor<T>& positives,
                               const ad::Tensor<T>& pool, const std::vector<std::size_t>& index, std::size_t k,
                               double tau);

template <typename T>
struct SaclLosses {
  ad::Tensor<T> sv;  // L_{S->V} + L_{V->S}
  ad::Tensor<T> st;  // L_{S->T} + L_{T->S}
};

/// Both SaCL terms for one batch of per-entity modality embeddings. Each of
/// the four directions samples its own negatives from `rng`; K is capped at
/// B - 1. Disabled terms, and batches with fewer than two rows, give 0.
template <typename T>
SaclLosses<T> sacl_loss(const ad::Tensor<T>& s, const ad::Tensor<T>& v, const ad::Tensor<T>& t,
                        const SaclConfig& cfg, std::mt19937_64& rng);

}  // namespace tsam::model
