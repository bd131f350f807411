#pragma once

#include <cstddef>
#include <random>
#include <string_view>

#include "tsam/ad/tensor.hpp"
#include "tsam/model/param_store.hpp"

namespace tsam::model {

enum class FusionKind { kWeighted, kConcat };

std::string_view fusion_kind_name(FusionKind kind);
FusionKind parse_fusion_kind(std::string_view name);

template <typename T>
struct FusionParams {
  FusionKind kind = FusionKind::kWeighted;
  ad::Tensor<T> alpha;   // [d], shared by all entities
  ad::Tensor<T> weight;  // [3d x d], concat variant only
  ad::Tensor<T> bias;    // [d], concat variant only

  static FusionParams create(ParamStore<T>& store, std::size_t dim, FusionKind kind, std::mt19937_64& rng);
  static FusionParams bind(const ParamStore<T>& store, FusionKind kind);
};

/// Softmax over (alpha.e_str, alpha.e_vis, alpha.e_txt), in that order.
/// Vectors [d] give [3]; row stacks [N x d] give [N x 3].
template <typename T>
ad::Tensor<T> attention_weights(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                                const ad::Tensor<T>& alpha);

// w_s * e_str + w_v * e_vis + w_t * e_txt, for vectors or row stacks.
template <typename T>
ad::Tensor<T> fuse(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                   const ad::Tensor<T>& weights);

template <typename T>
struct FusedBatch {
  ad::Tensor<T> e_str, e_vis, e_txt;  // [N x d]
  ad::Tensor<T> e_f;                  // [N x d]
  ad::Tensor<T> weights;              // [N x 3], (s, v, t)
};

template <typename T>
FusedBatch<T> fuse_modalities(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                              const FusionParams<T>& params);

}  // namespace tsam::model
