#pragma once

#include <random>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/model/param_store.hpp"
#include "tsam/model/transformer.hpp"

namespace tsam::model {

template <typename T>
struct DecoderParams {
  TransformerShape shape;
  ad::Tensor<T> cls_token;  // [d]
  ad::Tensor<T> positions;  // [2 x d], added to the h_f and r slots
  std::vector<TransformerLayer<T>> layers;

  static DecoderParams create(ParamStore<T>& store, const TransformerShape& shape, std::mt19937_64& rng);
  static DecoderParams bind(const ParamStore<T>& store, const TransformerShape& shape);
};

/// Runs the blocks over ([CLS], h_f_b, r_b) for every row b and returns the
/// [CLS] outputs, [B x d]. With no layers every row equals cls_token.
template <typename T>
ad::Tensor<T> decode_tail(const ad::Tensor<T>& h_f, const ad::Tensor<T>& r, const DecoderParams<T>& dec);

}  // namespace tsam::model
