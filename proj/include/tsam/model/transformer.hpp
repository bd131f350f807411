#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/model/param_store.hpp"

namespace tsam::model {

struct TransformerShape {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ffn = 128;
};

// One post-LN block: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
template <typename T>
struct TransformerLayer {
  ad::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Tensor<T> ln1_gain, ln1_bias;
  ad::Tensor<T> w1, b1, w2, b2;
  ad::Tensor<T> ln2_gain, ln2_bias;

  static TransformerLayer create(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
                                 std::size_t ffn, std::mt19937_64& rng);
  static TransformerLayer bind(const ParamStore<T>& store, const std::string& prefix);
};

template <typename T>
std::vector<TransformerLayer<T>> create_layers(ParamStore<T>& store, const std::string& prefix,
                                               const TransformerShape& shape, std::mt19937_64& rng);

template <typename T>
std::vector<TransformerLayer<T>> bind_layers(const ParamStore<T>& store, const std::string& prefix,
                                             std::size_t layers);

/// Runs the block stack over row-stacked sequences; rows [offsets[s],
/// offsets[s+1]) form sequence s and attend only within it.
template <typename T>
ad::Tensor<T> run_transformer(ad::Tensor<T> x, const std::vector<std::size_t>& offsets,
                              const std::vector<TransformerLayer<T>>& layers, std::size_t heads);

void validate_shape(const TransformerShape& shape, const char* what);

}  // namespace tsam::model
