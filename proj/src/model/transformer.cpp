#include "tsam/model/transformer.hpp"

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

namespace {

constexpr double kLayerNormEps = 1e-5;

}  // namespace

template <typename T>
TransformerLayer<T> TransformerLayer<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
                                                std::size_t ffn, std::mt19937_64& rng) {
  auto zeros = [](std::size_t n) { return ad::Tensor<T>::zeros({n}); };
  auto ones = [](std::size_t n) { return ad::Tensor<T>::full({n}, T(1)); };
  TransformerLayer l;
  l.wq = store.add(prefix + ".wq", init::xavier_uniform<T>({dim, dim}, rng));
  l.bq = store.add(prefix + ".bq", zeros(dim));
  l.wk = store.add(prefix + ".wk", init::xavier_uniform<T>({dim, dim}, rng));
  l.bk = store.add(prefix + ".bk", zeros(dim));
  l.wv = store.add(prefix + ".wv", init::xavier_uniform<T>({dim, dim}, rng));
  l.bv = store.add(prefix + ".bv", zeros(dim));
  l.wo = store.add(prefix + ".wo", init::xavier_uniform<T>({dim, dim}, rng));
  l.bo = store.add(prefix + ".bo", zeros(dim));
  l.ln1_gain = store.add(prefix + ".ln1.gain", ones(dim));
  l.ln1_bias = store.add(prefix + ".ln1.bias", zeros(dim));
  l.w1 = store.add(prefix + ".ffn.w1", init::xavier_uniform<T>({dim, ffn}, rng));
  l.b1 = store.add(prefix + ".ffn.b1", zeros(ffn));
  l.w2 = store.add(prefix + ".ffn.w2", init::xavier_uniform<T>({ffn, dim}, rng));
  l.b2 = store.add(prefix + ".ffn.b2", zeros(dim));
  l.ln2_gain = store.add(prefix + ".ln2.gain", ones(dim));
  l.ln2_bias = store.add(prefix + ".ln2.bias", zeros(dim));
  return l;
}

template <typename T>
TransformerLayer<T> TransformerLayer<T>::bind(const ParamStore<T>& store, const std::string& prefix) {
  TransformerLayer l;
  l.wq = store.get(prefix + ".wq");
  l.bq = store.get(prefix + ".bq");
  l.wk = store.get(prefix + ".wk");
  l.bk = store.get(prefix + ".bk");
  l.wv = store.get(prefix + ".wv");
  l.bv = store.get(prefix + ".bv");
  l.wo = store.get(prefix + ".wo");
  l.bo = store.get(prefix + ".bo");
  l.ln1_gain = store.get(prefix + ".ln1.gain");
  l.ln1_bias = store.get(prefix + ".ln1.bias");
  l.w1 = store.get(prefix + ".ffn.w1");
  l.b1 = store.get(prefix + ".ffn.b1");
  l.w2 = store.get(prefix + ".ffn.w2");
  l.b2 = store.get(prefix + ".ffn.b2");
  l.ln2_gain = store.get(prefix + ".ln2.gain");
  l.ln2_bias = store.get(prefix + ".ln2.bias");
  return l;
}

template <typename T>
std::vector<TransformerLayer<T>> create_layers(ParamStore<T>& store, const std::string& prefix,
                                               const TransformerShape& shape, std::mt19937_64& rng) {
  std::vector<TransformerLayer<T>> layers;
  for (std::size_t i = 0; i < shape.layers; ++i) {
    layers.push_back(
        TransformerLayer<T>::create(store, prefix + ".layer" + std::to_string(i), shape.dim, shape.ffn, rng));
  }
  return layers;
}

template <typename T>
std::vector<TransformerLayer<T>> bind_layers(const ParamStore<T>& store, const std::string& prefix,
                                             std::size_t count) {
  std::vector<TransformerLayer<T>> layers;
  for (std::size_t i = 0; i < count; ++i) {
    layers.push_back(TransformerLayer<T>::bind(store, prefix + ".layer" + std::to_string(i)));
  }
  return layers;
}

template <typename T>
ad::Tensor<T> run_transformer(ad::Tensor<T> x, const std::vector<std::size_t>& offsets,
                              const std::vector<TransformerLayer<T>>& layers, std::size_t heads) {
  const T eps = static_cast<T>(kLayerNormEps);
  for (const auto& l : layers) {
    auto q = ad::add(ad::matmul(x, l.wq), l.bq);
    auto k = ad::add(ad::matmul(x, l.wk), l.bk);
    auto v = ad::add(ad::matmul(x, l.wv), l.bv);
    auto attn = ad::add(ad::matmul(ad::segment_attention(q, k, v, offsets, heads), l.wo), l.bo);
    x = ad::layer_norm(ad::add(x, attn), l.ln1_gain, l.ln1_bias, eps);
    auto hidden = ad::gelu(ad::add(ad::matmul(x, l.w1), l.b1));
    auto ffn = ad::add(ad::matmul(hidden, l.w2), l.b2);
    x = ad::layer_norm(ad::add(x, ffn), l.ln2_gain, l.ln2_bias, eps);
  }
  return x;
}

void validate_shape(const TransformerShape& shape, const char* what) {
  if (shape.dim < 2) throw ConfigError(std::string(what) + ": dimension must be at least 2");
  if (shape.layers > 0) {
    if (shape.heads == 0 || shape.dim % shape.heads != 0) {
      throw ConfigError(std::string(what) + ": dimension " + std::to_string(shape.dim) +
                        " is not divisible by " + std::to_string(shape.heads) + " heads");
    }
    if (shape.ffn == 0) throw ConfigError(std::string(what) + ": ffn width must be positive");
  }
}

#define TSAM_INSTANTIATE(T)                                                                                  \
  template struct TransformerLayer<T>;                                                                       \
  template std::vector<TransformerLayer<T>> create_layers(ParamStore<T>&, const std::string&,                \
                                                          const TransformerShape&, std::mt19937_64&);        \
  template std::vector<TransformerLayer<T>> bind_layers(const ParamStore<T>&, const std::string&,            \
                                                        std::size_t);                                        \
  template ad::Tensor<T> run_transformer(ad::Tensor<T>, const std::vector<std::size_t>&,                     \
                                         const std::vector<TransformerLayer<T>>&, std::size_t);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
