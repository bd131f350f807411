#include "tsam/model/fusion.hpp"

#include <string>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

std::string_view fusion_kind_name(FusionKind kind) {
  return kind == FusionKind::kWeighted ? "weighted" : "concat";
}

FusionKind parse_fusion_kind(std::string_view name) {
  if (name == "weighted") return FusionKind::kWeighted;
  if (name == "concat") return FusionKind::kConcat;
  throw ConfigError("unknown fusion '" + std::string(name) + "' (expected weighted or concat)");
}

template <typename T>
FusionParams<T> FusionParams<T>::create(ParamStore<T>& store, std::size_t dim, FusionKind kind,
                                        std::mt19937_64& rng) {
  FusionParams p;
  p.kind = kind;
  p.alpha = store.add("fusion.alpha", ad::Tensor<T>::zeros({dim}));
  if (kind == FusionKind::kConcat) {
    p.weight = store.add("fusion.weight", init::xavier_uniform<T>({3 * dim, dim}, rng));
    p.bias = store.add("fusion.bias", ad::Tensor<T>::zeros({dim}));
  }
  return p;
}

template <typename T>
FusionParams<T> FusionParams<T>::bind(const ParamStore<T>& store, FusionKind kind) {
  FusionParams p;
  p.kind = kind;
  p.alpha = store.get("fusion.alpha");
  if (kind == FusionKind::kConcat) {
    p.weight = store.get("fusion.weight");
    p.bias = store.get("fusion.bias");
  }
  return p;
}

template <typename T>
ad::Tensor<T> attention_weights(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                                const ad::Tensor<T>& alpha) {
  const std::size_t d = alpha.size();
  if (e_str.cols() != d || e_vis.shape() != e_str.shape() || e_txt.shape() != e_str.shape()) {
    throw ShapeError("attention_weights: modality shapes " + ad::shape_string(e_str.shape()) + ", " +
                     ad::shape_string(e_vis.shape()) + ", " + ad::shape_string(e_txt.shape()) +
                     " with alpha " + ad::shape_string(alpha.shape()));
  }
  auto a = ad::reshape(alpha, {d, 1});
  auto logits = ad::concat({ad::matmul(e_str, a), ad::matmul(e_vis, a), ad::matmul(e_txt, a)}, 1);
  auto w = ad::softmax(logits);
  return e_str.rank() <= 1 ? ad::reshape(w, {3}) : w;
}

template <typename T>
ad::Tensor<T> fuse(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                   const ad::Tensor<T>& weights) {
  const std::size_t n = e_str.rows();
  if (weights.size() != 3 * n || e_vis.shape() != e_str.shape() || e_txt.shape() != e_str.shape()) {
    throw ShapeError("fuse: weights " + ad::shape_string(weights.shape()) + " for modalities " +
                     ad::shape_string(e_str.shape()));
  }
  auto w = ad::reshape(weights, {n, 3});
  auto out = ad::add(ad::add(ad::mul(ad::slice_cols(w, 0, 1), e_str), ad::mul(ad::slice_cols(w, 1, 2), e_vis)),
                     ad::mul(ad::slice_cols(w, 2, 3), e_txt));
  return e_str.rank() <= 1 ? ad::reshape(out, e_str.shape()) : out;
}

template <typename T>
FusedBatch<T> fuse_modalities(const ad::Tensor<T>& e_str, const ad::Tensor<T>& e_vis, const ad::Tensor<T>& e_txt,
                              const FusionParams<T>& params) {
  FusedBatch<T> out{e_str, e_vis, e_txt, {}, attention_weights(e_str, e_vis, e_txt, params.alpha)};
  if (params.kind == FusionKind::kWeighted) {
    out.e_f = fuse(e_str, e_vis, e_txt, out.weights);
  } else {
    out.e_f = ad::add(ad::matmul(ad::concat({e_str, e_vis, e_txt}, 1), params.weight), params.bias);
  }
  return out;
}

#define TSAM_INSTANTIATE(T)                                                                                   \
  template struct FusionParams<T>;                                                                            \
  template ad::Tensor<T> attention_weights(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,  \
                                           const ad::Tensor<T>&);                                             \
  template ad::Tensor<T> fuse(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,               \
                              const ad::Tensor<T>&);                                                          \
  template FusedBatch<T> fuse_modalities(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,    \
                                         const FusionParams<T>&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
