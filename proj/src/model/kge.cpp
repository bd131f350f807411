#include "tsam/model/kge.hpp"

#include <numbers>
#include <string>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

namespace {

constexpr double kCoreInitStd = 0.1;

template <typename T>
ad::Tensor<T> as_row(const ad::Tensor<T>& v) {
  return ad::reshape(v, {1, v.size()});
}

}  // namespace

std::string_view score_fn_name(ScoreFn fn) {
  switch (fn) {
    case ScoreFn::kTucker: return "tucker";
    case ScoreFn::kTransE: return "transe";
    case ScoreFn::kRotatE: return "rotate";
  }
  return "?";
}

ScoreFn parse_score_fn(std::string_view name) {
  if (name == "tucker") return ScoreFn::kTucker;
  if (name == "transe") return ScoreFn::kTransE;
  if (name == "rotate") return ScoreFn::kRotatE;
  throw ConfigError("unknown score function '" + std::string(name) + "' (expected tucker, transe or rotate)");
}

template <typename T>
KgeParams<T> KgeParams<T>::create(ParamStore<T>& store, std::size_t entity_count, std::size_t relation_count,
                                  std::size_t dim, ScoreFn fn, std::mt19937_64& rng) {
  if (entity_count == 0 || relation_count == 0 || dim == 0) {
    throw ConfigError("embedding table sizes must be positive");
  }
  if (fn == ScoreFn::kRotatE && dim % 2 != 0) {
    throw ConfigError("rotate needs an even dimension, got " + std::to_string(dim));
  }
  KgeParams p;
  p.fn = fn;
  p.entity = store.add("kge.entity", init::xavier_uniform<T>({entity_count, dim}, rng));
  if (fn == ScoreFn::kRotatE) {
    p.relation = store.add("kge.relation_phase",
                           init::uniform<T>({2 * relation_count, dim / 2}, 0.0, 2.0 * std::numbers::pi, rng));
  } else {
    p.relation = store.add("kge.relation", init::xavier_uniform<T>({2 * relation_count, dim}, rng));
  }
  if (fn == ScoreFn::kTucker) p.core = store.add("kge.tucker_core", init::normal<T>({dim, dim, dim}, kCoreInitStd, rng));
  return p;
}

template <typename T>
KgeParams<T> KgeParams<T>::bind(const ParamStore<T>& store, ScoreFn fn) {
  KgeParams p;
  p.fn = fn;
  p.entity = store.get("kge.entity");
  p.relation = store.get(fn == ScoreFn::kRotatE ? "kge.relation_phase" : "kge.relation");
  if (fn == ScoreFn::kTucker) p.core = store.get("kge.tucker_core");
  return p;
}

template <typename T>
KgeParams<T> init_embeddings(std::size_t entity_count, std::size_t relation_count, std::size_t dim, ScoreFn fn,
                             std::uint64_t seed) {
  ParamStore<T> store;
  std::mt19937_64 rng(seed);
  return KgeParams<T>::create(store, entity_count, relation_count, dim, fn, rng);
}

template <typename T>
ad::Tensor<T> score_tucker(const ad::Tensor<T>& h, const ad::Tensor<T>& r, const ad::Tensor<T>& core,
                           const ad::Tensor<T>& candidates) {
  auto hr = ad::tucker_contract(as_row(h), as_row(r), core);
  auto s = ad::matmul(hr, ad::transpose(candidates));
  return ad::reshape(s, {s.size()});
}

template <typename T>
ad::Tensor<T> score_transe(const ad::Tensor<T>& h, const ad::Tensor<T>& r, const ad::Tensor<T>& t) {
  return ad::l2_norm(ad::sub(ad::add(h, r), t));
}

template <typename T>
ad::Tensor<T> rotate(const ad::Tensor<T>& h, const ad::Tensor<T>& theta) {
  const std::size_t c = theta.cols();
  if (h.cols() != 2 * c || h.rows() != theta.rows()) {
    throw ShapeError("rotate: entity " + ad::shape_string(h.shape()) + " vs phases " +
                     ad::shape_string(theta.shape()));
  }
  auto re = ad::slice_cols(h, 0, c);
  auto im = ad::slice_cols(h, c, 2 * c);
  auto cs = ad::cos(theta);
  auto sn = ad::sin(theta);
  return ad::concat({ad::sub(ad::mul(re, cs), ad::mul(im, sn)), ad::add(ad::mul(re, sn), ad::mul(im, cs))}, 1);
}

template <typename T>
ad::Tensor<T> score_rotate(const ad::Tensor<T>& h, const ad::Tensor<T>& theta, const ad::Tensor<T>& t) {
  return ad::reshape(ad::pairwise_complex_l1(rotate(as_row(h), as_row(theta)), as_row(t)), {});
}

template <typename T>
ad::Tensor<T> relation_vectors(const KgeParams<T>& kge, const std::vector<std::size_t>& relations) {
  auto rows = ad::gather_rows(kge.relation, relations);
  if (kge.fn != ScoreFn::kRotatE) return rows;
  return ad::concat({ad::cos(rows), ad::sin(rows)}, 1);
}

template <typename T>
ad::Tensor<T> plausibility(const KgeParams<T>& kge, const ad::Tensor<T>& heads, const ad::Tensor<T>& relations,
                           const ad::Tensor<T>& candidates) {
  switch (kge.fn) {
    case ScoreFn::kTucker:
      return ad::matmul(ad::tucker_contract(heads, relations, kge.core), ad::transpose(candidates));
    case ScoreFn::kTransE:
      return ad::neg(ad::pairwise_l2(ad::add(heads, relations), candidates));
    case ScoreFn::kRotatE:
      return ad::neg(ad::pairwise_complex_l1(rotate(heads, relations), candidates));
  }
  throw ContractError("unhandled score function");
}

#define TSAM_INSTANTIATE(T)                                                                                  \
  template struct KgeParams<T>;                                                                              \
  template KgeParams<T> init_embeddings<T>(std::size_t, std::size_t, std::size_t, ScoreFn, std::uint64_t);   \
  template ad::Tensor<T> score_tucker(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,      \
                                      const ad::Tensor<T>&);                                                 \
  template ad::Tensor<T> score_transe(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&);     \
  template ad::Tensor<T> score_rotate(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&);     \
  template ad::Tensor<T> rotate(const ad::Tensor<T>&, const ad::Tensor<T>&);                                 \
  template ad::Tensor<T> relation_vectors(const KgeParams<T>&, const std::vector<std::size_t>&);             \
  template ad::Tensor<T> plausibility(const KgeParams<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,       \
                                      const ad::Tensor<T>&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
