#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/model/param_store.hpp"

namespace tsam::model {

enum class ScoreFn { kTucker, kTransE, kRotatE };

std::string_view score_fn_name(ScoreFn fn);
ScoreFn parse_score_fn(std::string_view name);

// Structural embeddings. Relation rows cover the inverse relations, so the
// table has 2R rows. RotatE entities hold d/2 complex components laid out as
// [re | im]; its relations are phases of width d/2.
template <typename T>
struct KgeParams {
  ScoreFn fn = ScoreFn::kTucker;
  ad::Tensor<T> entity;    // [E x d]
  ad::Tensor<T> relation;  // [2R x d], or [2R x d/2] phases for RotatE
  ad::Tensor<T> core;      // [d x d x d], TuckER only

  std::size_t dim() const { return entity.cols(); }

  static KgeParams create(ParamStore<T>& store, std::size_t entity_count, std::size_t relation_count,
                          std::size_t dim, ScoreFn fn, std::mt19937_64& rng);
  static KgeParams bind(const ParamStore<T>& store, ScoreFn fn);
};

template <typename T>
KgeParams<T> init_embeddings(std::size_t entity_count, std::size_t relation_count, std::size_t dim, ScoreFn fn,
                             std::uint64_t seed);

/// Raw scores for single vectors. TuckER returns sum_ijk W_ijk h_i r_j t_k for every row t of `candidates`
/// ([N]); TransE returns ||h + r - t||_2; RotatE returns the L1 sum of the
/// complex moduli |h o e^{i theta} - t|.
template <typename T>
ad::Tensor<T> score_tucker(const ad::Tensor<T>& h, const ad::Tensor<T>& r, const ad::Tensor<T>& core,
                           const ad::Tensor<T>& candidates);
template <typename T>
ad::Tensor<T> score_transe(const ad::Tensor<T>& h, const ad::Tensor<T>& r, const ad::Tensor<T>& t);
template <typename T>
ad::Tensor<T> score_rotate(const ad::Tensor<T>& h, const ad::Tensor<T>& theta, const ad::Tensor<T>& t);

// Rotates complex rows h [B x 2c] by phases theta [B x c].
template <typename T>
ad::Tensor<T> rotate(const ad::Tensor<T>& h, const ad::Tensor<T>& theta);

/// Relation rows for the given ids; RotatE phases become [cos | sin] so the
/// result always has width d.
template <typename T>
ad::Tensor<T> relation_vectors(const KgeParams<T>& kge, const std::vector<std::size_t>& relations);

/// Higher-is-better plausibility of (h_b, r_b, candidate_n) for every pair:
/// [B x N]. TransE and RotatE distances are negated. `relations` holds raw
/// relation rows (phases for RotatE).
template <typename T>
ad::Tensor<T> plausibility(const KgeParams<T>& kge, const ad::Tensor<T>& heads, const ad::Tensor<T>& relations,
                           const ad::Tensor<T>& candidates);

}  // namespace tsam::model
