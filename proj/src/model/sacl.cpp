#include "tsam/model/sacl.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

namespace {

constexpr double kMinNorm = 1e-8;

template <typename T>
ad::Tensor<T> unit_rows(const ad::Tensor<T>& x, const char* what) {
  auto norms = ad::row_norms(x);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!(norms[i] >= kMinNorm)) {
      throw NumericError(std::string("info_nce: ") + what + " row " + std::to_string(i) + " has norm " +
                         std::to_string(norms[i]));
    }
  }
  return ad::div(x, norms);
}

}  // namespace

std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t k, std::mt19937_64& rng) {
  if (k == 0 || k + 1 > batch_size) {
    throw ConfigError("cannot draw " + std::to_string(k) + " negatives from a batch of " +
                      std::to_string(batch_size));
  }
  std::vector<std::size_t> out(batch_size * k), pool(batch_size - 1);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::iota(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(i), std::size_t{0});
    std::iota(pool.begin() + static_cast<std::ptrdiff_t>(i), pool.end(), i + 1);
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng)]);
      out[i * k + j] = pool[j];
    }
  }
  return out;
}

std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_negatives(batch_size, k, rng);
}

template <typename T>
ad::Tensor<T> info_nce(const ad::Tensor<T>& anchors, const ad::Tensor<T>& positives,
                       const ad::Tensor<T>& negatives, std::size_t k, double tau) {
  if (!(tau > 0)) throw ConfigError("info_nce: temperature must be positive");
  const std::size_t B = anchors.rows(), d = anchors.cols();
  if (k == 0 || positives.rows() != B || positives.cols() != d || negatives.rows() != B * k ||
      negatives.cols() != d) {
    throw ShapeError("info_nce: anchors " + ad::shape_string(anchors.shape()) + ", positives " +
                     ad::shape_string(positives.shape()) + ", negatives " + ad::shape_string(negatives.shape()) +
                     " with K = " + std::to_string(k));
  }
  auto a = unit_rows(anchors, "anchor");
  auto p = unit_rows(positives, "positive");
  auto n = unit_rows(negatives, "negative");
  std::vector<std::size_t> repeat(B * k);
  for (std::size_t i = 0; i < B * k; ++i) repeat[i] = i / k;
  auto pos = ad::sum_axis(ad::mul(a, p), 1);
  auto neg = ad::reshape(ad::sum_axis(ad::mul(ad::gather_rows(a, repeat), n), 1), {B, k});
  auto logits = ad::scale(ad::concat({pos, neg}, 1), static_cast<T>(1.0 / tau));
  return ad::neg(ad::mean(ad::slice_cols(ad::log_softmax(logits), 0, 1)));
}

template <typename T>
ad::Tensor<T> info_nce_indexed(const ad::Tensor<T>& anchors, const ad::Tensor<T>& positives,
                               const ad::Tensor<T>& pool, const std::vector<std::size_t>& index, std::size_t k,
                               double tau) {
  return info_nce(anchors, positives, ad::gather_rows(pool, index), k, tau);
}

template <typename T>
SaclLosses<T> sacl_loss(const ad::Tensor<T>& s, const ad::Tensor<T>& v, const ad::Tensor<T>& t,
                        const SaclConfig& cfg, std::mt19937_64& rng) {
  if (s.shape() != v.shape() || s.shape() != t.shape()) {
    throw ShapeError("sacl_loss: modality sets " + ad::shape_string(s.shape()) + ", " +
                     ad::shape_string(v.shape()) + ", " + ad::shape_string(t.shape()));
  }
  SaclLosses<T> out{ad::Tensor<T>::scalar(0), ad::Tensor<T>::scalar(0)};
  const std::size_t B = s.rows();
  if (B < 2 || (!cfg.enable_sv && !cfg.enable_st)) return out;
  const std::size_t k = std::min(cfg.k, B - 1);
  // All four draws happen regardless of the switches.
  const auto s_to_v = sample_negatives(B, k, rng);
  const auto v_to_s = sample_negatives(B, k, rng);
  const auto s_to_t = sample_negatives(B, k, rng);
  const auto t_to_s = sample_negatives(B, k, rng);
  if (cfg.enable_sv) {
    out.sv = ad::add(info_nce_indexed(s, v, v, s_to_v, k, cfg.tau), info_nce_indexed(v, s, s, v_to_s, k, cfg.tau));
  }
  if (cfg.enable_st) {
    out.st = ad::add(info_nce_indexed(s, t, t, s_to_t, k, cfg.tau), info_nce_indexed(t, s, s, t_to_s, k, cfg.tau));
  }
  return out;
}

#define TSAM_INSTANTIATE(T)                                                                                    \
  template ad::Tensor<T> info_nce(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,            \
                                  std::size_t, double);                                                        \
  template ad::Tensor<T> info_nce_indexed(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,    \
                                          const std::vector<std::size_t>&, std::size_t, double);               \
  template SaclLosses<T> sacl_loss(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,           \
                                   const SaclConfig&, std::mt19937_64&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
