#include "tsam/train/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::train {

namespace {

template <typename T>
ad::Tensor<T> targets(std::size_t rows, std::size_t cols, std::span<const std::uint32_t> gold, double eps) {
  if (gold.size() != rows) {
    throw ShapeError("prediction loss: " + std::to_string(rows) + " score rows but " + std::to_string(gold.size()) +
                     " gold ids");
  }
  if (!(eps >= 0 && eps < 1)) throw ConfigError("label smoothing must lie in [0, 1)");
  const T off = cols > 1 ? static_cast<T>(eps / static_cast<double>(cols - 1)) : T(0);
  std::vector<T> y(rows * cols, off);
  for (std::size_t b = 0; b < rows; ++b) {
    if (gold[b] >= cols) throw ContractError("prediction loss: gold id " + std::to_string(gold[b]) + " out of range");
    y[b * cols + gold[b]] = static_cast<T>(1.0 - eps);
  }
  return ad::Tensor<T>(ad::Shape{rows, cols}, std::move(y));
}

template <typename T>
ad::Tensor<T> as_matrix(const ad::Tensor<T>& x) {
  return x.rank() == 2 ? x : ad::reshape(x, {1, x.size()});
}

}  // namespace

template <typename T>
ad::Tensor<T> prediction_loss(const ad::Tensor<T>& theta, std::span<const std::uint32_t> gold,
                              double label_smoothing) {
  for (T p : theta.data()) {
    if (!(p >= T(0) && p <= T(1))) throw NumericError("prediction loss: probability outside [0, 1]");
  }
  auto p = ad::clamp(as_matrix(theta), static_cast<T>(kProbabilityClamp), static_cast<T>(1.0 - kProbabilityClamp));
  auto y = targets<T>(p.rows(), p.cols(), gold, label_smoothing);
  auto one_minus_y = ad::add_scalar(ad::neg(y), T(1));
  auto ll = ad::add(ad::mul(y, ad::log(p)), ad::mul(one_minus_y, ad::log(ad::add_scalar(ad::neg(p), T(1)))));
  return ad::scale(ad::sum(ll), static_cast<T>(-1.0 / static_cast<double>(p.cols())));
}

template <typename T>
ad::Tensor<T> prediction_loss_logits(const ad::Tensor<T>& logits, std::span<const std::uint32_t> gold,
                                     double label_smoothing) {
  auto s = as_matrix(logits);
  auto y = targets<T>(s.rows(), s.cols(), gold, label_smoothing);
  auto per = ad::sub(ad::softplus(s), ad::mul(y, s));
  return ad::scale(ad::sum(per), static_cast<T>(1.0 / static_cast<double>(s.cols())));
}

template <typename T>
ad::Tensor<T> total_loss(const ad::Tensor<T>& l_p, const ad::Tensor<T>& l_st, const ad::Tensor<T>& l_sv,
                         LossFlags flags) {
  ad::Tensor<T> total = l_p;
  if (flags.sv) total = ad::add(total, l_sv);
  if (flags.st) total = ad::add(total, l_st);
  return total;
}

#define TSAM_INSTANTIATE(T)                                                                                       \
  template ad::Tensor<T> prediction_loss(const ad::Tensor<T>&, std::span<const std::uint32_t>, double);          \
  template ad::Tensor<T> prediction_loss_logits(const ad::Tensor<T>&, std::span<const std::uint32_t>, double);   \
  template ad::Tensor<T> total_loss(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, LossFlags);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::train
