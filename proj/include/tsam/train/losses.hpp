#pragma once

#include <cstdint>
#include <span>

#include "tsam/ad/tensor.hpp"

namespace tsam::train {

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy of probabilities `theta` ([B x E], or [E] for one
/// query) against one-hot gold tails, averaged over the E candidates and
/// summed over queries. Label smoothing eps turns the targets into
/// {eps / (E - 1), 1 - eps}. Probabilities are clamped to
/// [1e-7, 1 - 1e-7]; NaN or values outside [0, 1] throw NumericError.
template <typename T>
ad::Tensor<T> prediction_loss(const ad::Tensor<T>& theta, std::span<const std::uint32_t> gold,
                              double label_smoothing = 0.0);

// Same loss from raw scores s: softplus(s) - y s, without the clamp.
template <typename T>
ad::Tensor<T> prediction_loss_logits(const ad::Tensor<T>& logits, std::span<const std::uint32_t> gold,
                                     double label_smoothing = 0.0);

struct LossFlags {
  bool sv = true;
  bool st = true;
};

// L_p + L_ST + L_SV over the enabled terms; a disabled term is never added.
template <typename T>
ad::Tensor<T> total_loss(const ad::Tensor<T>& l_p, const ad::Tensor<T>& l_st, const ad::Tensor<T>& l_sv,
                         LossFlags flags);

}  // namespace tsam::train
