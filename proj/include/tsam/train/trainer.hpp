#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tsam/data/triple_store.hpp"
#include "tsam/eval/evaluator.hpp"
#include "tsam/train/checkpoint.hpp"
#include "tsam/train/config.hpp"
#include "tsam/train/model.hpp"

namespace tsam::train {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // epoch means of the per-batch values
  double l_p = 0;
  double l_sv = 0;
  double l_st = 0;
  double valid_mrr = 0;
  std::size_t queries_seen = 0;
};

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  std::function<void(std::span<const data::Triple>)> on_batch;
};

struct TrainResult {
  Checkpoint best;  // highest valid MRR, earliest on ties
  Checkpoint last;
  std::vector<EpochStats> history;
  double initial_valid_mrr = 0;
};

// Training queries: every train triple followed by its inverse.
std::vector<data::Triple> training_queries(const data::TripleStore& store);

/// Joint training of all parameters with Adam. Each epoch shuffles the
/// training queries, runs every batch, then scores the valid split
/// (filtered MRR). Throws NumericError naming the epoch and batch if a loss
/// turns non-finite.
TrainResult train(const data::TripleStore& store, const ModalityInputs& inputs, const RunConfig& config,
                  const TrainHooks& hooks = {});

// Filtered valid-split MRR of `m`; 0 when the split is empty.
double valid_mrr(const Model<float>& m, const ModalityInputs& inputs, const data::TripleStore& store);

// Dimensions the model needs from a loaded dataset.
ModelDims dims_for(const data::TripleStore& store, const ModalityInputs& inputs, std::size_t max_tokens);

// Rebuilds the model stored in a checkpoint (a private copy of its tensors).
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tsam::train
