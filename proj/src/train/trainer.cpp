#include "tsam/train/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tsam/ad/adam.hpp"
#include "tsam/ad/ops.hpp"
#include "tsam/data/batching.hpp"
#include "tsam/error.hpp"

namespace tsam::train {

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Checkpoint snapshot(const Model<float>& m, const ad::AdamState& adam, const RunConfig& cfg, std::uint64_t epoch) {
  Checkpoint c;
  c.config_text = cfg.canonical_text();
  c.config_hash = cfg.hash();
  c.epoch = epoch;
  c.params = m.store.clone();
  c.adam = adam;
  return c;
}

}  // namespace

std::vector<data::Triple> training_queries(const data::TripleStore& store) {
  const auto train = store.split(data::Split::kTrain);
  std::vector<data::Triple> out(train.begin(), train.end());
  for (const auto& t : train) out.push_back(store.inverted(t));
  return out;
}

double valid_mrr(const Model<float>& m, const ModalityInputs& inputs, const data::TripleStore& store) {
  if (store.split(data::Split::kValid).empty()) return 0.0;
  return eval::evaluate(model_scorer(m, inputs), store, data::Split::kValid, true).both.mrr;
}

ModelDims dims_for(const data::TripleStore& store, const ModalityInputs& inputs, std::size_t max_tokens) {
  return {store.entity_count(), store.relation_count(), inputs.visual.token_dim, inputs.textual.token_dim, max_tokens};
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  const TrainConfig cfg = RunConfig::parse(ckpt.config_text, "<checkpoint config>").resolve();
  return Model<float>::bind(cfg.model, cfg.data.max_tokens, ckpt.params.clone());
}

TrainResult train(const data::TripleStore& store, const ModalityInputs& inputs, const RunConfig& config,
                  const TrainHooks& hooks) {
  const TrainConfig cfg = config.resolve();
  if (inputs.visual.entity_count() != store.entity_count() || inputs.textual.entity_count() != store.entity_count()) {
    throw ContractError("train: token inputs do not cover the entity vocabulary");
  }
  auto model = Model<float>::create(cfg.model, dims_for(store, inputs, cfg.data.max_tokens), cfg.seed);
  ad::AdamState adam;
  adam.options.lr = cfg.lr;
  std::mt19937_64 sacl_rng(epoch_seed(cfg.seed ^ cfg.sacl.seed, 0));
  const auto queries = training_queries(store);
  if (queries.empty()) throw ContractError("train: the training split is empty");

  TrainResult result;
  auto validate = [&](const std::string& where) {
    try {
      return valid_mrr(model, inputs, store);
    } catch (const NumericError& e) {
      throw NumericError(where + ": " + e.what());
    }
  };
  result.initial_valid_mrr = validate("before epoch 1, validation");
  double best_mrr = -1;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const data::BatchPlan plan(queries, cfg.batch_size, epoch_seed(cfg.seed, epoch));
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto batch = plan.batch(b);
      if (hooks.on_batch) hooks.on_batch(batch);
      model.store.zero_grad();
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + " of " +
                                std::to_string(plan.size());
      BatchLosses<float> losses;
      try {
        losses = batch_losses(model, inputs, batch, cfg.sacl, cfg.label_smoothing, sacl_rng);
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
      }
      const double total = losses.total.item();
      if (!std::isfinite(total)) throw NumericError(where + ": non-finite loss");
      ad::backward(losses.total);
      ad::adam_step(model.store.tensors(), adam);
      stats.loss += total;
      stats.l_p += losses.prediction.item();
      stats.l_sv += losses.sv.item();
      stats.l_st += losses.st.item();
      stats.queries_seen += batch.size();
    }
    const double n = static_cast<double>(plan.size());
    stats.loss /= n;
    stats.l_p /= n;
    stats.l_sv /= n;
    stats.l_st /= n;
    stats.valid_mrr = validate("epoch " + std::to_string(epoch) + ", validation");
    result.history.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (stats.valid_mrr > best_mrr) {
      best_mrr = stats.valid_mrr;
      result.best = snapshot(model, adam, config, epoch);
    }
  }
  result.last = snapshot(model, adam, config, cfg.epochs);
  return result;
}

}  // namespace tsam::train
