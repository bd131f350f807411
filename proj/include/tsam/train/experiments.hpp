#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsam/data/token_bank.hpp"
#include "tsam/data/triple_store.hpp"
#include "tsam/eval/evaluator.hpp"
#include "tsam/train/config.hpp"
#include "tsam/train/model.hpp"
#include "tsam/train/trainer.hpp"

namespace tsam::train {

struct Dataset {
  data::TripleStore store;
  data::TokenBank visual;
  data::TokenBank textual;
  ModalityInputs inputs;
};

// Triples from data.dir plus both banks, truncated to data.max_tokens.
Dataset load_dataset(const DataConfig& cfg);

struct Variant {
  std::string name;
  RunConfig config;
};

// full, w/o FgMAF, w/o SaCL, w/o L_ST, w/o L_SV; all share the base seed.
std::vector<Variant> ablation_variants(const RunConfig& base);
// tau in {0.02, 0.1, 0.5}, then K in {8, 16}.
std::vector<Variant> sensitivity_variants(const RunConfig& base);

struct VariantResult {
  std::string name;
  std::uint64_t config_hash = 0;
  double best_valid_mrr = 0;
  eval::Metrics metrics;  // best-valid checkpoint on the report split
  std::vector<EpochStats> history;
};

VariantResult run_variant(const Dataset& data, const Variant& v, data::Split report_split,
                          const TrainHooks& hooks = {});

// One row per variant with MRR, Hits@1, Hits@3, Hits@10 (pooled directions).
std::string format_variant_table(const std::vector<VariantResult>& rows, const std::string& title);

// Training log lines: a commented header with the resolved config, then
// "epoch L_p L_SV L_ST loss valid_mrr" rows.
std::string log_header(const RunConfig& cfg);
std::string log_line(const EpochStats& s);

}  // namespace tsam::train
