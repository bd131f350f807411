#include "tsam/train/experiments.hpp"

#include <cstdio>
#include <sstream>

namespace tsam::train {

namespace {

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Variant with(const RunConfig& base, std::string name, std::vector<std::pair<std::string, std::string>> changes) {
  Variant v{std::move(name), base};
  for (auto& [k, value] : changes) v.config.set(k, value);
  return v;
}

}  // namespace

Dataset load_dataset(const DataConfig& cfg) {
  if (cfg.dir.empty()) throw ConfigError("data.dir is not set");
  auto store = data::load_triples(cfg.dir);
  auto visual = data::load_token_bank(cfg.visual_path(), data::Modality::kVisual);
  auto textual = data::load_token_bank(cfg.textual_path(), data::Modality::kTextual);
  auto inputs = ModalityInputs::from_banks(visual, textual, store.entity_count(), cfg.max_tokens);
  return {std::move(store), std::move(visual), std::move(textual), std::move(inputs)};
}

std::vector<Variant> ablation_variants(const RunConfig& base) {
  return {
      with(base, "full", {}),
      with(base, "w/o FgMAF", {{"model.enable_fgmaf", "false"}}),
      with(base, "w/o SaCL", {{"sacl.enable_sv", "false"}, {"sacl.enable_st", "false"}}),
      with(base, "w/o L_ST", {{"sacl.enable_st", "false"}}),
      with(base, "w/o L_SV", {{"sacl.enable_sv", "false"}}),
  };
}

std::vector<Variant> sensitivity_variants(const RunConfig& base) {
  std::vector<Variant> out;
  for (const char* tau : {"0.02", "0.1", "0.5"}) out.push_back(with(base, std::string("tau=") + tau, {{"sacl.tau", tau}}));
  for (const char* k : {"8", "16"}) out.push_back(with(base, std::string("K=") + k, {{"sacl.k", k}}));
  return out;
}

VariantResult run_variant(const Dataset& data, const Variant& v, data::Split report_split, const TrainHooks& hooks) {
  auto trained = train(data.store, data.inputs, v.config, hooks);
  const auto model = model_from_checkpoint(trained.best);
  VariantResult r;
  r.name = v.name;
  r.config_hash = v.config.hash();
  r.metrics = eval::evaluate(model_scorer(model, data.inputs), data.store, report_split, true);
  r.history = std::move(trained.history);
  for (const auto& e : r.history) r.best_valid_mrr = std::max(r.best_valid_mrr, e.valid_mrr);
  return r;
}

std::string format_variant_table(const std::vector<VariantResult>& rows, const std::string& title) {
  std::string out = title + "\n";
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s  %s\n", "variant", "MRR", "Hits@1", "Hits@3", "Hits@10",
                "config_hash");
  out += buf;
  for (const auto& r : rows) {
    const auto& m = r.metrics.both;
    std::snprintf(buf, sizeof buf, "%-12s %8.4f %8.4f %8.4f %8.4f  %s\n", r.name.c_str(), m.mrr, m.hits1, m.hits3,
                  m.hits10, hex(r.config_hash).c_str());
    out += buf;
  }
  return out;
}

std::string log_header(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# config_hash = " << hex(cfg.hash()) << "\n";
  std::istringstream lines(cfg.canonical_text());
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
  out << "epoch\tL_p\tL_SV\tL_ST\tloss\tvalid_mrr\n";
  return out.str();
}

std::string log_line(const EpochStats& s) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", s.epoch, s.l_p, s.l_sv, s.l_st, s.loss,
                s.valid_mrr);
  return buf;
}

}  // namespace tsam::train
