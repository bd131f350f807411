#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "tsam/data/synth.hpp"
#include "tsam/data/token_bank.hpp"
#include "tsam/error.hpp"
#include "tsam/eval/evaluator.hpp"
#include "tsam/train/experiments.hpp"
#include "tsam/util/binary_io.hpp"

namespace fs = std::filesystem;
namespace data = tsam::data;
namespace train = tsam::train;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kOther = 1 };

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// One "--key=value" option per configuration key.
struct Overrides {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    for (const auto& k : train::RunConfig::keys()) {
      options[k.name] =
          app.add_option("--" + k.name, values[k.name], k.help + " (default " + k.default_value + ")")
                            ->type_name("VALUE")
                            ->group("Config");
    }
  }

  void apply(train::RunConfig& rc) const {
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) rc.set(name, values.at(name));
  }
};

// File first, then TSAM_SEED, then command-line flags.
train::RunConfig run_config(const std::string& path, const Overrides& flags) {
  auto rc = path.empty() ? train::RunConfig() : train::RunConfig::load(path);
  train::apply_environment(rc);
  flags.apply(rc);
  rc.resolve();
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!(f << text)) throw tsam::IoError("cannot write '" + path.string() + "'");
}

fs::path last_path(const fs::path& best) {
  auto p = best;
  return p.replace_extension(".last" + best.extension().string());
}

struct Stats {
  float min = 0, max = 0;
  double mean = 0;
};

Stats stats_of(std::span<const float> v) {
  if (v.empty()) return {};
  Stats s{v[0], v[0], 0};
  double sum = 0;
  for (float x : v) {
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    sum += x;
  }
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

std::string stats_text(std::span<const float> v) {
  const auto s = stats_of(v);
  char buf[120];
  std::snprintf(buf, sizeof buf, "min=%.6g max=%.6g mean=%.6g", s.min, s.max, s.mean);
  return buf;
}

int cmd_train(const std::string& config, const Overrides& flags) {
  auto rc = run_config(config, flags);
  const auto cfg = rc.resolve();
  const auto ds = train::load_dataset(cfg.data);

  std::ofstream log(cfg.log);
  if (!log) throw tsam::IoError("cannot write log '" + cfg.log + "'");
  log << train::log_header(rc) << std::flush;
  std::cout << "config_hash " << hex(rc.hash()) << "\n";

  auto result = train::train(ds.store, ds.inputs, rc,
                             {.on_epoch = [&](const train::EpochStats& s) {
                               log << train::log_line(s) << std::flush;
                               std::printf("epoch %zu  loss %.6f  L_p %.6f  L_SV %.6f  L_ST %.6f  valid_mrr %.4f\n",
                                           s.epoch, s.loss, s.l_p, s.l_sv, s.l_st, s.valid_mrr);
                               std::fflush(stdout);
                             },
                              .on_batch = {}});
  train::save_checkpoint(result.best, cfg.checkpoint);
  train::save_checkpoint(result.last, last_path(cfg.checkpoint));
  std::cout << "best epoch " << result.best.epoch << " -> " << cfg.checkpoint << "\n"
            << "last epoch " << result.last.epoch << " -> " << last_path(cfg.checkpoint).string() << "\n";
  return kOk;
}

train::Dataset dataset_for(const train::Checkpoint& ckpt, const std::string& data_dir) {
  auto rc = train::RunConfig::parse(ckpt.config_text, "checkpoint");
  if (!data_dir.empty()) rc.set("data.dir", data_dir);
  return train::load_dataset(rc.resolve().data);
}

int cmd_eval(const std::string& ckpt_path, const std::string& split_name, bool raw, const std::string& data_dir,
             std::string out, const std::string& ranks_path) {
  const auto ckpt = train::load_checkpoint(ckpt_path);
  const auto split = data::parse_split(split_name);
  const auto ds = dataset_for(ckpt, data_dir);
  const auto model = train::model_from_checkpoint(ckpt);
  std::vector<tsam::eval::RankResult> ranks;
  const auto m = tsam::eval::evaluate(train::model_scorer(model, ds.inputs), ds.store, split, !raw,
                                      ranks_path.empty() ? nullptr : &ranks);
  if (out.empty()) {
    fs::path p = ckpt_path;
    out = p.replace_extension("." + split_name + (raw ? ".raw" : ".filtered") + ".kv").string();
  }
  tsam::eval::write_kv(m, out);
  std::cout << tsam::eval::format_report(m) << "written " << out << "\n";
  if (!ranks_path.empty()) {
    std::ofstream f(ranks_path);
    if (!f) throw tsam::IoError("cannot write '" + ranks_path + "'");
    const auto R = static_cast<std::uint32_t>(ds.store.relation_count());
    f << "direction\thead\trelation\tanswer\trank\n";
    for (const auto& r : ranks) {
      const bool tail = r.query.relation < R;
      f << (tail ? "tail" : "head") << '\t' << r.query.head << '\t' << r.query.relation << '\t' << r.query.tail
        << '\t' << r.rank << '\n';
    }
  }
  return kOk;
}

int cmd_ablate(const std::string& config, const Overrides& flags, bool sensitivity, const std::string& out_dir,
               const std::string& split_name) {
  const auto rc = run_config(config, flags);
  const auto ds = train::load_dataset(rc.resolve().data);
  const auto split = data::parse_split(split_name);
  fs::create_directories(out_dir);

  auto run_all = [&](const std::vector<train::Variant>& variants, const std::string& title, const std::string& file) {
    std::vector<train::VariantResult> rows;
    for (const auto& v : variants) {
      std::string slug = v.name;
      std::replace_if(slug.begin(), slug.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
      const auto log_path = fs::path(out_dir) / (file + "_" + slug + ".log");
      std::ofstream log(log_path);
      if (!log) throw tsam::IoError("cannot write '" + log_path.string() + "'");
      log << train::log_header(v.config) << std::flush;
      std::cout << "training " << v.name << " (config_hash " << hex(v.config.hash()) << ", seed "
                << v.config.get("train.seed") << ")\n"
                << std::flush;
      rows.push_back(train::run_variant(ds, v, split, {.on_epoch = [&](const train::EpochStats& s) {
                                          log << train::log_line(s) << std::flush;
                                        },
                                                       .on_batch = {}}));
    }
    const auto table = train::format_variant_table(rows, title);
    write_text(fs::path(out_dir) / (file + ".txt"), table);
    std::cout << table;
  };

  run_all(train::ablation_variants(rc), "ablation (" + split_name + ", filtered, pooled directions)", "ablation");
  if (sensitivity)
    run_all(train::sensitivity_variants(rc), "sensitivity (" + split_name + ", filtered, pooled directions)",
            "sensitivity");
  return kOk;
}

int cmd_synth(const data::SynthConfig& cfg, const std::string& out) {
  const auto ds = data::synth_generate(cfg);
  data::write_dataset(ds, out);
  std::cout << "wrote " << ds.store.entity_count() << " entities, " << ds.store.relation_count() << " relations, "
            << ds.store.split(data::Split::kTrain).size() << "/" << ds.store.split(data::Split::kValid).size() << "/"
            << ds.store.split(data::Split::kTest).size() << " train/valid/test triples to " << out << "\n";
  return kOk;
}

void inspect_bank(const data::TokenBank& bank) {
  std::size_t tokens = 0, lo = 0, hi = 0;
  bool first = true;
  for (const auto& e : bank.entries()) {
    tokens += e.token_count;
    lo = first ? e.token_count : std::min<std::size_t>(lo, e.token_count);
    hi = std::max<std::size_t>(hi, e.token_count);
    first = false;
  }
  std::cout << "format MMTK v" << tsam::data::kTokenBankVersion << "\n"
            << "modality " << data::modality_name(bank.modality()) << "\n"
            << "dim " << bank.dim() << "\n"
            << "entity_count " << bank.entity_count() << "\n"
            << "tokens " << tokens << " (per entity " << lo << ".." << hi << ")\n"
            << "values [" << tokens << " x " << bank.dim() << "] " << stats_text(bank.values()) << "\n";
}

void inspect_checkpoint(const train::Checkpoint& c) {
  std::cout << "format TSCK v" << train::kCheckpointVersion << "\n"
            << "epoch " << c.epoch << "\n"
            << "config_hash " << hex(c.config_hash) << "\n"
            << "adam_step " << c.adam.step << "\n"
            << "tensors " << c.params.size() << " (" << c.params.scalar_count() << " values)\n";
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const auto& t = c.params.tensors()[i];
    std::string shape;
    for (auto d : t.shape()) shape += (shape.empty() ? "" : " x ") + std::to_string(d);
    std::cout << "  " << c.params.names()[i] << " [" << shape << "] " << stats_text(t.data()) << "\n";
  }
  std::cout << "config\n";
  std::istringstream lines(c.config_text);
  for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
}

void dump_embeddings(const train::Checkpoint& c, const std::string& data_dir, const std::string& out) {
  const auto ds = dataset_for(c, data_dir);
  const auto model = train::model_from_checkpoint(c);
  tsam::ad::NoGradGuard guard;
  const auto table = train::entity_table(model, ds.inputs);
  const auto d = table.e_f.shape()[1];
  const auto v = table.e_f.data();
  std::ofstream f(out);
  if (!f) throw tsam::IoError("cannot write '" + out + "'");
  char buf[32];
  for (std::size_t e = 0; e < ds.store.entity_count(); ++e) {
    f << ds.store.entity_names()[e];
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "\t%.9g", v[e * d + j]);
      f << buf;
    }
    f << '\n';
  }
  std::cout << "wrote " << ds.store.entity_count() << " x " << d << " fused embeddings to " << out << "\n";
}

int cmd_inspect(const std::string& path, const std::string& dump, const std::string& data_dir) {
  const auto bytes = tsam::util::read_file(path);
  const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(4, bytes.size()));
  if (magic == "MMTK") {
    if (!dump.empty()) throw tsam::ConfigError("--dump-embeddings needs a checkpoint");
    inspect_bank(data::decode_token_bank(bytes, std::nullopt, path));
  } else if (magic == "TSCK") {
    const auto c = train::decode_checkpoint(bytes, path);
    inspect_checkpoint(c);
    if (!dump.empty()) dump_embeddings(c, data_dir, dump);
  } else {
    throw tsam::FormatError(tsam::FormatError::Code::kBadMagic,
                            path + ": unknown magic (expected MMTK token bank or TSCK checkpoint)");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSAM multi-modal knowledge graph completion"};
  app.require_subcommand(1);

  std::string config, ckpt, split = "test", data_dir, out, ranks, log_dir = "ablation";
  std::string ablate_split = "valid";
  bool raw = false, sensitivity = false;
  Overrides train_flags, ablate_flags;

  auto* t = app.add_subcommand("train", "train a model and write its checkpoint and log");
  t->add_option("config", config, "configuration file (key = value)");
  train_flags.attach(*t);

  auto* e = app.add_subcommand("eval", "rank a split with a checkpoint");
  e->add_option("checkpoint", ckpt, "TSCK checkpoint")->required();
  e->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  auto* raw_flag = e->add_flag("--raw", raw, "rank against all entities");
  e->add_flag("--filtered", "filter other known answers (default)")->excludes(raw_flag);
  e->add_option("--data", data_dir, "dataset directory (default: the checkpoint's data.dir)");
  e->add_option("--out", out, "metrics file (default: <checkpoint>.<split>.<setting>.kv)");
  e->add_option("--ranks", ranks, "write one rank per query to this file");

  auto* a = app.add_subcommand("ablate", "train and compare the ablation variants");
  a->add_option("config", config, "configuration file (key = value)");
  a->add_flag("--sensitivity", sensitivity, "also sweep tau and K");
  a->add_option("--out-dir", log_dir, "directory for reports and per-variant logs")->capture_default_str();
  a->add_option("--split", ablate_split, "split to report")
      ->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();
  ablate_flags.attach(*a);

  data::SynthConfig sc;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "write a synthetic dataset");
  s->add_option("out", synth_out, "output directory")->required();
  s->add_option("--entities", sc.entity_count)->capture_default_str();
  s->add_option("--relations", sc.relation_count)->capture_default_str();
  s->add_option("--triples", sc.triple_count)->capture_default_str();
  s->add_option("--tokens", sc.tokens_per_modality, "tokens per entity and modality")->capture_default_str();
  s->add_option("--token-dim", sc.token_dim)->capture_default_str();
  s->add_option("--seed", sc.seed)->capture_default_str();

  std::string inspect_path, dump;
  auto* i = app.add_subcommand("inspect", "summarize a token bank or checkpoint");
  i->add_option("path", inspect_path, "MMTK bank or TSCK checkpoint")->required();
  i->add_option("--dump-embeddings", dump, "write fused entity vectors as text (checkpoints only)");
  i->add_option("--data", data_dir, "dataset directory for --dump-embeddings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (t->parsed()) return cmd_train(config, train_flags);
    if (e->parsed()) return cmd_eval(ckpt, split, raw, data_dir, out, ranks);
    if (a->parsed()) return cmd_ablate(config, ablate_flags, sensitivity, log_dir, ablate_split);
    if (s->parsed()) return cmd_synth(sc, synth_out);
    if (i->parsed()) return cmd_inspect(inspect_path, dump, data_dir);
  } catch (const tsam::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kUsage;
  } catch (const tsam::NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return kNumeric;
  } catch (const tsam::FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return kData;
  } catch (const tsam::ParseError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const tsam::IoError& err) {
    std::cerr << "io error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kUsage;
}
