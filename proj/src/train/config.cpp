#include "tsam/train/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tsam/error.hpp"
#include "tsam/util/binary_io.hpp"

namespace tsam::train {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& values) : values_(values) {}

  const std::string& text(const std::string& key) const { return values_.at(key); }

  std::uint64_t integer(const std::string& key) const {
    const std::string& s = text(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(key, "a non-negative integer");
    return v;
  }

  double real(const std::string& key) const {
    const std::string& s = text(key);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) fail(key, "a finite number");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = text(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(key, "true or false");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* expected) const {
    throw ConfigError(key + " = '" + text(key) + "': expected " + expected);
  }
  const std::map<std::string, std::string>& values_;
};

}  // namespace

std::string_view score_mode_name(ScoreMode mode) { return mode == ScoreMode::kDecoder ? "decoder" : "kge"; }

ScoreMode parse_score_mode(std::string_view name) {
  if (name == "decoder") return ScoreMode::kDecoder;
  if (name == "kge") return ScoreMode::kKge;
  throw ConfigError("unknown score mode '" + std::string(name) + "' (expected decoder or kge)");
}

std::filesystem::path DataConfig::visual_path() const { return std::filesystem::path(dir) / visual_bank; }
std::filesystem::path DataConfig::textual_path() const { return std::filesystem::path(dir) / textual_bank; }

void validate(const TrainConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  const auto& m = cfg.model;
  require(m.dim >= 2, "model.dim must be at least 2");
  require(m.score_fn != model::ScoreFn::kRotatE || m.dim % 2 == 0, "model.score_fn = rotate needs an even model.dim");
  model::validate_shape(m.encoder_shape(), "encoder");
  model::validate_shape(m.decoder_shape(), "decoder");
  require(cfg.data.max_tokens >= 1, "data.max_tokens must be positive");
  require(cfg.sacl.tau > 0, "sacl.tau must be positive");
  require(cfg.sacl.k >= 1, "sacl.k must be at least 1");
  require(cfg.batch_size >= 2, "train.batch_size must be at least 2");
  require(cfg.sacl.k < cfg.batch_size, "sacl.k must be smaller than train.batch_size");
  require(cfg.epochs >= 1, "train.epochs must be at least 1");
  require(cfg.lr >= 0, "train.lr must be non-negative");
  require(cfg.label_smoothing >= 0 && cfg.label_smoothing < 1, "train.label_smoothing must lie in [0, 1)");
}

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> table = {
      {"data.dir", "", "dataset directory (entity2id, relation2id, splits, banks)"},
      {"data.visual_bank", "visual.mmtk", "visual MMTK bank, relative to data.dir"},
      {"data.textual_bank", "textual.mmtk", "textual MMTK bank, relative to data.dir"},
      {"data.max_tokens", "16", "tokens kept per entity and modality"},
      {"model.dim", "64", "embedding width d"},
      {"model.score_fn", "tucker", "tucker | transe | rotate"},
      {"model.score_mode", "decoder", "decoder | kge"},
      {"model.encoder_layers", "2", "modality encoder depth"},
      {"model.encoder_heads", "4", "modality encoder heads"},
      {"model.encoder_ffn", "128", "modality encoder FFN width"},
      {"model.decoder_layers", "2", "decoder depth"},
      {"model.decoder_heads", "4", "decoder heads"},
      {"model.decoder_ffn", "128", "decoder FFN width"},
      {"model.pooling", "ent", "ent | mean"},
      {"model.fusion", "weighted", "weighted | concat"},
      {"model.pos_textual", "true", "positional embeddings on textual tokens"},
      {"model.pos_visual", "false", "positional embeddings on visual tokens"},
      {"model.enable_fgmaf", "true", "false uses e_str alone as the fused embedding"},
      {"sacl.enable_sv", "true", "structure/visual contrastive term"},
      {"sacl.enable_st", "true", "structure/textual contrastive term"},
      {"sacl.tau", "0.02", "InfoNCE temperature"},
      {"sacl.k", "16", "in-batch negatives per anchor"},
      {"sacl.seed", "0", "negative-sampling stream, mixed with train.seed"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.epochs", "100", "training epochs"},
      {"train.batch_size", "128", "triples per batch"},
      {"train.label_smoothing", "0", "label smoothing epsilon"},
      {"train.seed", "42", "initialization and shuffling seed (TSAM_SEED overrides)"},
      {"train.checkpoint", "checkpoint.tsck", "best-valid checkpoint path"},
      {"train.log", "train.log", "per-epoch training log path"},
  };
  return table;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::size_t number = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++number;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!cfg.values_.contains(key)) {
      throw ConfigError(source + ":" + std::to_string(number) + ": unknown configuration key '" + key + "'");
    }
    cfg.values_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

RunConfig RunConfig::from(const TrainConfig& c) {
  RunConfig cfg;
  auto n = [](std::uint64_t v) { return std::to_string(v); };
  cfg.set("data.dir", c.data.dir);
  cfg.set("data.visual_bank", c.data.visual_bank);
  cfg.set("data.textual_bank", c.data.textual_bank);
  cfg.set("data.max_tokens", n(c.data.max_tokens));
  cfg.set("model.dim", n(c.model.dim));
  cfg.set("model.score_fn", std::string(model::score_fn_name(c.model.score_fn)));
  cfg.set("model.score_mode", std::string(score_mode_name(c.model.score_mode)));
  cfg.set("model.encoder_layers", n(c.model.encoder_layers));
  cfg.set("model.encoder_heads", n(c.model.encoder_heads));
  cfg.set("model.encoder_ffn", n(c.model.encoder_ffn));
  cfg.set("model.decoder_layers", n(c.model.decoder_layers));
  cfg.set("model.decoder_heads", n(c.model.decoder_heads));
  cfg.set("model.decoder_ffn", n(c.model.decoder_ffn));
  cfg.set("model.pooling", c.model.pooling == model::Pooling::kEnt ? "ent" : "mean");
  cfg.set("model.fusion", std::string(model::fusion_kind_name(c.model.fusion)));
  cfg.set("model.pos_textual", bool_text(c.model.pos_textual));
  cfg.set("model.pos_visual", bool_text(c.model.pos_visual));
  cfg.set("model.enable_fgmaf", bool_text(c.model.enable_fgmaf));
  cfg.set("sacl.enable_sv", bool_text(c.sacl.enable_sv));
  cfg.set("sacl.enable_st", bool_text(c.sacl.enable_st));
  cfg.set("sacl.tau", format_double(c.sacl.tau));
  cfg.set("sacl.k", n(c.sacl.k));
  cfg.set("sacl.seed", n(c.sacl.seed));
  cfg.set("train.lr", format_double(c.lr));
  cfg.set("train.epochs", n(c.epochs));
  cfg.set("train.batch_size", n(c.batch_size));
  cfg.set("train.label_smoothing", format_double(c.label_smoothing));
  cfg.set("train.seed", n(c.seed));
  cfg.set("train.checkpoint", c.checkpoint);
  cfg.set("train.log", c.log);
  return cfg;
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return util::fnv1a64(canonical_text()); }

TrainConfig RunConfig::resolve() const {
  const Reader r(values_);
  TrainConfig c;
  c.data.dir = r.text("data.dir");
  c.data.visual_bank = r.text("data.visual_bank");
  c.data.textual_bank = r.text("data.textual_bank");
  c.data.max_tokens = r.integer("data.max_tokens");
  c.model.dim = r.integer("model.dim");
  c.model.score_fn = model::parse_score_fn(r.text("model.score_fn"));
  c.model.score_mode = parse_score_mode(r.text("model.score_mode"));
  c.model.encoder_layers = r.integer("model.encoder_layers");
  c.model.encoder_heads = r.integer("model.encoder_heads");
  c.model.encoder_ffn = r.integer("model.encoder_ffn");
  c.model.decoder_layers = r.integer("model.decoder_layers");
  c.model.decoder_heads = r.integer("model.decoder_heads");
  c.model.decoder_ffn = r.integer("model.decoder_ffn");
  const std::string& pooling = r.text("model.pooling");
  if (pooling != "ent" && pooling != "mean") {
    throw ConfigError("model.pooling = '" + pooling + "': expected ent or mean");
  }
  c.model.pooling = pooling == "ent" ? model::Pooling::kEnt : model::Pooling::kMean;
  c.model.fusion = model::parse_fusion_kind(r.text("model.fusion"));
  c.model.pos_textual = r.flag("model.pos_textual");
  c.model.pos_visual = r.flag("model.pos_visual");
  c.model.enable_fgmaf = r.flag("model.enable_fgmaf");
  c.sacl.enable_sv = r.flag("sacl.enable_sv");
  c.sacl.enable_st = r.flag("sacl.enable_st");
  c.sacl.tau = r.real("sacl.tau");
  c.sacl.k = r.integer("sacl.k");
  c.sacl.seed = r.integer("sacl.seed");
  c.lr = r.real("train.lr");
  c.epochs = r.integer("train.epochs");
  c.batch_size = r.integer("train.batch_size");
  c.label_smoothing = r.real("train.label_smoothing");
  c.seed = r.integer("train.seed");
  c.checkpoint = r.text("train.checkpoint");
  c.log = r.text("train.log");
  validate(c);
  return c;
}

void apply_environment(RunConfig& cfg) {
  if (const char* seed = std::getenv("TSAM_SEED"); seed && *seed) {
    cfg.set("train.seed", seed);
    Reader(cfg.values()).integer("train.seed");
  }
}

}  // namespace tsam::train
