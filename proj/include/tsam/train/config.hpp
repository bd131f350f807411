#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tsam/model/encoder.hpp"
#include "tsam/model/fusion.hpp"
#include "tsam/model/kge.hpp"
#include "tsam/model/sacl.hpp"
#include "tsam/model/transformer.hpp"

namespace tsam::train {

enum class ScoreMode { kDecoder, kKge };

std::string_view score_mode_name(ScoreMode mode);
ScoreMode parse_score_mode(std::string_view name);

struct DataConfig {
  std::string dir;
  std::string visual_bank = "visual.mmtk";    // relative to dir unless absolute
  std::string textual_bank = "textual.mmtk";
  std::size_t max_tokens = 16;

  std::filesystem::path visual_path() const;
  std::filesystem::path textual_path() const;
};

struct ModelConfig {
  std::size_t dim = 64;
  model::ScoreFn score_fn = model::ScoreFn::kTucker;
  ScoreMode score_mode = ScoreMode::kDecoder;
  std::size_t encoder_layers = 2, encoder_heads = 4, encoder_ffn = 128;
  std::size_t decoder_layers = 2, decoder_heads = 4, decoder_ffn = 128;
  model::Pooling pooling = model::Pooling::kEnt;
  model::FusionKind fusion = model::FusionKind::kWeighted;
  bool pos_textual = true;
  bool pos_visual = false;
  bool enable_fgmaf = true;

  model::TransformerShape encoder_shape() const { return {encoder_layers, encoder_heads, dim, encoder_ffn}; }
  model::TransformerShape decoder_shape() const { return {decoder_layers, decoder_heads, dim, decoder_ffn}; }
};

struct TrainConfig {
  DataConfig data;
  ModelConfig model;
  model::SaclConfig sacl;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double label_smoothing = 0.0;
  std::uint64_t seed = 42;
  std::string checkpoint = "checkpoint.tsck";
  std::string log = "train.log";
};

// Throws ConfigError on out-of-range values.
void validate(const TrainConfig& cfg);

/// Flat "key = value" configuration with dotted keys. Every key has a
/// default; unknown keys are rejected.
class RunConfig {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };

  RunConfig();

  static const std::vector<Key>& keys();
  static RunConfig parse(std::string_view text, const std::string& source);
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from(const TrainConfig& cfg);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted "key = value" lines; the basis of hash().
  std::string canonical_text() const;
  std::uint64_t hash() const;

  TrainConfig resolve() const;

 private:
  std::map<std::string, std::string> values_;
};

// Applies TSAM_SEED, when set, to train.seed.
void apply_environment(RunConfig& cfg);

}  // namespace tsam::train
