#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "tsam/data/token_bank.hpp"
#include "tsam/data/triple_store.hpp"

namespace tsam::data {

struct SynthConfig {
  std::size_t entity_count = 50;
  std::size_t relation_count = 5;
  std::size_t triple_count = 200;
  std::size_t tokens_per_modality = 4;
  std::size_t token_dim = 16;
  std::uint64_t seed = 7;
};

struct SynthDataset {
  TripleStore store;
  TokenBank visual;
  TokenBank textual;
};

/// Deterministic desk-scale multi-modal graph. Every entity gets a latent
/// vector; relations act as translations in latent space and a triple's
/// tail is drawn from the nearest entities to head + relation. Both token
/// banks are noisy linear views of the latent, so modality tokens carry the
/// same signal as the graph structure. Splits are 80/10/10 (valid and test
/// get floor(n/10) each).
SynthDataset synth_generate(const SynthConfig& cfg);

// entity2id.txt, relation2id.txt, {train,valid,test}.txt, visual.mmtk, textual.mmtk
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

}  // namespace tsam::data
