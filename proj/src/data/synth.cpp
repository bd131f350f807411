#include "tsam/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "tsam/error.hpp"

namespace tsam::data {

namespace {

constexpr std::size_t kLatentDim = 8;
constexpr double kTokenJitter = 0.3;   // per-token latent perturbation
constexpr double kFeatureNoise = 0.1;  // per-feature additive noise

using Latents = std::vector<std::vector<double>>;

void validate(const SynthConfig& cfg) {
  if (cfg.entity_count == 0 || cfg.relation_count == 0 || cfg.triple_count == 0 ||
      cfg.tokens_per_modality == 0 || cfg.token_dim == 0) {
    throw ConfigError("synthetic dataset counts must all be positive");
  }
  const double capacity = static_cast<double>(cfg.entity_count) * static_cast<double>(cfg.entity_count) *
                          static_cast<double>(cfg.relation_count);
  if (static_cast<double>(cfg.triple_count) > capacity) {
    throw ConfigError("infeasible triple_count " + std::to_string(cfg.triple_count) + ": at most " +
                      std::to_string(static_cast<unsigned long long>(capacity)) + " distinct triples exist");
  }
}

Latents gaussian_rows(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Latents out(rows, std::vector<double>(cols));
  for (auto& row : out)
    for (auto& x : row) x = n(rng);
  return out;
}

std::vector<Triple> sample_triples(const SynthConfig& cfg, const Latents& z, std::mt19937_64& rng) {
  const std::size_t E = cfg.entity_count, R = cfg.relation_count;
  const Latents shift = gaussian_rows(R, kLatentDim, 1.0, rng);
  std::set<Triple> chosen;
  std::vector<Triple> out;
  auto take = [&](const Triple& t) {
    if (chosen.insert(t).second) out.push_back(t);
  };

  // Structured triples: tail among the nearest entities to z[h] + shift[r].
  const std::discrete_distribution<int> rank_pick{0.6, 0.25, 0.15};
  std::uniform_int_distribution<std::size_t> pick_e(0, E - 1), pick_r(0, R - 1);
  std::vector<std::size_t> order(E);
  std::vector<double> dist(E);
  const std::size_t budget = 20 * cfg.triple_count + 1000;
  for (std::size_t attempt = 0; attempt < budget && out.size() < cfg.triple_count; ++attempt) {
    const std::size_t h = pick_e(rng), r = pick_r(rng);
    for (std::size_t e = 0; e < E; ++e) {
      double s = 0;
      for (std::size_t c = 0; c < kLatentDim; ++c) {
        const double d = z[h][c] + shift[r][c] - z[e][c];
        s += d * d;
      }
      dist[e] = e == h && E > 1 ? 1e300 : s;
    }
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min<std::size_t>(3, E);
    std::partial_sort(order.begin(), order.begin() + top, order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    auto rank_dist = rank_pick;
    std::size_t rank = static_cast<std::size_t>(rank_dist(rng));
    rank = std::min(rank, top - 1);
    take({static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(order[rank])});
  }

  // Dense configurations cannot be filled from neighbourhoods alone.
  for (std::size_t attempt = 0; attempt < budget && out.size() < cfg.triple_count; ++attempt) {
    take({static_cast<std::uint32_t>(pick_e(rng)), static_cast<std::uint32_t>(pick_r(rng)),
          static_cast<std::uint32_t>(pick_e(rng))});
  }
  if (out.size() < cfg.triple_count) {
    std::vector<Triple> rest;
    for (std::size_t h = 0; h < E; ++h)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t t = 0; t < E; ++t) {
          Triple tr{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(t)};
          if (!chosen.contains(tr)) rest.push_back(tr);
        }
    std::shuffle(rest.begin(), rest.end(), rng);
    rest.resize(cfg.triple_count - out.size());
    for (const Triple& t : rest) take(t);
  }
  return out;
}

TokenBank make_bank(Modality modality, const SynthConfig& cfg, const Latents& z, std::mt19937_64& rng) {
  const Latents mix = gaussian_rows(cfg.token_dim, kLatentDim, 1.0 / std::sqrt(double(kLatentDim)), rng);
  std::normal_distribution<double> jitter(0.0, kTokenJitter), noise(0.0, kFeatureNoise);
  TokenBank bank(modality, static_cast<std::uint32_t>(cfg.token_dim));
  std::vector<float> tokens(cfg.tokens_per_modality * cfg.token_dim);
  std::vector<double> latent(kLatentDim);
  for (std::size_t e = 0; e < cfg.entity_count; ++e) {
    for (std::size_t j = 0; j < cfg.tokens_per_modality; ++j) {
      for (std::size_t c = 0; c < kLatentDim; ++c) latent[c] = z[e][c] + jitter(rng);
      for (std::size_t f = 0; f < cfg.token_dim; ++f) {
        double s = noise(rng);
        for (std::size_t c = 0; c < kLatentDim; ++c) s += mix[f][c] * latent[c];
        tokens[j * cfg.token_dim + f] = static_cast<float>(s);
      }
    }
    bank.add(e, tokens);
  }
  return bank;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  const Latents z = gaussian_rows(cfg.entity_count, kLatentDim, 1.0, rng);
  std::vector<Triple> triples = sample_triples(cfg, z, rng);
  std::shuffle(triples.begin(), triples.end(), rng);

  const std::size_t n_valid = cfg.triple_count / 10, n_test = cfg.triple_count / 10;
  const std::size_t n_train = cfg.triple_count - n_valid - n_test;
  std::vector<Triple> train(triples.begin(), triples.begin() + n_train);
  std::vector<Triple> valid(triples.begin() + n_train, triples.begin() + n_train + n_valid);
  std::vector<Triple> test(triples.begin() + n_train + n_valid, triples.end());

  std::vector<std::string> entities(cfg.entity_count), relations(cfg.relation_count);
  for (std::size_t i = 0; i < entities.size(); ++i) entities[i] = "entity_" + std::to_string(i);
  for (std::size_t i = 0; i < relations.size(); ++i) relations[i] = "relation_" + std::to_string(i);

  TokenBank visual = make_bank(Modality::kVisual, cfg, z, rng);
  TokenBank textual = make_bank(Modality::kTextual, cfg, z, rng);
  return SynthDataset{TripleStore(std::move(entities), std::move(relations), std::move(train), std::move(valid),
                                  std::move(test)),
                      std::move(visual), std::move(textual)};
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
  write_triples(data.store, dir);
  write_token_bank(data.visual, dir / "visual.mmtk");
  write_token_bank(data.textual, dir / "textual.mmtk");
}

}  // namespace tsam::data
