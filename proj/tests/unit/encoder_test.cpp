#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/transformer_oracle.hpp"
#include "tsam/ad/ops.hpp"
#include "tsam/model/encoder.hpp"

namespace ad = tsam::ad;
using namespace tsam::model;
using tsam::testing::Matrix;
using tsam::testing::block_oracle;
using tsam::testing::jitter;
using tsam::testing::to_matrix;

namespace {

EncoderConfig small_config(std::size_t layers, std::size_t heads, std::size_t dim, bool positional = false) {
  EncoderConfig cfg;
  cfg.transformer = {layers, heads, dim, 2 * dim};
  cfg.positional = positional;
  cfg.max_tokens = 6;
  return cfg;
}

}  // namespace

TEST_CASE("project_tokens") {
  ParamStore<double> store;
  std::mt19937_64 rng(1);
  auto proj = ProjectionParams<double>::create(store, "proj", 3, 3, rng);
  auto tokens = tsam::testing::random_tensor({4, 3}, rng);

  SUBCASE("identity weight") {
    std::fill(proj.weight.mutable_data().begin(), proj.weight.mutable_data().end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) proj.weight.mutable_data()[i * 3 + i] = 1.0;
    auto out = project_tokens(tokens, proj);
    for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(out[i] == tokens[i]);
  }
  SUBCASE("zero weight gives the bias") {
    std::fill(proj.weight.mutable_data().begin(), proj.weight.mutable_data().end(), 0.0);
    proj.bias.mutable_data()[0] = 0.25;
    proj.bias.mutable_data()[1] = -1.5;
    proj.bias.mutable_data()[2] = 2.0;
    auto out = project_tokens(tokens, proj);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == proj.bias[j]);
  }
  SUBCASE("random weight matches a mat-vec loop") {
    ParamStore<double> s2;
    auto p = ProjectionParams<double>::create(s2, "p", 5, 3, rng);
    jitter(s2, 3);
    auto one = tsam::testing::random_tensor({1, 5}, rng);
    auto out = project_tokens(one, p);
    for (std::size_t j = 0; j < 3; ++j) {
      double s = p.bias[j];
      for (std::size_t i = 0; i < 5; ++i) s += p.weight.at(i, j) * one[i];
      CHECK(std::abs(out[j] - s) < 1e-6);
    }
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(project_tokens(tsam::testing::random_tensor({2, 4}, rng), proj), tsam::ShapeError);
  }
}

TEST_CASE("encode_sequence") {
  std::mt19937_64 rng(5);

  SUBCASE("no layers returns the [ENT] token") {
    ParamStore<double> store;
    auto enc = EncoderParams<double>::create(store, "enc", small_config(0, 1, 4), 4, rng);
    auto out = encode_sequence(tsam::testing::random_tensor({3, 4}, rng), enc);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == enc.ent_token[i]);
  }

  SUBCASE("token order is irrelevant without positions") {
    ParamStore<double> store;
    auto enc = EncoderParams<double>::create(store, "enc", small_config(2, 2, 8), 8, rng);
    jitter(store, 9);
    auto x = tsam::testing::random_tensor({5, 8}, rng);
    auto permuted = ad::gather_rows(x, {3, 0, 4, 2, 1});
    auto a = encode_sequence(x, enc), b = encode_sequence(permuted, enc);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  }

  SUBCASE("positions make order matter") {
    ParamStore<double> store;
    auto enc = EncoderParams<double>::create(store, "enc", small_config(1, 2, 8, true), 8, rng);
    jitter(store, 10);
    auto x = tsam::testing::random_tensor({4, 8}, rng);
    auto a = encode_sequence(x, enc), b = encode_sequence(ad::gather_rows(x, {1, 0, 2, 3}), enc);
    double diff = 0;
    for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 1e-6);
  }

  SUBCASE("one layer, one head, d = 4 matches the scalar oracle") {
    ParamStore<double> store;
    auto enc = EncoderParams<double>::create(store, "enc", small_config(1, 1, 4), 4, rng);
    jitter(store, 11);
    auto x = tsam::testing::random_tensor({3, 4}, rng);
    Matrix seq = {std::vector<double>(enc.ent_token.data().begin(), enc.ent_token.data().end())};
    for (const auto& row : to_matrix(x)) seq.push_back(row);
    const Matrix expected = block_oracle(seq, enc.layers[0]);
    auto out = encode_sequence(x, enc);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(out[i] - expected[0][i]) < 1e-5);

    EncoderConfig mean_cfg = enc.config;
    mean_cfg.pooling = Pooling::kMean;
    auto mean_enc = EncoderParams<double>::bind(store, "enc", mean_cfg);
    auto pooled = encode_sequence(x, mean_enc);
    for (std::size_t i = 0; i < 4; ++i) {
      double m = 0;
      for (const auto& row : expected) m += row[i] / expected.size();
      CHECK(std::abs(pooled[i] - m) < 1e-5);
    }
  }

  SUBCASE("gradients match finite differences") {
    ParamStore<double> store;
    std::mt19937_64 r2(12);
    auto proj = ProjectionParams<double>::create(store, "proj", 5, 8, r2);
    auto enc = EncoderParams<double>::create(store, "enc", small_config(2, 2, 8, true), 5, r2);
    jitter(store, 13);
    auto tokens = tsam::testing::random_tensor({4, 5}, r2);
    auto w = tsam::testing::random_tensor({8}, r2);
    w.set_requires_grad(false);
    auto res = tsam::testing::grad_check(
        [&] { return ad::sum(ad::mul(encode_sequence(project_tokens(tokens, proj), enc), w)); }, store.tensors(),
        1e-4, 12);
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("prepare_tokens truncates and marks missing entities") {
  tsam::data::TokenBank bank(tsam::data::Modality::kTextual, 2);
  bank.add(0, std::vector<float>{1, 2, 3, 4, 5, 6});
  bank.add(2, std::vector<float>{7, 8});
  auto tokens = prepare_tokens(bank, 3, 2);
  CHECK(tokens.token_count(0) == 2);
  CHECK(tokens.token_count(1) == 0);
  CHECK(tokens.token_count(2) == 1);
  CHECK(tokens.values == std::vector<float>{1, 2, 3, 4, 7, 8});
  CHECK_THROWS_AS(prepare_tokens(bank, 3, 0), tsam::ConfigError);
}

TEST_CASE("encode_entities agrees with per-sequence encoding") {
  std::mt19937_64 rng(17);
  tsam::data::TokenBank bank(tsam::data::Modality::kVisual, 3);
  std::uniform_real_distribution<float> u(-1, 1);
  for (std::uint64_t e : {0u, 1u, 3u}) {
    std::vector<float> rows((e + 2) * 3);
    for (auto& x : rows) x = u(rng);
    bank.add(e, rows);
  }
  const auto tokens = prepare_tokens(bank, 4, 6);

  for (bool positional : {false, true})
    for (Pooling pooling : {Pooling::kEnt, Pooling::kMean}) {
      ParamStore<double> store;
      auto proj = ProjectionParams<double>::create(store, "proj", 3, 4, rng);
      auto cfg = small_config(2, 2, 4, positional);
      cfg.pooling = pooling;
      auto enc = EncoderParams<double>::create(store, "enc", cfg, 3, rng);
      jitter(store, 19);
      auto batched = encode_entities(tokens, {3, 2, 0, 2}, proj, enc);
      REQUIRE(batched.shape() == ad::Shape{4, 4});
      auto single = [&](std::size_t e) {
        if (tokens.token_count(e) == 0) {
          return encode_sequence(project_tokens(ad::reshape(enc.placeholder, {1, 3}), proj), enc);
        }
        std::vector<double> rows(tokens.values.begin() + tokens.offsets[e] * 3,
                                 tokens.values.begin() + tokens.offsets[e + 1] * 3);
        return encode_sequence(project_tokens(ad::Tensor<double>({tokens.token_count(e), 3}, rows), proj), enc);
      };
      const std::size_t order[] = {3, 2, 0, 2};
      for (std::size_t i = 0; i < 4; ++i) {
        auto expected = single(order[i]);
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(batched.at(i, c) - expected[c]) < 1e-9);
      }
    }
}

TEST_CASE("a missing modality depends only on the placeholder and [ENT]") {
  std::mt19937_64 rng(23);
  ParamStore<double> store;
  auto proj = ProjectionParams<double>::create(store, "proj", 2, 4, rng);
  auto enc = EncoderParams<double>::create(store, "enc", small_config(1, 2, 4), 2, rng);
  jitter(store, 29);

  tsam::data::TokenBank a(tsam::data::Modality::kVisual, 2), b(tsam::data::Modality::kVisual, 2);
  a.add(0, std::vector<float>{1, 2, 3, 4});
  b.add(0, std::vector<float>{-5, 0.5f});
  b.add(2, std::vector<float>{9, 9});
  auto out_a = encode_entities(prepare_tokens(a, 3, 4), {1}, proj, enc);
  auto out_b = encode_entities(prepare_tokens(b, 3, 4), {1}, proj, enc);
  for (std::size_t c = 0; c < 4; ++c) CHECK(out_a[c] == out_b[c]);

  // The placeholder receives gradient; the bank does not enter the graph.
  store.zero_grad();
  ad::backward(ad::sum(out_a));
  double g = 0;
  for (double x : enc.placeholder.grad()) g += std::abs(x);
  CHECK(g > 0);
}
