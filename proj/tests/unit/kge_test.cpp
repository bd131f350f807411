#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/kge_oracle.hpp"
#include "tsam/ad/adam.hpp"
#include "tsam/ad/ops.hpp"
#include "tsam/model/kge.hpp"

namespace ad = tsam::ad;
using namespace tsam::model;
using T = ad::Tensor<double>;
using tsam::testing::naive_rotate;
using tsam::testing::naive_transe;
using tsam::testing::naive_tucker;

namespace {

T vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return T({n}, std::move(v));
}

T row(const T& m, std::size_t i) { return ad::reshape(ad::slice_rows(m, i, i + 1), {m.cols()}); }

}  // namespace

TEST_CASE("score_tucker examples") {
  T core = T::zeros({2, 2, 2});
  core.mutable_data()[0] = 1;  // W_000
  core.mutable_data()[7] = 1;  // W_111
  auto ones = vec({1, 1});
  CHECK(score_tucker(ones, ones, core, ad::reshape(ones, {1, 2}))[0] == doctest::Approx(2.0));
  auto s = score_tucker(ones, ones, T::zeros({2, 2, 2}), T::full({4, 2}, 3.0));
  for (double x : s.data()) CHECK(x == 0.0);
}

TEST_CASE("score_transe examples") {
  CHECK(score_transe(vec({1, 0}), vec({0, 1}), vec({1, 1})).item() == 0.0);
  CHECK(score_transe(vec({0, 0}), vec({3, 4}), vec({0, 0})).item() == doctest::Approx(5.0));
  std::mt19937_64 rng(3);
  auto h = tsam::testing::random_tensor({6}, rng), r = tsam::testing::random_tensor({6}, rng);
  auto t = tsam::testing::random_tensor({6}, rng), c = tsam::testing::random_tensor({6}, rng);
  CHECK(score_transe(ad::add(h, c), r, ad::add(t, c)).item() ==
        doctest::Approx(score_transe(h, r, t).item()).epsilon(1e-12));
}

TEST_CASE("score_rotate examples") {
  std::mt19937_64 rng(4);
  auto h = tsam::testing::random_tensor({6}, rng);
  CHECK(score_rotate(h, T::zeros({3}), h).item() == 0.0);
  CHECK(score_rotate(vec({1, 0}), vec({std::numbers::pi}), vec({-1, 0})).item() == doctest::Approx(0.0).epsilon(1e-12));

  // Shifting the phases of h and t by a common angle leaves the distance alone.
  auto t = tsam::testing::random_tensor({6}, rng), theta = tsam::testing::random_tensor({3}, rng);
  auto shift = T::full({1, 3}, 0.7);
  auto h2 = ad::reshape(rotate(ad::reshape(h, {1, 6}), shift), {6});
  auto t2 = ad::reshape(rotate(ad::reshape(t, {1, 6}), shift), {6});
  CHECK(score_rotate(h2, theta, t2).item() == doctest::Approx(score_rotate(h, theta, t).item()).epsilon(1e-12));
}

TEST_CASE("init_embeddings") {
  auto a = init_embeddings<float>(10, 3, 8, ScoreFn::kTucker, 5);
  auto b = init_embeddings<float>(10, 3, 8, ScoreFn::kTucker, 5);
  CHECK(a.entity.shape() == ad::Shape{10, 8});
  CHECK(a.relation.shape() == ad::Shape{6, 8});
  CHECK(a.core.shape() == ad::Shape{8, 8, 8});
  CHECK(std::equal(a.entity.data().begin(), a.entity.data().end(), b.entity.data().begin()));
  CHECK(std::equal(a.core.data().begin(), a.core.data().end(), b.core.data().begin()));
  const double bound = std::sqrt(6.0 / 18.0);
  for (float x : a.entity.data()) CHECK(std::abs(x) <= bound);

  auto rot = init_embeddings<double>(10, 3, 8, ScoreFn::kRotatE, 5);
  CHECK(rot.relation.shape() == ad::Shape{6, 4});
  CHECK_FALSE(rot.core.defined());
  for (double th : rot.relation.data()) CHECK((th >= 0 && th < 2 * std::numbers::pi));
  auto unit = relation_vectors(rot, {0, 1, 2, 3, 4, 5});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      const double re = unit.at(i, k), im = unit.at(i, 4 + k);
      CHECK(re * re + im * im == doctest::Approx(1.0).epsilon(1e-12));
    }

  CHECK_THROWS_AS(init_embeddings<double>(10, 3, 7, ScoreFn::kRotatE, 1), tsam::ConfigError);
  CHECK_THROWS_AS(parse_score_fn("distmult"), tsam::ConfigError);
  CHECK(parse_score_fn(score_fn_name(ScoreFn::kTransE)) == ScoreFn::kTransE);
}

TEST_CASE("batched plausibility matches naive loops on 100 random triples") {
  const std::size_t E = 100, d = 6;
  for (ScoreFn fn : {ScoreFn::kTucker, ScoreFn::kTransE, ScoreFn::kRotatE}) {
    CAPTURE(score_fn_name(fn));
    auto kge = init_embeddings<double>(E, 4, d, fn, 77);
    std::mt19937_64 rng(8);
    std::vector<std::size_t> heads(100), rels(100), tails(100);
    for (std::size_t i = 0; i < 100; ++i) {
      heads[i] = rng() % E;
      rels[i] = rng() % 8;
      tails[i] = rng() % E;
    }
    auto scores = plausibility(kge, ad::gather_rows(kge.entity, heads), ad::gather_rows(kge.relation, rels), kge.entity);
    REQUIRE(scores.shape() == ad::Shape{100, E});
    for (std::size_t i = 0; i < 100; ++i) {
      const T h = row(kge.entity, heads[i]), r = row(kge.relation, rels[i]), t = row(kge.entity, tails[i]);
      double expected = 0;
      switch (fn) {
        case ScoreFn::kTucker: expected = naive_tucker(kge.core, h, r, t); break;
        case ScoreFn::kTransE: expected = -naive_transe(h, r, t); break;
        case ScoreFn::kRotatE: expected = -naive_rotate(h, r, t); break;
      }
      CHECK(std::abs(scores.at(i, tails[i]) - expected) < 1e-5);
    }
  }
}

TEST_CASE("float plausibility matches the double oracle within 1e-5") {
  for (ScoreFn fn : {ScoreFn::kTucker, ScoreFn::kTransE, ScoreFn::kRotatE}) {
    auto kf = init_embeddings<float>(30, 2, 8, fn, 9);
    auto kd = init_embeddings<double>(30, 2, 8, fn, 9);
    std::vector<std::size_t> h{0, 5, 29}, r{0, 3, 1};
    auto sf = plausibility(kf, ad::gather_rows(kf.entity, h), ad::gather_rows(kf.relation, r), kf.entity);
    auto sd = plausibility(kd, ad::gather_rows(kd.entity, h), ad::gather_rows(kd.relation, r), kd.entity);
    for (std::size_t i = 0; i < sf.size(); ++i) CHECK(std::abs(sf[i] - sd[i]) < 1e-5);
  }
}

TEST_CASE("scoring functions differentiate end to end") {
  std::mt19937_64 rng(12);
  auto h = tsam::testing::random_tensor({3, 4}, rng);
  auto r = tsam::testing::random_tensor({3, 4}, rng);
  auto theta = tsam::testing::random_tensor({3, 2}, rng);
  auto t = tsam::testing::random_tensor({5, 4}, rng);
  auto w = tsam::testing::random_tensor({3, 5}, rng);
  w.set_requires_grad(false);
  for (ScoreFn fn : {ScoreFn::kTucker, ScoreFn::kTransE, ScoreFn::kRotatE}) {
    CAPTURE(score_fn_name(fn));
    KgeParams<double> kge;
    kge.fn = fn;
    kge.core = tsam::testing::random_tensor({4, 4, 4}, rng);
    auto rel = fn == ScoreFn::kRotatE ? theta : r;
    std::vector<T> leaves{h, rel, t};
    if (fn == ScoreFn::kTucker) leaves.push_back(kge.core);
    auto res = tsam::testing::grad_check([&] { return ad::sum(ad::mul(plausibility(kge, h, rel, t), w)); }, leaves);
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
  auto hv = tsam::testing::random_tensor({4}, rng), rv = tsam::testing::random_tensor({4}, rng);
  auto tv = tsam::testing::random_tensor({4}, rng), th = tsam::testing::random_tensor({2}, rng);
  auto res = tsam::testing::grad_check(
      [&] { return ad::add(score_transe(hv, rv, tv), score_rotate(hv, th, tv)); }, {hv, rv, tv, th});
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("RotatE phases keep unit modulus through optimizer steps") {
  auto kge = init_embeddings<float>(8, 2, 6, ScoreFn::kRotatE, 4);
  tsam::ad::AdamState state;
  state.options.lr = 0.5;
  std::vector<ad::Tensor<float>> params{kge.entity, kge.relation};
  for (int step = 0; step < 20; ++step) {
    for (auto& p : params) p.zero_grad();
    auto s = plausibility(kge, ad::gather_rows(kge.entity, {0, 1}), ad::gather_rows(kge.relation, {0, 3}), kge.entity);
    ad::backward(ad::sum(s));
    tsam::ad::adam_step(params, state);
  }
  auto unit = relation_vectors(kge, {0, 1, 2, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const double re = unit.at(i, k), im = unit.at(i, 3 + k);
      CHECK(re * re + im * im == doctest::Approx(1.0).epsilon(1e-6));
    }
}
