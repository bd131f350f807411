#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "tsam/ad/ops.hpp"
#include "tsam/model/sacl.hpp"

namespace ad = tsam::ad;
using namespace tsam::model;
using T = ad::Tensor<double>;

namespace {

double cosine(const T& a, std::size_t i, const T& b, std::size_t j) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    dot += a.at(i, c) * b.at(j, c);
    na += a.at(i, c) * a.at(i, c);
    nb += b.at(j, c) * b.at(j, c);
  }
  return dot / std::sqrt(na * nb);
}

// Scalar loop re-implementation of one InfoNCE direction.
double oracle_direction(const T& anchors, const T& positives, const std::vector<std::size_t>& idx, std::size_t k,
                        double tau) {
  const std::size_t B = anchors.rows();
  double total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const double pos = std::exp(cosine(anchors, i, positives, i) / tau);
    double denom = pos;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(cosine(anchors, i, positives, idx[i * k + j]) / tau);
    total += -std::log(pos / denom);
  }
  return total / B;
}

}  // namespace

TEST_CASE("sample_negatives") {
  CHECK(sample_negatives(2, 1, std::uint64_t{3}) == std::vector<std::size_t>{1, 0});
  CHECK(sample_negatives(9, 4, std::uint64_t{5}) == sample_negatives(9, 4, std::uint64_t{5}));
  CHECK_THROWS_AS(sample_negatives(4, 4, std::uint64_t{1}), tsam::ConfigError);
  CHECK_THROWS_AS(sample_negatives(4, 0, std::uint64_t{1}), tsam::ConfigError);

  std::mt19937_64 rng(7);
  std::vector<std::size_t> hits(6, 0);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto m = sample_negatives(6, 3, rng);
    for (std::size_t i = 0; i < 6; ++i) {
      std::set<std::size_t> row(m.begin() + i * 3, m.begin() + i * 3 + 3);
      CHECK(row.size() == 3);
      CHECK_FALSE(row.contains(i));
      if (i == 0)
        for (std::size_t x : row) ++hits[x];
    }
  }
  // Each of the 5 eligible indices appears in about 3/5 of the draws for row 0.
  CHECK(hits[0] == 0);
  for (std::size_t x = 1; x < 6; ++x) CHECK(std::abs(double(hits[x]) - 600.0) < 80.0);
}

TEST_CASE("info_nce examples") {
  SUBCASE("uniform similarity gives log(K + 1)") {
    for (std::size_t k : {1u, 8u, 16u}) {
      const std::size_t B = k + 1;
      std::vector<double> rows(B * 3);
      for (std::size_t i = 0; i < B; ++i) rows[i * 3] = 1.0 + i, rows[i * 3 + 1] = 2.0 + 2.0 * i;
      T x({B, 3}, rows);
      const auto idx = sample_negatives(B, k, std::uint64_t{k});
      for (double tau : {0.02, 0.5, 1.0}) {
        CHECK(std::abs(info_nce_indexed(x, x, x, idx, k, tau).item() - std::log(double(k + 1))) <= 1e-6);
      }
      // Identical rows make every float similarity bit-equal.
      auto xf = ad::Tensor<float>::full({B, 3}, 0.75f);
      CHECK(std::abs(info_nce_indexed(xf, xf, xf, idx, k, 0.02).item() - std::log(double(k + 1))) <= 1e-6);
    }
  }
  SUBCASE("K = 1, s(a,p) = 1, s(a,n) = 0, tau = 1") {
    T a({1, 2}, {1, 0}), n({1, 2}, {0, 1});
    CHECK(info_nce(a, a, n, 1, 1.0).item() == doctest::Approx(0.31326).epsilon(1e-5));
    CHECK(info_nce(a, a, n, 1, 1.0).item() == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  }
  SUBCASE("tau -> 0 with a strictly better positive") {
    T a({1, 2}, {1, 0}), n({2, 2}, {0.6, 0.8, -1, 0.1});
    CHECK(info_nce(a, a, n, 2, 1e-3).item() < 1e-12);
  }
  SUBCASE("zero-norm rows are rejected") {
    T a({2, 2}, {1, 0, 0, 0}), p({2, 2}, {1, 1, 1, 1});
    CHECK_THROWS_AS(info_nce(a, p, p, 1, 0.5), tsam::NumericError);
    CHECK_THROWS_AS(info_nce(p, p, a, 1, 0.5), tsam::NumericError);
  }
}

TEST_CASE("info_nce properties") {
  std::mt19937_64 rng(53);
  const std::size_t B = 6, k = 3;
  auto a = tsam::testing::random_tensor({B, 5}, rng);
  auto p = tsam::testing::random_tensor({B, 5}, rng);
  const auto idx = sample_negatives(B, k, rng);

  SUBCASE("non-negative and finite-difference exact") {
    CHECK(info_nce_indexed(a, p, p, idx, k, 0.3).item() > 0);
    auto res = tsam::testing::grad_check([&] { return info_nce_indexed(a, p, p, idx, k, 0.3); }, {a, p});
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("row scaling does not change the loss") {
    std::vector<double> factors{0.1, 3, 7.5, 1, 0.02, 40};
    T f({B, 1}, factors);
    const double base = info_nce_indexed(a, p, p, idx, k, 0.2).item();
    const double scaled = info_nce_indexed(ad::mul(a, f), ad::mul(p, ad::gather_rows(f, {5, 4, 3, 2, 1, 0})), ad::mul(p, ad::gather_rows(f, {5, 4, 3, 2, 1, 0})), idx, k, 0.2).item();
    CHECK(std::abs(base - scaled) < 1e-5);
  }
  SUBCASE("swapping S and V exchanges the directions") {
    const double s_to_v = info_nce_indexed(a, p, p, idx, k, 0.4).item();
    const double v_to_s = info_nce_indexed(p, a, a, idx, k, 0.4).item();
    CHECK(oracle_direction(a, p, idx, k, 0.4) == doctest::Approx(s_to_v).epsilon(1e-12));
    CHECK(oracle_direction(p, a, idx, k, 0.4) == doctest::Approx(v_to_s).epsilon(1e-12));
  }
  SUBCASE("smaller tau lowers the loss when positives dominate") {
    // Positives equal their anchors, so every positive similarity is 1 and
    // every negative is strictly below it.
    double previous = 1e300;
    for (double tau : {2.0, 1.0, 0.5, 0.1, 0.02}) {
      const double l = info_nce_indexed(a, a, a, idx, k, tau).item();
      CHECK(l < previous);
      previous = l;
    }
  }
}

TEST_CASE("sacl_loss") {
  std::mt19937_64 data_rng(61);
  const std::size_t B = 4, k = 2;
  const double tau = 0.5;
  auto s = tsam::testing::random_tensor({B, 6}, data_rng);
  auto v = tsam::testing::random_tensor({B, 6}, data_rng);
  auto t = tsam::testing::random_tensor({B, 6}, data_rng);
  SaclConfig cfg{tau, k, true, true, 0};

  SUBCASE("matches the scalar oracle for B = 4, K = 2, tau = 0.5") {
    std::mt19937_64 rng(99), replay(99);
    auto losses = sacl_loss(s, v, t, cfg, rng);
    const auto sv1 = sample_negatives(B, k, replay), sv2 = sample_negatives(B, k, replay);
    const auto st1 = sample_negatives(B, k, replay), st2 = sample_negatives(B, k, replay);
    const double sv = oracle_direction(s, v, sv1, k, tau) + oracle_direction(v, s, sv2, k, tau);
    const double st = oracle_direction(s, t, st1, k, tau) + oracle_direction(t, s, st2, k, tau);
    CHECK(std::abs(losses.sv.item() - sv) < 1e-5);
    CHECK(std::abs(losses.st.item() - st) < 1e-5);
    // The four directions draw independent negatives.
    CHECK((sv1 != sv2 || st1 != st2));
  }
  SUBCASE("perfect alignment drives both terms to zero") {
    std::mt19937_64 rng(1);
    auto x = tsam::testing::random_tensor({8, 16}, data_rng);
    auto losses = sacl_loss(x, x, x, SaclConfig{0.02, 4, true, true, 0}, rng);
    CHECK(losses.sv.item() < 1e-3);
    CHECK(losses.st.item() < 1e-3);
  }
  SUBCASE("disabled terms are exactly zero") {
    std::mt19937_64 rng(2);
    auto no_sv = sacl_loss(s, v, t, SaclConfig{tau, k, false, true, 0}, rng);
    CHECK(no_sv.sv.item() == 0.0);
    CHECK(no_sv.st.item() > 0.0);
    auto none = sacl_loss(s, v, t, SaclConfig{tau, k, false, false, 0}, rng);
    CHECK(none.sv.item() == 0.0);
    CHECK(none.st.item() == 0.0);
  }
  SUBCASE("disabling one term keeps the other's negatives") {
    std::mt19937_64 r1(5), r2(5);
    auto both = sacl_loss(s, v, t, cfg, r1);
    auto st_only = sacl_loss(s, v, t, SaclConfig{tau, k, false, true, 0}, r2);
    CHECK(both.st.item() == st_only.st.item());
  }
  SUBCASE("K is capped by the batch and a single row gives zero") {
    std::mt19937_64 rng(3);
    auto capped = sacl_loss(s, v, t, SaclConfig{tau, 16, true, true, 0}, rng);
    CHECK(std::isfinite(capped.sv.item()));
    auto one = sacl_loss(ad::slice_rows(s, 0, 1), ad::slice_rows(v, 0, 1), ad::slice_rows(t, 0, 1), cfg, rng);
    CHECK(one.sv.item() == 0.0);
  }
}
