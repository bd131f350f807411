#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "tsam/ad/adam.hpp"
#include "tsam/ad/ops.hpp"

using tsam::ad::Shape;
using TensorF = tsam::ad::Tensor<float>;
using TensorD = tsam::ad::Tensor<double>;
namespace ad = tsam::ad;

namespace {

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

}  // namespace

TEST_CASE("matmul examples") {
  SUBCASE("identity") {
    TensorF eye({2, 2}, {1, 0, 0, 1});
    TensorF b({2, 2}, {3, 4, 5, 6});
    auto c = ad::matmul(eye, b);
    CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{3, 4, 5, 6});
  }
  SUBCASE("against triple loop") {
    const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    const auto expected = naive_matmul(a, b, 2, 2, 2);
    CHECK(expected == std::vector<double>{19, 22, 43, 50});
    auto c = ad::matmul(TensorD({2, 2}, a), TensorD({2, 2}, b));
    CHECK(std::vector<double>(c.data().begin(), c.data().end()) == expected);
  }
  SUBCASE("zero left operand") {
    auto c = ad::matmul(TensorF::zeros({2, 3}), TensorF({3, 2}, {1, 2, 3, 4, 5, 6}));
    CHECK(c.shape() == Shape{2, 2});
    for (float x : c.data()) CHECK(x == 0.0f);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      ad::matmul(TensorF::zeros({2, 3}), TensorF::zeros({2, 3}));
      FAIL("expected ShapeError");
    } catch (const tsam::ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
    }
  }
  SUBCASE("random rectangular against triple loop") {
    std::mt19937_64 rng(3);
    auto a = tsam::testing::random_tensor({3, 5}, rng);
    auto b = tsam::testing::random_tensor({5, 4}, rng);
    const auto expected = naive_matmul({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, 3, 5, 4);
    auto c = ad::matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax examples") {
  auto s = ad::softmax(TensorD({3}, {1, 1, 1}));
  for (double x : s.data()) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  s = ad::softmax(TensorD({2}, {0.0, std::log(2.0)}));
  CHECK(s[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  auto big = ad::softmax(TensorF({2}, {1000.0f, 0.0f}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(ad::softmax(TensorF({2}, {NAN, 0.0f})), tsam::NumericError);
  CHECK_THROWS_AS(ad::softmax(TensorF({2}, {INFINITY, 0.0f})), tsam::NumericError);
}

TEST_CASE("softmax sums to one and is permutation-equivariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-20.0f, 20.0f);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    std::vector<float> x(n);
    for (auto& v : x) v = u(rng);
    auto s = ad::softmax(TensorF({n}, x));
    double total = 0;
    for (float v : s.data()) {
      CHECK(v >= 0.0f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> xp(n);
    for (std::size_t i = 0; i < n; ++i) xp[i] = x[perm[i]];
    auto sp = ad::softmax(TensorF({n}, xp));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(sp[i] - s[perm[i]]) <= 1e-6f * std::max(1.0f, s[perm[i]]));
  }
}

TEST_CASE("layer_norm examples") {
  auto ones = TensorD::full({4}, 1.0);
  auto zeros = TensorD::zeros({4});
  auto y = ad::layer_norm(TensorD::full({4}, 3.5), ones, zeros, 1e-5);
  for (double v : y.data()) CHECK(v == 0.0);

  y = ad::layer_norm(TensorD({2}, {1.0, -1.0}), TensorD::full({2}, 1.0), TensorD::zeros({2}), 1e-12);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-9));

  auto bias = TensorD({4}, {0.5, -1.0, 2.0, 0.0});
  y = ad::layer_norm(TensorD({4}, {1, 7, -2, 3}), TensorD::zeros({4}), bias, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == bias[i]);

  CHECK_THROWS_AS(ad::layer_norm(TensorD({1}, {1.0}), TensorD::full({1}, 1.0), TensorD::zeros({1}), 1e-5),
                  tsam::ShapeError);
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    TensorD x({2, 3}, {1, -2, 3, 4, 5, -6}, true);
    ad::backward(ad::sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("x.x gives 2x") {
    std::mt19937_64 rng(5);
    auto x = tsam::testing::random_tensor({7}, rng);
    ad::backward(ad::dot(x, x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x[i]).epsilon(1e-12));
  }
  SUBCASE("non-scalar loss is a contract error") {
    TensorD x({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(ad::backward(ad::scale(x, 2.0)), tsam::ContractError);
  }
  SUBCASE("repeated calls accumulate into leaves") {
    TensorD x({3}, {1, 2, 3}, true);
    auto loss = ad::sum(ad::square(x));
    ad::backward(loss);
    ad::backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(4 * x[i]));
  }
  SUBCASE("unreachable parameter gets no gradient") {
    TensorD x({2}, {1, 2}, true);
    TensorD unused({2}, {3, 4}, true);
    ad::backward(ad::sum(x));
    CHECK_FALSE(unused.has_grad());
  }
  SUBCASE("no-grad guard records nothing") {
    TensorD x({2}, {1, 2}, true);
    ad::NoGradGuard guard;
    auto y = ad::sum(ad::square(x));
    CHECK_FALSE(y.requires_grad());
  }
}

namespace {

// Builds a random expression over three leaves from the full op set and
// reduces it to a scalar with a fixed random weighting.
TensorD random_graph(const std::vector<TensorD>& leaves, unsigned graph_seed) {
  std::mt19937_64 rng(graph_seed);
  std::vector<TensorD> pool = leaves;  // every entry is [3x4]
  auto pick = [&]() -> const TensorD& { return pool[rng() % pool.size()]; };
  const int steps = 4 + static_cast<int>(rng() % 4);
  for (int s = 0; s < steps; ++s) {
    const auto& a = pick();
    const auto& b = pick();
    TensorD out;
    switch (rng() % 22) {
      case 0: out = ad::add(a, b); break;
      case 1: out = ad::sub(a, b); break;
      case 2: out = ad::mul(a, b); break;
      case 3: out = ad::div(a, ad::add_scalar(ad::square(b), 1.0)); break;
      case 4: out = ad::scale(a, 0.7); break;
      case 5: out = ad::tanh(a); break;
      case 6: out = ad::gelu(a); break;
      case 7: out = ad::sigmoid(a); break;
      case 8: out = ad::log(ad::add_scalar(ad::softplus(a), 0.1)); break;
      case 9: out = ad::softmax(a); break;
      case 10: out = ad::layer_norm(a, ad::slice_rows(leaves[2], 0, 1), ad::slice_rows(leaves[0], 1, 2), 1e-5); break;
      case 11: out = ad::matmul(ad::matmul(a, ad::transpose(b)), a); break;  // [3x3][3x4]
      case 12: out = ad::concat({ad::slice_cols(a, 0, 2), ad::slice_cols(b, 2, 4)}, 1); break;
      case 13: out = ad::concat({ad::slice_rows(a, 0, 1), ad::slice_rows(b, 1, 3)}, 0); break;
      case 14: out = ad::add(a, ad::mean_rows(b)); break;
      case 15: out = ad::mul(a, ad::row_norms(b)); break;
      case 16: out = ad::add(a, ad::reshape(ad::dot(a, b), {1, 1})); break;
      case 17: out = ad::add(a, ad::reshape(ad::l2_norm(b), {1, 1})); break;
      case 18: out = ad::gather_rows(a, {2, 0, 2}); break;
      case 19: out = ad::mul(ad::exp(ad::scale(a, 0.5)), ad::sqrt(ad::add_scalar(ad::square(b), 0.5))); break;
      case 20: out = ad::mul(ad::cos(a), ad::sin(b)); break;
      default: out = ad::add(ad::log_softmax(a), ad::sum_axis(b, 1)); break;
    }
    if (out.shape() != Shape{3, 4}) {
      // gather_rows yields [3x4] too; anything else is folded back to [3x4].
      out = ad::add(a, ad::reshape(ad::sum(out), {1, 1}));
    }
    pool.push_back(out);
  }
  std::mt19937_64 wrng(graph_seed ^ 0x9e3779b97f4a7c15ULL);
  auto weights = tsam::testing::random_tensor({3, 4}, wrng);
  weights.set_requires_grad(false);
  TensorD total = ad::sum(ad::mul(pool.back(), weights));
  return ad::add(total, ad::scale(ad::sum(pool[pool.size() / 2]), 0.3));
}

}  // namespace

TEST_CASE("random graphs match finite differences") {
  double worst = 0;
  for (unsigned g = 0; g < 100; ++g) {
    std::mt19937_64 rng(1000 + g);
    std::vector<TensorD> leaves{tsam::testing::random_tensor({3, 4}, rng),
                                tsam::testing::random_tensor({3, 4}, rng),
                                tsam::testing::random_tensor({3, 4}, rng)};
    auto res = tsam::testing::grad_check([&] { return random_graph(leaves, g); }, leaves);
    INFO("graph " << g << " worst " << res.worst);
    CHECK(res.max_rel_error < 1e-4);
    worst = std::max(worst, res.max_rel_error);
  }
  MESSAGE("max relative error over 100 graphs: " << worst);
}

TEST_CASE("fused kernels match finite differences") {
  std::mt19937_64 rng(21);
  SUBCASE("segment_attention") {
    auto q = tsam::testing::random_tensor({7, 6}, rng);
    auto k = tsam::testing::random_tensor({7, 6}, rng);
    auto v = tsam::testing::random_tensor({7, 6}, rng);
    auto w = tsam::testing::random_tensor({7, 6}, rng);
    w.set_requires_grad(false);
    auto res = tsam::testing::grad_check(
        [&] { return ad::sum(ad::mul(ad::segment_attention(q, k, v, {0, 3, 4, 7}, 2), w)); }, {q, k, v});
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("segment_mean") {
    auto x = tsam::testing::random_tensor({6, 3}, rng);
    auto w = tsam::testing::random_tensor({3, 3}, rng);
    w.set_requires_grad(false);
    auto pooled = ad::segment_mean(x, {0, 1, 4, 6});
    CHECK(pooled.at(1, 0) == doctest::Approx((x.at(1, 0) + x.at(2, 0) + x.at(3, 0)) / 3));
    auto res = tsam::testing::grad_check([&] { return ad::sum(ad::mul(ad::segment_mean(x, {0, 1, 4, 6}), w)); },
                                         {x});
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("clamp") {
    TensorD x({4}, {-2, -0.3, 0.2, 5}, true);
    auto y = ad::clamp(x, -0.5, 0.5);
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{-0.5, -0.3, 0.2, 0.5});
    ad::backward(ad::sum(y));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 1, 1, 0});
    auto z = tsam::testing::random_tensor({3, 4}, rng, -0.9, 0.9);
    auto res = tsam::testing::grad_check([&] { return ad::sum(ad::square(ad::clamp(z, -0.95, 0.95))); }, {z});
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("tucker_contract") {
    auto h = tsam::testing::random_tensor({4, 3}, rng);
    auto r = tsam::testing::random_tensor({4, 3}, rng);
    auto core = tsam::testing::random_tensor({3, 3, 3}, rng);
    auto w = tsam::testing::random_tensor({4, 3}, rng);
    w.set_requires_grad(false);
    auto res = tsam::testing::grad_check(
        [&] { return ad::sum(ad::mul(ad::tucker_contract(h, r, core), w)); }, {h, r, core});
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("pairwise distances") {
    auto x = tsam::testing::random_tensor({3, 4}, rng);
    auto y = tsam::testing::random_tensor({5, 4}, rng);
    auto w = tsam::testing::random_tensor({3, 5}, rng);
    w.set_requires_grad(false);
    auto res = tsam::testing::grad_check(
        [&] { return ad::sum(ad::mul(ad::add(ad::pairwise_l2(x, y), ad::pairwise_complex_l1(x, y)), w)); },
        {x, y});
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TensorD> leaves{tsam::testing::random_tensor({3, 4}, rng),
                                tsam::testing::random_tensor({3, 4}, rng),
                                tsam::testing::random_tensor({3, 4}, rng)};
    const double a = 1.7, b = -0.6;
    auto grads_of = [&](auto make_loss) {
      for (auto& l : leaves) l.zero_grad();
      ad::backward(make_loss());
      std::vector<double> out;
      for (auto& l : leaves) out.insert(out.end(), l.grad().begin(), l.grad().end());
      return out;
    };
    auto l1 = [&] { return random_graph(leaves, 500 + trial); };
    auto l2 = [&] { return random_graph(leaves, 900 + trial); };
    const auto g1 = grads_of(l1);
    const auto g2 = grads_of(l2);
    const auto g12 = grads_of([&] { return ad::add(ad::scale(l1(), a), ad::scale(l2(), b)); });
    for (std::size_t i = 0; i < g12.size(); ++i) CHECK(std::abs(g12[i] - (a * g1[i] + b * g2[i])) <= 1e-6);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    TensorF p({3}, {1.0f, -2.0f, 0.5f}, true);
    p.zero_grad();
    std::vector<TensorF> params{p};
    ad::AdamState state;
    ad::adam_step(params, state);
    CHECK(state.step == 1);
    CHECK(std::vector<float>(p.data().begin(), p.data().end()) == std::vector<float>{1.0f, -2.0f, 0.5f});
  }
  SUBCASE("constant gradient descends") {
    TensorF p({2}, {0.0f, 0.0f}, true);
    std::vector<TensorF> params{p};
    ad::AdamState state;
    state.options.lr = 0.01;
    for (int i = 0; i < 50; ++i) {
      p.zero_grad();
      p.mutable_grad()[0] = 3.0f;
      p.mutable_grad()[1] = -0.25f;
      ad::adam_step(params, state);
    }
    CHECK(state.step == 50);
    CHECK(p[0] < 0.0f);
    CHECK(p[1] > 0.0f);
  }
  SUBCASE("first step moves by lr against the sign") {
    // m_hat = g and v_hat = g^2 after one step, so the update is
    // lr * g / (|g| + eps).
    const double lr = 0.05, g = 0.8, eps = 1e-8;
    const double expected = -lr * g / (std::abs(g) + eps);
    TensorF p({1}, {1.0f}, true);
    p.zero_grad();
    p.mutable_grad()[0] = static_cast<float>(g);
    std::vector<TensorF> params{p};
    ad::AdamState state;
    state.options.lr = lr;
    ad::adam_step(params, state);
    CHECK(p[0] - 1.0f == doctest::Approx(expected).epsilon(1e-5));
  }
  SUBCASE("lr = 0 is bit-identical") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(-3, 3);
    std::vector<float> init(64);
    for (auto& x : init) x = u(rng);
    TensorF p({8, 8}, init, true);
    std::vector<TensorF> params{p};
    ad::AdamState state;
    state.options.lr = 0.0;
    for (int i = 0; i < 10; ++i) {
      p.zero_grad();
      for (auto& g : p.mutable_grad()) g = u(rng);
      ad::adam_step(params, state);
    }
    CHECK(std::vector<float>(p.data().begin(), p.data().end()) == init);
  }
  SUBCASE("missing gradient is a contract error") {
    TensorF p({2}, {1.0f, 2.0f}, true);
    std::vector<TensorF> params{p};
    ad::AdamState state;
    CHECK_THROWS_AS(ad::adam_step(params, state), tsam::ContractError);
  }
}
