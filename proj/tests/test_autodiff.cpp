#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "muplon/autodiff.hpp"
#include "muplon/error.hpp"
#include "muplon/grad_check.hpp"
#include "muplon/rng.hpp"
#include "support/grad_cases.hpp"

using namespace muplon;
using namespace muplon::ad;

namespace {

using namespace muplon::testing;

template <typename T>
void check_all_primitives(double eps, double tol) {
  const auto cases = primitive_cases<T>();
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& [name, make] = cases[k];
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(derive_seed(seed, {k}));
      auto c = make(rng, seed);
      worst = std::max(worst, grad_check<T>(c.fn, c.x, eps));
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst < tol);
  }
}

}  // namespace

TEST_CASE("matmul matches hand products and rejects bad shapes") {
  Tape<float> t;
  auto a = t.constant(Tensor<float>::matrix(2, 2, {1, 2, 3, 4}));
  auto ones = t.constant(Tensor<float>::matrix(2, 1, {1, 1}));
  auto r = matmul(a, ones);
  CHECK(r.value() == Tensor<float>::matrix(2, 1, {3, 7}));

  auto eye = t.constant(Tensor<float>::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(matmul(eye, a).value() == a.value());

  auto x = t.constant(Tensor<float>({2, 3}, 1.0f));
  try {
    matmul(x, x);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax closed forms") {
  Tape<double> t;
  auto u = softmax(t.constant(Tensor<double>::row({0, 0, 0})), 1);
  for (double v : u.value().storage()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto big = softmax(t.constant(Tensor<double>::row({1000, 1000})), 1);
  CHECK(big.value()[0] == doctest::Approx(0.5));
  CHECK(big.value()[1] == doctest::Approx(0.5));

  auto l3 = softmax(t.constant(Tensor<double>::row({0, std::log(3.0)})), 1);
  CHECK(l3.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(l3.value()[1] == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(t.constant(Tensor<double>({2, 0})), 1), ShapeError);
}

TEST_CASE("softmax rows sum to one and ignore constant shifts") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t r = 1 + rng.index(5), c = 1 + rng.index(8);
    auto x = random_tensor<float>(rng, r, c, -10, 10);
    const float shift = static_cast<float>(rng.uniform(-50, 50));
    auto shifted = x;
    for (auto& v : shifted.storage()) v += shift;
    Tape<float> t;
    auto a = softmax(t.constant(x), 1);
    auto b = softmax(t.constant(shifted), 1);
    for (std::size_t i = 0; i < r; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        total += a.value().at(i, j);
        CHECK(a.value().at(i, j) >= 0.0f);
        CHECK(std::abs(a.value().at(i, j) - b.value().at(i, j)) < 1e-5);
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward hand examples") {
  SUBCASE("sum gives all-ones gradient") {
    Tape<double> t;
    auto x = t.variable(Tensor<double>({3, 2}, 0.3));
    t.backward(sum(x));
    const auto g = x.grad();
    for (double v : g.storage()) CHECK(v == 1.0);
  }
  SUBCASE("chain rule through a square") {
    Tape<double> t;
    auto w = t.variable(Tensor<double>::scalar(2));
    auto x = t.constant(Tensor<double>::scalar(3));
    auto wx = mul(w, x);
    t.backward(mul(wx, wx));
    CHECK(w.grad()[0] == doctest::Approx(36.0));
  }
  SUBCASE("detached values receive no gradient") {
    Tape<double> t;
    auto x = t.variable(Tensor<double>::scalar(2));
    auto d = detach(x);
    t.backward(sum(mul(d, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK_FALSE(d.requires_grad());
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape<double> t;
    auto x = t.variable(Tensor<double>({2, 2}, 1.0));
    CHECK_THROWS_AS(t.backward(x), ShapeError);
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    Rng rng(42);
    Tape<float> t;
    auto x = t.variable(random_tensor<float>(rng, 3, 4));
    auto w = t.variable(random_tensor<float>(rng, 4, 2));
    auto loss = cross_entropy(ad::tanh(matmul(x, w)), {0, 1, 1});
    t.backward(loss);
    return std::make_tuple(loss.value(), x.grad(), w.grad());
  };
  CHECK(run() == run());
}

TEST_CASE("zeroed gradients reproduce identical backward passes") {
  Rng rng(9);
  Tape<float> t;
  auto x = t.variable(random_tensor<float>(rng, 2, 3));
  auto loss = l2_norm(ad::sigmoid(x));
  t.backward(loss);
  const auto first = x.grad();
  t.zero_grad();
  t.backward(loss);
  CHECK(x.grad() == first);
}

TEST_CASE("grad_check reference functions") {
  Rng rng(1);
  auto x = random_tensor<double>(rng, 3, 4);
  ScalarFn<double> quad = [](Tape<double>&, const Var<double>& v) { return scale(sum(mul(v, v)), 0.5); };
  CHECK(grad_check<double>(quad, x, 1e-5) < 1e-6);

  ScalarFn<double> constant = [](Tape<double>& t, const Var<double>&) {
    return t.constant(Tensor<double>::scalar(4.0));
  };
  CHECK(grad_check<double>(constant, x, 1e-5) == 0.0);

  ScalarFn<double> nan_fn = [](Tape<double>&, const Var<double>& v) { return sum(ad::log(scale(v, 0.0))); };
  CHECK(std::isinf(grad_check<double>(nan_fn, x, 1e-5)));
}

TEST_CASE("two-layer MLP loss passes the finite-difference oracle in f32") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto input = random_tensor<float>(rng, 4, 5);
    auto w2 = random_tensor<float>(rng, 6, 3);
    ScalarFn<float> f = [&](Tape<float>& t, const Var<float>& w1) {
      auto h = ad::tanh(matmul(t.constant(input), w1));
      return cross_entropy(matmul(h, t.constant(w2)), {0, 2, 1, 0});
    };
    CHECK(grad_check<float>(f, random_tensor<float>(rng, 5, 6), 5e-3) < 1e-3);
  }
}

TEST_CASE("every primitive passes grad_check over 100 random cases in f32") {
  check_all_primitives<float>(5e-3, 1e-3);
}

TEST_CASE("every primitive passes grad_check over 100 random cases in f64") {
  check_all_primitives<double>(1e-6, 1e-5);
}
