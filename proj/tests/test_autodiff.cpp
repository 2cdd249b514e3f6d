#include "doctest.h"

#include <cmath>
#include <functional>

#include "mfa/grad_check.hpp"
#include "mfa/ops.hpp"
#include "test_util.hpp"

using namespace mfa;
using mfa::testing::bitwise_equal;
using mfa::testing::random_away_from_zero;
using mfa::testing::random_tensor;

namespace {

Tensor<double> T1(Shape s, std::vector<double> v) { return Tensor<double>(s, std::move(v)); }

// Runs `f` on constants and returns the output value.
Tensor<double> eval(const std::function<Var<double>(Graph<double>&)>& f) {
  Graph<double> g;
  return f(g).value();
}

// sum(op(params) * R) for a fixed random projection R, so every output element
// contributes with a distinct weight.
double check_op(ParamStore<double>& store,
                const std::function<Var<double>(Graph<double>&, ParamStore<double>&)>& op,
                std::uint64_t seed = 99) {
  LossBuilder builder = [&](Graph<double>& g, ParamStore<double>& p) {
    Var<double> out = op(g, p);
    Var<double> proj = g.constant(random_tensor(out.shape(), seed));
    return sum(mul(out, proj));
  };
  GradCheckOptions opt;
  opt.max_coords_per_param = 64;
  auto r = grad_check(builder, store, opt);
  CHECK(r.checked > 0);
  return r.max_relative_error;
}

}  // namespace

TEST_CASE("conv2d: identity kernel reproduces the input") {
  auto x = random_tensor(Shape{2, 3, 5, 4}, 1);
  Tensor<double> w(Shape{3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0;
  auto y = eval([&](Graph<double>& g) {
    return conv2d(g.constant(x), g.constant(w), g.constant(Tensor<double>(Shape{3, 1, 1, 1})), 1, 1);
  });
  CHECK(y == x);
}

TEST_CASE("conv2d: 2x2 ones kernel sums four ones") {
  auto y = eval([&](Graph<double>& g) {
    return conv2d(g.constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)), g.constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)),
                  g.constant(Tensor<double>(Shape{1, 1, 1, 1})), 1, 0);
  });
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 4.0);
}

TEST_CASE("conv2d: 1x1 kernel keeps spatial dims") {
  auto y = eval([&](Graph<double>& g) {
    return conv2d(g.constant(random_tensor(Shape{1, 2, 4, 4}, 3)), g.constant(random_tensor(Shape{5, 2, 1, 1}, 4)),
                  g.constant(Tensor<double>(Shape{5, 1, 1, 1})), 1, 0);
  });
  CHECK(y.shape() == Shape{1, 5, 4, 4});
}

TEST_CASE("conv2d: output extent follows the floor formula across (k, s, p)") {
  for (std::size_t k = 1; k <= 4; ++k)
    for (std::size_t s = 1; s <= 3; ++s)
      for (std::size_t p = 0; p <= 2; ++p)
        for (std::size_t h = 1; h <= 7; ++h) {
          if (h + 2 * p < k) continue;
          Graph<double> g;
          auto y = conv2d(g.constant(random_tensor(Shape{1, 2, h, h + 1}, h)),
                          g.constant(random_tensor(Shape{3, 2, k, k}, k)), g.constant(Tensor<double>(Shape{3, 1, 1, 1})),
                          s, p);
          CHECK(y.shape().h == (h + 2 * p - k) / s + 1);
          CHECK(y.shape().w == (h + 1 + 2 * p - k) / s + 1);
        }
}

TEST_CASE("conv2d: matches the direct summation definition") {
  auto x = random_tensor(Shape{2, 3, 6, 5}, 10);
  auto w = random_tensor(Shape{4, 3, 3, 2}, 11);
  auto b = random_tensor(Shape{4, 1, 1, 1}, 12);
  const std::size_t s = 2, p = 1;
  auto y = eval([&](Graph<double>& g) { return conv2d(g.constant(x), g.constant(w), g.constant(b), s, p); });
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t yy = 0; yy < y.shape().h; ++yy)
        for (std::size_t xx = 0; xx < y.shape().w; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 2; ++j) {
                const long sy = static_cast<long>(yy * s + i) - static_cast<long>(p);
                const long sx = static_cast<long>(xx * s + j) - static_cast<long>(p);
                if (sy < 0 || sy >= 6 || sx < 0 || sx >= 5) continue;
                acc += x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) * w.at(o, c, i, j);
              }
          CHECK(y.at(n, o, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d: linear in the input up to the bias term") {
  auto a = random_tensor(Shape{1, 2, 5, 5}, 20);
  auto b = random_tensor(Shape{1, 2, 5, 5}, 21);
  auto w = random_tensor(Shape{3, 2, 3, 3}, 22);
  auto bias = random_tensor(Shape{3, 1, 1, 1}, 23);
  Tensor<double> ab = a;
  for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += b[i];
  auto run = [&](const Tensor<double>& x) {
    return eval([&](Graph<double>& g) { return conv2d(g.constant(x), g.constant(w), g.constant(bias), 1, 1); });
  };
  auto yab = run(ab), ya = run(a), yb = run(b);
  for (std::size_t i = 0; i < yab.size(); ++i) {
    const double bias_term = bias[i / 25 % 3];
    CHECK(std::abs(yab[i] - (ya[i] + yb[i] - bias_term)) < 1e-12);
  }
}

TEST_CASE("conv2d: shape errors name both shapes") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>(Shape{1, 2, 4, 4}));
  auto bias = g.constant(Tensor<double>(Shape{1, 1, 1, 1}));
  try {
    conv2d(x, g.constant(Tensor<double>(Shape{1, 3, 3, 3})), bias, 1, 1);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,3,3,3]") != std::string::npos);
    CHECK(msg.find("[1,2,4,4]") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(x, g.constant(Tensor<double>(Shape{1, 2, 7, 7})), bias, 1, 1), ValidationError);
  CHECK_THROWS_AS(conv2d(x, g.constant(Tensor<double>(Shape{1, 2, 3, 3})), bias, 0, 1), ValidationError);
}

TEST_CASE("linear examples") {
  auto x = T1(Shape{1, 2, 1, 1}, {2, 4});
  auto ident = T1(Shape{2, 2, 1, 1}, {1, 0, 0, 1});
  auto y = eval([&](Graph<double>& g) {
    return linear(g.constant(x), g.constant(ident), g.constant(Tensor<double>(Shape{2, 1, 1, 1})));
  });
  CHECK(y == x);
  y = eval([&](Graph<double>& g) {
    return linear(g.constant(x), g.constant(T1(Shape{2, 1, 1, 1}, {1, 1})), g.constant(Tensor<double>(Shape{1, 1, 1, 1})));
  });
  CHECK(y[0] == 6.0);
  y = eval([&](Graph<double>& g) {
    return linear(g.constant(x), g.constant(Tensor<double>(Shape{2, 1, 1, 1})),
                  g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 3.0)));
  });
  CHECK(y[0] == 3.0);
  Graph<double> g;
  CHECK_THROWS_AS(linear(g.constant(Tensor<double>(Shape{1, 2, 2, 1})), g.constant(ident),
                         g.constant(Tensor<double>(Shape{2, 1, 1, 1}))),
                  ValidationError);
}

TEST_CASE("global_avg_pool examples") {
  auto y = eval([](Graph<double>& g) { return global_avg_pool(g.constant(Tensor<double>(Shape{1, 1, 3, 3}, 7.0))); });
  CHECK(y[0] == 7.0);
  y = eval([](Graph<double>& g) { return global_avg_pool(g.constant(T1(Shape{1, 1, 2, 2}, {1, 2, 3, 4}))); });
  CHECK(y[0] == 2.5);
  auto single = random_tensor(Shape{2, 3, 1, 1}, 4);
  CHECK(eval([&](Graph<double>& g) { return global_avg_pool(g.constant(single)); }) == single);
}

TEST_CASE("relu examples") {
  auto pos = random_tensor(Shape{1, 2, 3, 3}, 5, 0.0, 1.0);
  CHECK(eval([&](Graph<double>& g) { return relu(g.constant(pos)); }) == pos);
  auto y = eval([](Graph<double>& g) { return relu(g.constant(T1(Shape{1, 1, 1, 3}, {-1, 0, 2}))); });
  CHECK(y == T1(Shape{1, 1, 1, 3}, {0, 0, 2}));
  auto x = random_tensor(Shape{2, 2, 3, 3}, 6);
  auto once = eval([&](Graph<double>& g) { return relu(g.constant(x)); });
  CHECK(eval([&](Graph<double>& g) { return relu(g.constant(once)); }) == once);
}

TEST_CASE("sigmoid examples") {
  CHECK(eval([](Graph<double>& g) { return sigmoid(g.constant(Tensor<double>(Shape{1, 1, 1, 1}))); })[0] == 0.5);
  auto x = random_tensor(Shape{1, 1, 4, 4}, 7, -10, 10);
  Tensor<double> negx = x;
  for (auto& v : negx.values()) v = -v;
  auto a = eval([&](Graph<double>& g) { return sigmoid(g.constant(x)); });
  auto b = eval([&](Graph<double>& g) { return sigmoid(g.constant(negx)); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] + b[i] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a[i] > 0.0);
    CHECK(a[i] < 1.0);
  }
  // 1/(1+e^-0.6), scalar_oracles.py
  CHECK(eval([](Graph<double>& g) { return sigmoid(g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 0.6))); })[0] ==
        doctest::Approx(0.6456563062257954).epsilon(1e-15));
}

TEST_CASE("broadcast_mul examples") {
  auto x = random_tensor(Shape{2, 3, 2, 2}, 8);
  CHECK(eval([&](Graph<double>& g) { return broadcast_mul(g.constant(x), g.constant(Tensor<double>(Shape{2, 3, 1, 1}, 1.0))); }) == x);
  auto zero = eval([&](Graph<double>& g) { return broadcast_mul(g.constant(x), g.constant(Tensor<double>(Shape{2, 1, 2, 2}))); });
  for (double v : zero.values()) CHECK(v == 0.0);
  auto y = eval([](Graph<double>& g) {
    return broadcast_mul(g.constant(T1(Shape{1, 2, 1, 1}, {3, 5})), g.constant(T1(Shape{1, 2, 1, 1}, {0.5, 2})));
  });
  CHECK(y == T1(Shape{1, 2, 1, 1}, {1.5, 10}));
  Graph<double> g;
  CHECK_THROWS_AS(broadcast_mul(g.constant(x), g.constant(Tensor<double>(Shape{2, 3, 2, 1}))), ValidationError);
  CHECK_THROWS_AS(broadcast_mul(g.constant(x), g.constant(Tensor<double>(Shape{1, 3, 1, 1}))), ValidationError);
}

TEST_CASE("add examples") {
  auto a = random_tensor(Shape{1, 2, 3, 3}, 9);
  auto b = random_tensor(Shape{1, 2, 3, 3}, 10);
  CHECK(eval([&](Graph<double>& g) { return add(g.constant(a), g.constant(Tensor<double>(a.shape()))); }) == a);
  CHECK(eval([&](Graph<double>& g) { return add(g.constant(a), g.constant(b)); }) ==
        eval([&](Graph<double>& g) { return add(g.constant(b), g.constant(a)); }));
  CHECK(eval([](Graph<double>& g) { return add(g.constant(T1(Shape{1, 1, 1, 2}, {1, 2})), g.constant(T1(Shape{1, 1, 1, 2}, {3, 4}))); }) ==
        T1(Shape{1, 1, 1, 2}, {4, 6}));
  Graph<double> g;
  CHECK_THROWS_AS(add(g.constant(a), g.constant(Tensor<double>(Shape{1, 2, 3, 2}))), ValidationError);
}

TEST_CASE("max_pool_2x2 examples") {
  auto c = eval([](Graph<double>& g) { return max_pool_2x2(g.constant(Tensor<double>(Shape{1, 2, 4, 4}, 3.0))); });
  CHECK(c.shape() == Shape{1, 2, 2, 2});
  for (double v : c.values()) CHECK(v == 3.0);
  CHECK(eval([](Graph<double>& g) { return max_pool_2x2(g.constant(T1(Shape{1, 1, 2, 2}, {1, 2, 3, 4}))); })[0] == 4.0);
  Graph<double> g;
  CHECK_THROWS_AS(max_pool_2x2(g.constant(Tensor<double>(Shape{1, 1, 3, 2}))), ValidationError);
}

TEST_CASE("max_pool_2x2 routes ties to the first maximum in row-major order") {
  ParamStore<double> store;
  store.add("x", T1(Shape{1, 1, 2, 2}, {1, 5, 5, 5}));
  Graph<double> g;
  g.backward(max_pool_2x2(g.parameter(store, "x")));
  CHECK(store.grad("x") == T1(Shape{1, 1, 2, 2}, {0, 1, 0, 0}));
}

TEST_CASE("upsample_nearest_2x examples") {
  auto y = eval([](Graph<double>& g) { return upsample_nearest_2x(g.constant(T1(Shape{1, 1, 1, 1}, {1}))); });
  CHECK(y == T1(Shape{1, 1, 2, 2}, {1, 1, 1, 1}));
  auto x = random_tensor(Shape{2, 3, 3, 4}, 11, 0.1, 1.0);
  auto round = eval([&](Graph<double>& g) { return max_pool_2x2(upsample_nearest_2x(g.constant(x))); });
  CHECK(round == x);
  CHECK(eval([&](Graph<double>& g) { return upsample_nearest_2x(g.constant(x)); }).shape() == Shape{2, 3, 6, 8});
}

TEST_CASE("concat_channels examples") {
  auto a = random_tensor(Shape{2, 2, 3, 3}, 12);
  auto b = random_tensor(Shape{2, 3, 3, 3}, 13);
  auto y = eval([&](Graph<double>& g) { return concat_channels(g.constant(a), g.constant(b)); });
  CHECK(y.shape().c == 5);
  CHECK(slice_channels(y, 0, 2) == a);
  CHECK(slice_channels(y, 2, 5) == b);
  auto empty = Tensor<double>(Shape{2, 0, 3, 3});
  CHECK(eval([&](Graph<double>& g) { return concat_channels(g.constant(a), g.constant(empty)); }) == a);
  Graph<double> g;
  CHECK_THROWS_AS(concat_channels(g.constant(a), g.constant(Tensor<double>(Shape{2, 1, 3, 2}))), ValidationError);
  CHECK_THROWS_AS(concat_channels(g.constant(a), g.constant(Tensor<double>(Shape{1, 1, 3, 3}))), ValidationError);
}

TEST_CASE("backward examples") {
  SUBCASE("linear function gives grad(w) = x") {
    ParamStore<double> store;
    store.add("w", random_tensor(Shape{1, 2, 2, 2}, 14));
    auto x = random_tensor(Shape{1, 2, 2, 2}, 15);
    Graph<double> g;
    g.backward(sum(mul(g.parameter(store, "w"), g.constant(x))));
    CHECK(store.grad("w") == x);
  }
  SUBCASE("sigmoid'(0) = 0.25") {
    ParamStore<double> store;
    store.add("z", Tensor<double>(Shape{1, 1, 1, 1}));
    Graph<double> g;
    g.backward(mul(sigmoid(g.parameter(store, "z")), g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 3.0))));
    CHECK(store.grad("z")[0] == 0.75);
  }
  SUBCASE("unused parameter keeps a zero gradient") {
    ParamStore<double> store;
    store.add("used", Tensor<double>(Shape{1, 1, 1, 1}, 2.0));
    store.add("unused", Tensor<double>(Shape{1, 1, 2, 2}, 2.0));
    Graph<double> g;
    g.parameter(store, "unused");
    g.backward(sum(g.parameter(store, "used")));
    for (double v : store.grad("unused").values()) CHECK(v == 0.0);
  }
  SUBCASE("shared uses accumulate") {
    ParamStore<double> store;
    store.add("w", Tensor<double>(Shape{1, 1, 1, 1}, 3.0));
    Graph<double> g;
    auto w = g.parameter(store, "w");
    g.backward(mul(w, w));
    CHECK(store.grad("w")[0] == 6.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Graph<double> g;
    auto x = g.constant(Tensor<double>(Shape{1, 1, 1, 2}));
    CHECK_THROWS_AS(g.backward(x), ValidationError);
  }
}

TEST_CASE("grad_check: quadratic loss") {
  ParamStore<double> store;
  store.add("theta", random_tensor(Shape{1, 2, 3, 3}, 16));
  LossBuilder builder = [](Graph<double>& g, ParamStore<double>& p) {
    auto t = g.parameter(p, "theta");
    return sum(mul(t, t));
  };
  GradCheckOptions opt;
  opt.eps = 1e-4;  // central differences are exact on quadratics; a wider step only cuts rounding
  auto r = grad_check(builder, store, opt);
  CHECK(r.checked == 16);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("gradient fidelity of every primitive (64-bit)") {
  ParamStore<double> store;
  SUBCASE("conv2d 3x3 pad 1") {
    store.add("x", random_tensor(Shape{2, 2, 4, 4}, 1));
    store.add("w", random_tensor(Shape{3, 2, 3, 3}, 2));
    store.add("b", random_tensor(Shape{3, 1, 1, 1}, 3));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return conv2d(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"), 1, 1);
          }) < 1e-5);
  }
  SUBCASE("conv2d strided rectangular") {
    store.add("x", random_tensor(Shape{1, 2, 5, 4}, 4));
    store.add("w", random_tensor(Shape{2, 2, 2, 3}, 5));
    store.add("b", random_tensor(Shape{2, 1, 1, 1}, 6));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return conv2d(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"), 2, 1);
          }) < 1e-5);
  }
  SUBCASE("conv2d 1x1") {
    store.add("x", random_tensor(Shape{2, 4, 3, 3}, 7));
    store.add("w", random_tensor(Shape{1, 4, 1, 1}, 8));
    store.add("b", random_tensor(Shape{1, 1, 1, 1}, 9));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return conv2d(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"), 1, 0);
          }) < 1e-5);
  }
  SUBCASE("linear") {
    store.add("x", random_tensor(Shape{3, 4, 1, 1}, 10));
    store.add("w", random_tensor(Shape{4, 2, 1, 1}, 11));
    store.add("b", random_tensor(Shape{2, 1, 1, 1}, 12));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return linear(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"));
          }) < 1e-5);
  }
  SUBCASE("global_avg_pool") {
    store.add("x", random_tensor(Shape{2, 3, 3, 4}, 13));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) { return global_avg_pool(g.parameter(p, "x")); }) <
          1e-5);
  }
  SUBCASE("relu") {
    store.add("x", random_away_from_zero(Shape{2, 2, 3, 3}, 14));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) { return relu(g.parameter(p, "x")); }) < 1e-5);
  }
  SUBCASE("sigmoid") {
    store.add("x", random_tensor(Shape{2, 2, 3, 3}, 15, -4, 4));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) { return sigmoid(g.parameter(p, "x")); }) < 1e-5);
  }
  SUBCASE("broadcast_mul channel gate") {
    store.add("x", random_tensor(Shape{2, 3, 3, 2}, 16));
    store.add("gate", random_tensor(Shape{2, 3, 1, 1}, 17));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return broadcast_mul(g.parameter(p, "x"), g.parameter(p, "gate"));
          }) < 1e-5);
  }
  SUBCASE("broadcast_mul spatial gate") {
    store.add("x", random_tensor(Shape{2, 3, 3, 2}, 18));
    store.add("gate", random_tensor(Shape{2, 1, 3, 2}, 19));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return broadcast_mul(g.parameter(p, "x"), g.parameter(p, "gate"));
          }) < 1e-5);
  }
  SUBCASE("add / mul") {
    store.add("a", random_tensor(Shape{1, 2, 3, 3}, 20));
    store.add("b", random_tensor(Shape{1, 2, 3, 3}, 21));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return add(mul(g.parameter(p, "a"), g.parameter(p, "b")), g.parameter(p, "a"));
          }) < 1e-5);
  }
  SUBCASE("max_pool_2x2") {
    store.add("x", random_tensor(Shape{2, 2, 4, 4}, 22));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) { return max_pool_2x2(g.parameter(p, "x")); }) <
          1e-5);
  }
  SUBCASE("upsample_nearest_2x") {
    store.add("x", random_tensor(Shape{2, 2, 2, 3}, 23));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return upsample_nearest_2x(g.parameter(p, "x"));
          }) < 1e-5);
  }
  SUBCASE("concat_channels") {
    store.add("a", random_tensor(Shape{2, 2, 3, 3}, 24));
    store.add("b", random_tensor(Shape{2, 1, 3, 3}, 25));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return concat_channels(g.parameter(p, "a"), g.parameter(p, "b"));
          }) < 1e-5);
  }
  SUBCASE("conv2d + relu chain") {
    store.add("x", random_tensor(Shape{1, 2, 4, 4}, 26));
    store.add("w", random_tensor(Shape{3, 2, 3, 3}, 27));
    store.add("b", random_tensor(Shape{3, 1, 1, 1}, 28));
    CHECK(check_op(store, [](Graph<double>& g, ParamStore<double>& p) {
            return relu(conv2d(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"), 1, 1));
          }) < 1e-5);
  }
}

TEST_CASE("grad_check skips probes that cross a ReLU kink") {
  ParamStore<double> store;
  store.add("x", T1(Shape{1, 1, 1, 2}, {1e-7, 0.5}));
  LossBuilder builder = [](Graph<double>& g, ParamStore<double>& p) { return sum(relu(g.parameter(p, "x"))); };
  auto r = grad_check(builder, store);
  CHECK(r.skipped_at_kinks == 1);
  CHECK(r.checked == 1);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("ops are deterministic bitwise") {
  auto x = random_tensor<float>(Shape{2, 3, 8, 8}, 30);
  auto w = random_tensor<float>(Shape{4, 3, 3, 3}, 31);
  auto b = random_tensor<float>(Shape{4, 1, 1, 1}, 32);
  auto run = [&] {
    Graph<float> g;
    return max_pool_2x2(relu(conv2d(g.constant(x), g.constant(w), g.constant(b), 1, 1))).value();
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("finite inputs give finite outputs") {
  auto x = random_tensor(Shape{1, 2, 4, 4}, 33, -50, 50);
  auto y = eval([&](Graph<double>& g) {
    auto s = sigmoid(g.constant(x));
    return global_avg_pool(upsample_nearest_2x(s));
  });
  for (double v : y.values()) CHECK(std::isfinite(v));
}
