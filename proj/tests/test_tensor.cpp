// tests/test_tensor.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "semb/tensor.hpp"
#include "test_util.hpp"

using namespace semb;
using semb::testing::check_gradients;
using semb::testing::random_tensor;
using semb::testing::rel_err;

TEST_CASE("matmul identity and scalar product") {
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor out = matmul(eye, b);
  REQUIRE(out.shape() == Shape{3, 2});
  for (std::size_t i = 0; i < 6; ++i) CHECK(out[i] == b[i]);

  Tensor a1({1, 1}, {2.0}), b1({1, 1}, {3.0});
  CHECK(matmul(a1, b1)[0] == 6.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 0.0));
  Tensor b({2, 2}, std::vector<double>(4, 0.0));
  REQUIRE_THROWS_WITH(matmul(a, b),
                      Catch::Matchers::ContainsSubstring("(2x3)") &&
                          Catch::Matchers::ContainsSubstring("(2x2)"));
}

TEST_CASE("matmul gradient vs central finite differences") {
  std::mt19937_64 rng(42);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto res = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elementwise trivial values") {
  Tensor z = Tensor::scalar(0.0);
  CHECK(tanh_op(z).value() == 0.0);
  CHECK(sigmoid_op(z).value() == 0.5);
}

TEST_CASE("elementwise shape mismatch") {
  Tensor a({2}, {1, 2});
  Tensor b({3}, {1, 2, 3});
  REQUIRE_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("elementwise gradients vs finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({5}, rng, true, -2.0, 2.0);
    Tensor y = random_tensor({5}, rng, true, -2.0, 2.0);
    auto res = check_gradients(
        [&] {
          return sum(mul(add(tanh_op(x), sigmoid_op(y)),
                         sub(scale(x, 0.7), mul(x, y))));
        },
        {x, y});
    CHECK(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("mean_over_time") {
  SECTION("single row is identity") {
    Tensor x({1, 3}, {1, 2, 3});
    Tensor m = mean_over_time(x);
    CHECK(m[0] == 1.0);
    CHECK(m[2] == 3.0);
  }
  SECTION("two-point mean") {
    Tensor x({2, 2}, {1, 0, 0, 1});
    Tensor m = mean_over_time(x);
    CHECK(m[0] == 0.5);
    CHECK(m[1] == 0.5);
  }
  SECTION("matches independent summation oracle") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({5, 3}, rng);
    Tensor m = mean_over_time(x);
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += x[i * 3 + j];
      CHECK(std::abs(m[j] - s / 5.0) <= 1e-12);
    }
  }
  SECTION("empty sequence raises") {
    Tensor x({0, 3}, {});
    REQUIRE_THROWS_AS(mean_over_time(x), std::domain_error);
  }
}

TEST_CASE("concat") {
  Tensor a({2}, {1, 2});
  Tensor b({1}, {3});
  Tensor c = concat(a, b);
  REQUIRE(c.shape() == Shape{3});
  CHECK(c[0] == 1.0);
  CHECK(c[2] == 3.0);

  Tensor empty({0}, {});
  Tensor c2 = concat(a, empty);
  REQUIRE(c2.numel() == 2);

  Tensor m({2, 2}, {1, 2, 3, 4});
  REQUIRE_THROWS_AS(concat(a, m), std::invalid_argument);
}

TEST_CASE("concat backward splits grad into ones") {
  Tensor a({2}, {1, 2}, true);
  Tensor b({3}, {3, 4, 5}, true);
  backward(sum(concat(a, b)));
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);
}

TEST_CASE("l2_normalize") {
  SECTION("3-4-5 triangle") {
    Tensor x({2}, {3, 4});
    Tensor y = l2_normalize(x);
    CHECK(y[0] == Catch::Approx(0.6).epsilon(1e-12));
    CHECK(y[1] == Catch::Approx(0.8).epsilon(1e-12));
  }
  SECTION("unit vector is fixed point") {
    Tensor x({2}, {1, 0});
    Tensor y = l2_normalize(x);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
  }
  SECTION("near-zero norm raises") {
    Tensor x({2}, {0.0, 1e-13});
    REQUIRE_THROWS_AS(l2_normalize(x), std::domain_error);
  }
  SECTION("gradient vs finite differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({4}, rng, true, 0.5, 2.0);
      Tensor w = random_tensor({4}, rng, false);
      auto res =
          check_gradients([&] { return sum(mul(l2_normalize(x), w)); }, {x});
      CHECK(res.max_rel_err < 1e-6);
    }
  }
  SECTION("output norm is 1 within 1e-9") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = random_tensor({6}, rng, false, -3.0, 3.0);
      Tensor y = l2_normalize(x);
      double n = 0.0;
      for (std::size_t i = 0; i < 6; ++i) n += y[i] * y[i];
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("pairwise_sq_euclidean") {
  SECTION("self distance is zero") {
    Tensor a({1, 2}, {1.5, -2.0});
    Tensor d = pairwise_sq_euclidean(a, a);
    CHECK(d[0] == 0.0);
  }
  SECTION("3-4-5") {
    Tensor a({1, 2}, {0, 0});
    Tensor b({1, 2}, {3, 4});
    CHECK(pairwise_sq_euclidean(a, b)[0] == 25.0);
  }
  SECTION("matches scalar-loop oracle") {
    std::mt19937_64 rng(5);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    Tensor d = pairwise_sq_euclidean(a, b);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < 3; ++p) {
          const double diff = a[i * 3 + p] - b[j * 3 + p];
          s += diff * diff;
        }
        CHECK(std::abs(d[i * 5 + j] - s) <= 1e-10);
      }
  }
  SECTION("symmetric with zero diagonal when A=B") {
    std::mt19937_64 rng(6);
    Tensor a = random_tensor({6, 4}, rng);
    Tensor d = pairwise_sq_euclidean(a, a);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(d[i * 6 + i]) <= 1e-10);
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(std::abs(d[i * 6 + j] - d[j * 6 + i]) <= 1e-10);
    }
  }
  SECTION("dimension mismatch") {
    Tensor a({2, 3}, std::vector<double>(6, 0.0));
    Tensor b({2, 4}, std::vector<double>(8, 0.0));
    REQUIRE_THROWS_AS(pairwise_sq_euclidean(a, b), std::invalid_argument);
  }
  SECTION("gradient vs finite differences") {
    std::mt19937_64 rng(8);
    Tensor a = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto res = check_gradients(
        [&] { return sum(pairwise_sq_euclidean(a, b)); }, {a, b});
    CHECK(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("cosine_distance") {
  Tensor a({2}, {0.3, -0.7});
  CHECK(cosine_distance(a, a).value() == Catch::Approx(0.0).margin(1e-12));
  Tensor e1({2}, {1, 0}), e2({2}, {0, 1});
  CHECK(cosine_distance(e1, e2).value() == Catch::Approx(1.0));
  Tensor ne1({2}, {-1, 0});
  CHECK(cosine_distance(e1, ne1).value() == Catch::Approx(2.0));
  Tensor z({2}, {0, 0});
  REQUIRE_THROWS_AS(cosine_distance(e1, z), std::domain_error);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({4}, rng, true, 0.3, 2.0);
    Tensor y = random_tensor({4}, rng, true, 0.3, 2.0);
    auto res = check_gradients([&] { return cosine_distance(x, y); }, {x, y});
    CHECK(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("backward basics") {
  SECTION("sum gives ones") {
    Tensor x({3}, {1, 2, 3}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SECTION("squared norm gives 2x") {
    Tensor x({3}, {1, 2, 3}, true);
    backward(sum(mul(x, x)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * x[i]);
  }
  SECTION("non-scalar loss raises") {
    Tensor x({2}, {1, 2}, true);
    REQUIRE_THROWS_AS(backward(add(x, x)), std::invalid_argument);
  }
  SECTION("detached graph raises") {
    Tensor x({2}, {1, 2}, false);
    REQUIRE_THROWS_AS(backward(sum(x)), std::invalid_argument);
  }
  SECTION("second backward on same loss raises") {
    Tensor x({2}, {1, 2}, true);
    Tensor loss = sum(x);
    backward(loss);
    REQUIRE_THROWS_AS(backward(loss), std::runtime_error);
  }
  SECTION("shared subexpression accumulates once per use") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor y = mul(x, x);        // x^2
    backward(add(y, y));         // 2 x^2 -> d/dx = 4x = 12
    CHECK(x.grad()[0] == 12.0);
  }
}

TEST_CASE("linearity of mean_over_time, concat, matmul") {
  std::mt19937_64 rng(21);
  const double alpha = 0.37, beta = -1.21;
  Tensor x = random_tensor({4, 3}, rng, false);
  Tensor y = random_tensor({4, 3}, rng, false);
  std::vector<double> combo(12);
  for (std::size_t i = 0; i < 12; ++i) combo[i] = alpha * x[i] + beta * y[i];
  Tensor xy({4, 3}, combo);

  Tensor m1 = mean_over_time(xy);
  Tensor mx = mean_over_time(x), my = mean_over_time(y);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(std::abs(m1[j] - (alpha * mx[j] + beta * my[j])) <= 1e-12);

  Tensor w = random_tensor({3, 2}, rng, false);
  Tensor p1 = matmul(xy, w);
  Tensor px = matmul(x, w), py = matmul(y, w);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(std::abs(p1[i] - (alpha * px[i] + beta * py[i])) <= 1e-12);
}

TEST_CASE("non-finite values are rejected") {
  REQUIRE_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::infinity()}),
                    std::runtime_error);
  Tensor x({1}, {800.0}, true);
  // exp overflows to inf; the checked op construction must catch it
  REQUIRE_THROWS_AS(exp_op(x), std::runtime_error);
}

TEST_CASE("finite-difference checks across the differentiable op set") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor({2, 3}, rng, true, 0.2, 1.5);
    Tensor b = random_tensor({3, 2}, rng, true, 0.2, 1.5);
    Tensor v = random_tensor({4}, rng, true, 0.3, 1.5);
    auto forward = [&] {
      Tensor m = matmul(a, b);                      // 2x2
      Tensor pooled = mean_over_time(m);            // 2
      Tensor nv = l2_normalize(v);                  // 4
      Tensor cat = concat(pooled, slice(nv, 0, 2)); // 4
      Tensor act = add(tanh_op(cat), sigmoid_op(cat));
      return add(sum(act), add(cosine_distance(slice(nv, 0, 2), pooled),
                               sum(log_op(add_const(relu(cat), 1.0)))));
    };
    auto res = check_gradients(forward, {a, b, v});
    CHECK(res.max_rel_err < 1e-4);
  }
}
