// tests/test_util.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Shared helpers for the test suites: finite-difference gradient checking
// and random tensor construction. These are test-side oracles, independent
// of the library's backward implementations.

#ifndef SEMB_TESTS_TEST_UTIL_HPP
#define SEMB_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "semb/tensor.hpp"

namespace semb::testing {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng,
                                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng,
                            bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  auto v = random_values(shape_numel(shape), rng, lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

/// Central finite-difference check of d(forward)/d(leaf) for every element
/// of every leaf. `forward` must rebuild the graph from the leaves' current
/// data on each call.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

inline GradCheckResult check_gradients(
    const std::function<Tensor()>& forward, std::vector<Tensor> leaves,
    double step = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  Tensor loss = forward();
  backward(loss);
  std::vector<std::vector<double>> grads;
  for (const auto& l : leaves) grads.push_back(l.grad());

  GradCheckResult res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double fp = forward().value();
      data[i] = orig - step;
      const double fm = forward().value();
      data[i] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(grads[li][i], fd));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace semb::testing

#endif  // SEMB_TESTS_TEST_UTIL_HPP
