#include <doctest.h>

#include <cmath>

#include "sfa/grad_check.hpp"
#include "sfa/ops.hpp"
#include "test_helpers.hpp"

using namespace sfa;
using test::PrecisionGuard;

TEST_CASE("grad_check on f(x)=x^2 at x=3") {
  PrecisionGuard mode(Precision::f64);
  Tensor x = Tensor::scalar(3.0, true);
  auto f = [&] { return mul(x, x); };
  auto report = grad_check(f, {{"x", x}}, 1e-5);
  REQUIRE(report.entries.size() == 1);
  // analytic 6 against central difference 6
  CHECK(report.entries[0].max_rel_err < 1e-10);
  CHECK(report.pass(1e-5));
}

TEST_CASE("grad_check requires the 64-bit mode") {
  PrecisionGuard mode(Precision::f32);
  Tensor x = Tensor::scalar(1.0, true);
  auto f = [&] { return mul(x, x); };
  CHECK_THROWS_AS(grad_check(f, {{"x", x}}, 1e-5), std::logic_error);
}

TEST_CASE("grad_check flags a gradient corrupted by 1%") {
  PrecisionGuard mode(Precision::f64);
  Tensor x = Tensor::scalar(2.0, true);
  auto f = [&] {
    // y = 3x with a backward deliberately off by 1%
    Tensor y = make_op_output({1}, {3.0 * x.item()}, x.requires_grad());
    auto xn = x.node(), yn = y.node();
    record(y, [xn, yn] {
      std::vector<double> dx = {yn->grad[0] * 3.0 * 1.01};
      accumulate_grad(xn, dx);
    });
    return y;
  };
  auto report = grad_check(f, {{"x", x}}, 1e-5);
  CHECK_FALSE(report.pass(1e-4));
}

TEST_CASE("grad_check reports non-finite losses naming the parameter") {
  PrecisionGuard mode(Precision::f64);
  Tensor x = Tensor::scalar(0.5, true);
  auto f = [&] {
    // log(1 - x) explodes once the perturbed x crosses 1
    Tensor y = make_op_output({1}, {std::log(1.0 - x.item())}, x.requires_grad());
    auto xn = x.node(), yn = y.node();
    record(y, [xn, yn] {
      std::vector<double> dx = {yn->grad[0] * (-1.0 / (1.0 - xn->value[0]))};
      accumulate_grad(xn, dx);
    });
    return y;
  };
  Tensor bad = Tensor::scalar(1.0, true);
  auto g = [&] {
    Tensor y = make_op_output({1}, {std::log(1.0 - bad.item())}, bad.requires_grad());
    record(y, [] {});
    return y;
  };
  CHECK_THROWS_WITH_AS(grad_check(g, {{"bad", bad}}, 1e-5), doctest::Contains("non-finite"),
                       std::runtime_error);
  CHECK(grad_check(f, {{"x", x}}, 1e-6).pass(1e-5));
}

TEST_CASE("coordinate sampling checks the requested number of coordinates") {
  PrecisionGuard mode(Precision::f64);
  Tensor x = test::random_tensor({10, 10}, 51, true);
  auto f = [&] { return sum_all(gelu(x)); };
  auto report = grad_check(f, {{"x", x}}, 1e-5, 7, 99);
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].coords_checked == 7);
  CHECK(report.worst < 1e-6);
}
