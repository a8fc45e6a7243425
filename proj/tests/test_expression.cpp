#include <gtest/gtest.h>

#include <kbesc/expression.hpp>

#include <cmath>
#include <numbers>

using namespace kbesc;

namespace {

double eval(const std::string& text, std::vector<double> slots = {}, std::vector<std::string> vars = {}) {
  return Expression::compile(text, vars)(slots);
}

}  // namespace

TEST(Expression, ArithmeticAndPrecedence) {
  EXPECT_DOUBLE_EQ(eval("1 + 2 * 3"), 7.0);
  EXPECT_DOUBLE_EQ(eval("(1 + 2) * 3"), 9.0);
  EXPECT_DOUBLE_EQ(eval("8 / 4 / 2"), 1.0);
  EXPECT_DOUBLE_EQ(eval("2 ^ 3 ^ 2"), 512.0);
  EXPECT_DOUBLE_EQ(eval("-2 ^ 2"), -4.0);
  EXPECT_DOUBLE_EQ(eval("2 ^ -1"), 0.5);
  EXPECT_DOUBLE_EQ(eval("1e-2 * 3"), 0.03);
  EXPECT_DOUBLE_EQ(eval("- - 3"), 3.0);
}

TEST(Expression, FunctionsAndConstants) {
  EXPECT_DOUBLE_EQ(eval("pi"), std::numbers::pi);
  EXPECT_DOUBLE_EQ(eval("exp(0) + log(1) + sqrt(4) + abs(-1)"), 4.0);
  EXPECT_DOUBLE_EQ(eval("pow(2, 0.5)"), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(eval("min(1, 2) + max(1, 2)"), 3.0);
  EXPECT_NEAR(eval("sin(pi / 2) + cos(0) + tan(0) + tanh(0)"), 2.0, 1e-15);
}

TEST(Expression, VariablesBindToSlots) {
  const auto vars = plant_variables(2, 2);
  ASSERT_EQ(vars, (std::vector<std::string>{"theta_1", "theta_2", "x_1", "x_2"}));
  const auto e = Expression::compile("-4 * x_1^3 + 0.5 * (theta_1 - 3)^6", vars);
  Vector th(2), x(2);
  th << 4.0, 0.0;
  x << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(e(plant_slots(th, x)), -3.5);
}

TEST(Expression, MatchesTheBenchmarkOutput) {
  const auto e = Expression::compile("-exp(-0.1 * x_2^3)", plant_variables(2, 2));
  Vector th = Vector::Zero(2), x(2);
  x << 0.3, 1.7;
  EXPECT_DOUBLE_EQ(e(plant_slots(th, x)), -std::exp(-0.1 * 1.7 * 1.7 * 1.7));
}

TEST(Expression, ReportsErrors) {
  EXPECT_THROW(eval("1 +"), ConfigError);
  EXPECT_THROW(eval("(1"), ConfigError);
  EXPECT_THROW(eval("y"), ConfigError);
  EXPECT_THROW(eval("foo(1)"), ConfigError);
  EXPECT_THROW(eval("pow(1)"), ConfigError);
  EXPECT_THROW(eval("1 2"), ConfigError);
  EXPECT_THROW(eval("$"), ConfigError);
  EXPECT_THROW(Expression()({}), Error);
}
