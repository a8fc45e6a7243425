#pragma once

#include <kbesc/types.hpp>

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace kbesc {

/// Arithmetic expression over named scalar variables, e.g.
/// "-exp(-0.1 * x_2^3)" or "(theta_1 - 3)^2 + 0.5 * theta_2^2".
///
/// Grammar: + - * / ^ (right-associative), unary minus, parentheses, numeric
/// literals, the constant pi, and the functions exp log sqrt abs sin cos tan
/// tanh pow(a, b) min(a, b) max(a, b). Variables are resolved to slots when
/// the expression is compiled, so evaluation is allocation-free.
class Expression {
 public:
  Expression() = default;

  /// `variables` lists the admissible names; their order defines the slot
  /// layout expected by `operator()`.
  static Expression compile(const std::string& text, const std::vector<std::string>& variables) {
    Parser p{text, variables, 0};
    Expression e;
    e.root_ = p.parse_sum();
    p.skip_space();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    e.text_ = text;
    return e;
  }

  double operator()(const std::vector<double>& slots) const {
    if (!root_) throw Error("expression: evaluated before compilation");
    return root_->eval(slots);
  }

  const std::string& text() const { return text_; }

 private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(const std::vector<double>& v) const = 0;
  };
  using Ptr = std::shared_ptr<const Node>;

  struct Constant : Node {
    double value;
    explicit Constant(double v) : value(v) {}
    double eval(const std::vector<double>&) const override { return value; }
  };
  struct Variable : Node {
    std::size_t slot;
    explicit Variable(std::size_t s) : slot(s) {}
    double eval(const std::vector<double>& v) const override { return v.at(slot); }
  };
  struct Unary : Node {
    double (*fn)(double);
    Ptr arg;
    Unary(double (*f)(double), Ptr a) : fn(f), arg(std::move(a)) {}
    double eval(const std::vector<double>& v) const override { return fn(arg->eval(v)); }
  };
  struct Binary : Node {
    double (*fn)(double, double);
    Ptr lhs, rhs;
    Binary(double (*f)(double, double), Ptr a, Ptr b) : fn(f), lhs(std::move(a)), rhs(std::move(b)) {}
    double eval(const std::vector<double>& v) const override { return fn(lhs->eval(v), rhs->eval(v)); }
  };

  struct Parser {
    const std::string& s;
    const std::vector<std::string>& vars;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& msg) const {
      throw ConfigError("expression '" + s + "' at offset " + std::to_string(pos) + ": " + msg);
    }
    void skip_space() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_space();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Ptr parse_sum() {
      Ptr lhs = parse_product();
      for (;;) {
        if (accept('+')) {
          lhs = std::make_shared<Binary>([](double a, double b) { return a + b; }, lhs, parse_product());
        } else if (accept('-')) {
          lhs = std::make_shared<Binary>([](double a, double b) { return a - b; }, lhs, parse_product());
        } else {
          return lhs;
        }
      }
    }

    Ptr parse_product() {
      Ptr lhs = parse_unary();
      for (;;) {
        if (accept('*')) {
          lhs = std::make_shared<Binary>([](double a, double b) { return a * b; }, lhs, parse_unary());
        } else if (accept('/')) {
          lhs = std::make_shared<Binary>([](double a, double b) { return a / b; }, lhs, parse_unary());
        } else {
          return lhs;
        }
      }
    }

    Ptr parse_unary() {
      if (accept('-')) return std::make_shared<Unary>([](double a) { return -a; }, parse_unary());
      if (accept('+')) return parse_unary();
      return parse_power();
    }

    Ptr parse_power() {
      Ptr base = parse_atom();
      if (accept('^')) {
        return std::make_shared<Binary>(power, base, parse_unary());
      }
      return base;
    }

    static double power(double a, double b) {
      if (b == std::round(b) && std::abs(b) <= 16) {
        const int n = static_cast<int>(b);
        double r = 1.0;
        for (int i = 0; i < std::abs(n); ++i) r *= a;
        return n >= 0 ? r : 1.0 / r;
      }
      return std::pow(a, b);
    }

    Ptr parse_atom() {
      skip_space();
      if (pos >= s.size()) fail("unexpected end of input");
      if (accept('(')) {
        Ptr e = parse_sum();
        expect(')');
        return e;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("bad number");
        }
        pos += used;
        return std::make_shared<Constant>(v);
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        const std::string name = s.substr(start, pos - start);
        if (accept('(')) return parse_call(name);
        if (name == "pi") return std::make_shared<Constant>(std::numbers::pi);
        for (std::size_t i = 0; i < vars.size(); ++i) {
          if (vars[i] == name) return std::make_shared<Variable>(i);
        }
        pos = start;
        fail("unknown variable '" + name + "'");
      }
      fail(std::string("unexpected '") + c + "'");
    }

    Ptr parse_call(const std::string& name) {
      static const std::map<std::string, double (*)(double)> unary{
          {"exp", [](double a) { return std::exp(a); }},   {"log", [](double a) { return std::log(a); }},
          {"sqrt", [](double a) { return std::sqrt(a); }}, {"abs", [](double a) { return std::abs(a); }},
          {"sin", [](double a) { return std::sin(a); }},   {"cos", [](double a) { return std::cos(a); }},
          {"tan", [](double a) { return std::tan(a); }},   {"tanh", [](double a) { return std::tanh(a); }},
      };
      static const std::map<std::string, double (*)(double, double)> binary{
          {"pow", [](double a, double b) { return std::pow(a, b); }},
          {"min", [](double a, double b) { return std::min(a, b); }},
          {"max", [](double a, double b) { return std::max(a, b); }},
      };
      if (auto it = unary.find(name); it != unary.end()) {
        Ptr a = parse_sum();
        expect(')');
        return std::make_shared<Unary>(it->second, a);
      }
      if (auto it = binary.find(name); it != binary.end()) {
        Ptr a = parse_sum();
        expect(',');
        Ptr b = parse_sum();
        expect(')');
        return std::make_shared<Binary>(it->second, a, b);
      }
      fail("unknown function '" + name + "'");
    }
  };

  Ptr root_;
  std::string text_;
};

/// Names theta_1..theta_n followed by x_1..x_m, the slot layout used by
/// expression-defined plants.
inline std::vector<std::string> plant_variables(Eigen::Index n_theta, Eigen::Index n_x) {
  std::vector<std::string> v;
  for (Eigen::Index i = 1; i <= n_theta; ++i) v.push_back("theta_" + std::to_string(i));
  for (Eigen::Index i = 1; i <= n_x; ++i) v.push_back("x_" + std::to_string(i));
  return v;
}

inline std::vector<double> plant_slots(const Vector& theta, const Vector& x) {
  std::vector<double> s(static_cast<std::size_t>(theta.size() + x.size()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) s[static_cast<std::size_t>(i)] = theta(i);
  for (Eigen::Index i = 0; i < x.size(); ++i) s[static_cast<std::size_t>(theta.size() + i)] = x(i);
  return s;
}

}  // namespace kbesc
