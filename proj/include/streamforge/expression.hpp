#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace streamforge {

/// A scalar expression in the variables x and t, e.g. "sin(2*pi*x) + 0.5".
///
/// Grammar: numbers, x, t, pi, the binary operators + - * /, unary minus,
/// parentheses and the functions sin cos tan exp log sqrt fabs tanh pow.
/// The same tree is evaluated on the host (intrinsic kernels, analytic
/// solutions) and printed as C for generated kernels, so both paths perform
/// identical operations in identical order.
class Expression {
 public:
  /// Throws Error(invalid_argument) with the offending position on bad input.
  static Expression parse(std::string_view text);

  /// The constant 0.
  Expression();

  double evaluate(double x, double t) const;

  /// Fully parenthesised C text. Variables are replaced by the given C
  /// expressions (defaults: x -> "x", t -> "t"); literals always carry a
  /// decimal point or exponent so precision suffixing applies to them.
  std::string to_c(const std::map<std::string, std::string>& variables = {}) const;

  bool uses(std::string_view variable) const;
  bool is_zero() const;
  const std::string& text() const noexcept { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

}  // namespace streamforge
