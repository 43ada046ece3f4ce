#include "streamforge/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "streamforge/error.hpp"

namespace streamforge {

struct Expression::Node {
  enum class Kind { number, variable, unary_minus, binary, call };
  Kind kind = Kind::number;
  double value = 0.0;
  std::string name;  // variable or function name
  char op = 0;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

struct Function {
  const char* name;
  int arity;
};

constexpr Function kFunctions[] = {
    {"sin", 1}, {"cos", 1},  {"tan", 1},  {"exp", 1}, {"log", 1},
    {"sqrt", 1}, {"fabs", 1}, {"tanh", 1}, {"pow", 2},
};

const Function* find_function(std::string_view name) {
  for (const auto& f : kFunctions) {
    if (name == f.name) {
      return &f;
    }
  }
  return nullptr;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  NodePtr parse() {
    auto n = expr();
    skip_ws();
    if (pos_ != s_.size()) {
      fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    }
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::invalid_argument,
                "expression \"" + std::string(s_) + "\": " + what +
                    " at position " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = binary('+', lhs, term());
      } else if (accept('-')) {
        lhs = binary('-', lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary('*', lhs, unary());
      } else if (accept('/')) {
        lhs = binary('/', lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::unary_minus;
      n->args = {unary()};
      return n;
    }
    if (accept('+')) {
      return unary();
    }
    return primary();
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= s_.size()) {
      fail("unexpected end of input");
    }
    const char c = s_[pos_];
    if (accept('(')) {
      auto n = expr();
      if (!accept(')')) {
        fail("expected ')'");
      }
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return number();
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(s_.substr(start, pos_ - start));
      if (name == "x" || name == "t") {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::variable;
        n->name = name;
        return n;
      }
      if (name == "pi") {
        auto n = std::make_shared<Node>();
        n->value = std::numbers::pi;
        return n;
      }
      const Function* f = find_function(name);
      if (f == nullptr) {
        pos_ = start;
        fail("unknown name '" + name + "'");
      }
      if (!accept('(')) {
        fail("expected '(' after " + name);
      }
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::call;
      n->name = name;
      for (int i = 0; i < f->arity; ++i) {
        if (i > 0 && !accept(',')) {
          fail("expected ',' in call to " + name);
        }
        n->args.push_back(expr());
      }
      if (!accept(')')) {
        fail("expected ')' closing call to " + name);
      }
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const char* begin = s_.data() + pos_;
    char* end = nullptr;
    const std::string tail(begin, s_.size() - pos_);
    const double v = std::strtod(tail.c_str(), &end);
    const auto used = static_cast<std::size_t>(end - tail.c_str());
    if (used == 0) {
      fail("malformed number");
    }
    pos_ += used;
    auto n = std::make_shared<Node>();
    n->value = v;
    return n;
  }

  static NodePtr binary(char op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::binary;
    n->op = op;
    n->args = {std::move(a), std::move(b)};
    return n;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

double eval(const Node& n, double x, double t) {
  switch (n.kind) {
    case Node::Kind::number: return n.value;
    case Node::Kind::variable: return n.name == "x" ? x : t;
    case Node::Kind::unary_minus: return -eval(*n.args[0], x, t);
    case Node::Kind::binary: {
      const double a = eval(*n.args[0], x, t);
      const double b = eval(*n.args[1], x, t);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        default: return a / b;
      }
    }
    case Node::Kind::call: {
      const double a = eval(*n.args[0], x, t);
      if (n.name == "sin") return std::sin(a);
      if (n.name == "cos") return std::cos(a);
      if (n.name == "tan") return std::tan(a);
      if (n.name == "exp") return std::exp(a);
      if (n.name == "log") return std::log(a);
      if (n.name == "sqrt") return std::sqrt(a);
      if (n.name == "fabs") return std::fabs(a);
      if (n.name == "tanh") return std::tanh(a);
      return std::pow(a, eval(*n.args[1], x, t));
    }
  }
  return 0.0;
}

std::string c_literal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) {
    s += ".0";
  }
  return s;
}

void emit(const Node& n, const std::map<std::string, std::string>& vars,
          std::string& out) {
  switch (n.kind) {
    case Node::Kind::number: out += c_literal(n.value); return;
    case Node::Kind::variable: {
      auto it = vars.find(n.name);
      out += it != vars.end() ? it->second : n.name;
      return;
    }
    case Node::Kind::unary_minus:
      out += "(-";
      emit(*n.args[0], vars, out);
      out += ")";
      return;
    case Node::Kind::binary:
      out += "(";
      emit(*n.args[0], vars, out);
      out += " ";
      out += n.op;
      out += " ";
      emit(*n.args[1], vars, out);
      out += ")";
      return;
    case Node::Kind::call:
      out += n.name;
      out += "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i > 0) out += ", ";
        emit(*n.args[i], vars, out);
      }
      out += ")";
      return;
  }
}

bool uses_var(const Node& n, std::string_view v) {
  if (n.kind == Node::Kind::variable && n.name == v) {
    return true;
  }
  for (const auto& a : n.args) {
    if (uses_var(*a, v)) return true;
  }
  return false;
}

}  // namespace

Expression::Expression() : text_("0"), root_(std::make_shared<Node>()) {}

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_ = std::string(text);
  e.root_ = Parser(text).parse();
  return e;
}

double Expression::evaluate(double x, double t) const {
  return eval(*root_, x, t);
}

std::string Expression::to_c(
    const std::map<std::string, std::string>& variables) const {
  std::string out;
  emit(*root_, variables, out);
  return out;
}

bool Expression::uses(std::string_view variable) const {
  return uses_var(*root_, variable);
}

bool Expression::is_zero() const {
  return root_->kind == Node::Kind::number && root_->value == 0.0;
}

}  // namespace streamforge
