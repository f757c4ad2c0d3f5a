// expression.hpp
//
// Small arithmetic language for boundary data:
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | atom
//   atom   := number | name | call | '(' expr ')'
//   call   := ('pow' | 'abs' | 'max' | 'min') '(' expr (',' expr)* ')'
//
// Names: x, y, z (aliases x1, x2, x3) and the constant pi.
#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "apl/core.hpp"

namespace apl {

class Expression {
 public:
  Expression() = default;

  static Expression parse(const std::string& text) {
    Parser ps{text, 0};
    Expression e;
    e.text_ = text;
    e.root_ = ps.expr();
    ps.skip();
    if (ps.pos != text.size()) ps.fail("unexpected '" + std::string(1, text[ps.pos]) + "'");
    return e;
  }

  double operator()(const Point& x) const {
    if (!root_) throw Error("Expression: empty");
    return root_->eval(x);
  }

  const std::string& text() const { return text_; }

 private:
  struct Node {
    enum Kind { constant, variable, neg, add, sub, mul, div, pow, abs, max, min } kind;
    double value = 0.0;
    int var = 0;
    std::vector<std::shared_ptr<const Node>> args;

    double eval(const Point& x) const {
      switch (kind) {
        case constant: return value;
        case variable: return x[var];
        case neg: return -args[0]->eval(x);
        case add: return args[0]->eval(x) + args[1]->eval(x);
        case sub: return args[0]->eval(x) - args[1]->eval(x);
        case mul: return args[0]->eval(x) * args[1]->eval(x);
        case div: return args[0]->eval(x) / args[1]->eval(x);
        case pow: return std::pow(args[0]->eval(x), args[1]->eval(x));
        case abs: return std::abs(args[0]->eval(x));
        case max: {
          double m = args[0]->eval(x);
          for (std::size_t i = 1; i < args.size(); ++i) m = std::max(m, args[i]->eval(x));
          return m;
        }
        case min: {
          double m = args[0]->eval(x);
          for (std::size_t i = 1; i < args.size(); ++i) m = std::min(m, args[i]->eval(x));
          return m;
        }
      }
      return 0.0;
    }
  };
  using NodePtr = std::shared_ptr<const Node>;

  static NodePtr make(Node::Kind k, std::vector<NodePtr> args, double value = 0.0, int var = 0) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = std::move(args);
    n->value = value;
    n->var = var;
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& msg) const {
      throw Error("expression: " + msg + " at position " + std::to_string(pos) + " in \"" + s + "\"");
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expr() {
      NodePtr lhs = term();
      while (true) {
        if (accept('+')) lhs = make(Node::add, {lhs, term()});
        else if (accept('-')) lhs = make(Node::sub, {lhs, term()});
        else return lhs;
      }
    }
    NodePtr term() {
      NodePtr lhs = unary();
      while (true) {
        if (accept('*')) lhs = make(Node::mul, {lhs, unary()});
        else if (accept('/')) lhs = make(Node::div, {lhs, unary()});
        else return lhs;
      }
    }
    NodePtr unary() {
      if (accept('-')) return make(Node::neg, {unary()});
      if (accept('+')) return unary();
      return atom();
    }
    NodePtr atom() {
      skip();
      if (pos >= s.size()) fail("unexpected end of input");
      if (accept('(')) {
        NodePtr e = expr();
        expect(')');
        return e;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return name();
      fail(std::string("unexpected '") + c + "'");
    }
    NodePtr number() {
      const std::size_t start = pos;
      while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) ++pos;
      if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        std::size_t q = pos + 1;
        if (q < s.size() && (s[q] == '+' || s[q] == '-')) ++q;
        if (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) {
          pos = q;
          while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        }
      }
      try {
        return make(Node::constant, {}, detail::parse_double(std::string_view(s).substr(start, pos - start)));
      } catch (const Error&) {
        pos = start;
        fail("malformed number");
      }
    }
    NodePtr name() {
      const std::size_t start = pos;
      while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
      const std::string id = s.substr(start, pos - start);
      if (id == "x" || id == "x1") return make(Node::variable, {}, 0.0, 0);
      if (id == "y" || id == "x2") return make(Node::variable, {}, 0.0, 1);
      if (id == "z" || id == "x3") return make(Node::variable, {}, 0.0, 2);
      if (id == "pi") return make(Node::constant, {}, M_PI);
      Node::Kind k;
      std::size_t arity_min = 1, arity_max = 1;
      if (id == "pow") k = Node::pow, arity_min = arity_max = 2;
      else if (id == "abs") k = Node::abs;
      else if (id == "max") k = Node::max, arity_min = 2, arity_max = 64;
      else if (id == "min") k = Node::min, arity_min = 2, arity_max = 64;
      else {
        pos = start;
        fail("unknown name '" + id + "'");
      }
      expect('(');
      std::vector<NodePtr> args{expr()};
      while (accept(',')) args.push_back(expr());
      expect(')');
      if (args.size() < arity_min || args.size() > arity_max) {
        pos = start;
        fail("wrong number of arguments to " + id);
      }
      return make(k, std::move(args));
    }
  };

  std::string text_;
  NodePtr root_;
};

}  // namespace apl
