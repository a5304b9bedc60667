#include "sit/logic/formula.hpp"

#include <algorithm>

#include "sit/errors.hpp"

namespace sit::logic {

Formula Formula::constant(bool value) { return {value ? Op::True : Op::False, 0, {}}; }
Formula Formula::atom(char name) { return {Op::Ap, name, {}}; }
Formula Formula::unary(Op op, Formula a) { return {op, 0, {std::move(a)}}; }
Formula Formula::binary(Op op, Formula a, Formula b) { return {op, 0, {std::move(a), std::move(b)}}; }

int arity(Op op) {
  switch (op) {
    case Op::True:
    case Op::False:
    case Op::Ap:
      return 0;
    case Op::Not:
    case Op::Next:
      return 1;
    default:
      return 2;
  }
}

char symbol(Op op) {
  switch (op) {
    case Op::True: return '1';
    case Op::False: return '0';
    case Op::Ap: return '?';
    case Op::Not: return '!';
    case Op::And: return '&';
    case Op::Or: return '|';
    case Op::Iff: return '=';
    case Op::Xor: return '^';
    case Op::Next: return 'X';
    case Op::Until: return 'U';
  }
  return '?';
}

bool allowed(Op op, Dialect dialect) {
  switch (op) {
    case Op::True:
    case Op::False:
    case Op::Ap:
    case Op::Not:
    case Op::And:
      return true;
    case Op::Or:
      return dialect != Dialect::ltl;
    case Op::Iff:
    case Op::Xor:
      return dialect == Dialect::prop;
    case Op::Next:
    case Op::Until:
      return dialect == Dialect::ltl;
  }
  return false;
}

namespace {

bool op_of(char c, Op& op) {
  switch (c) {
    case '1': op = Op::True; return true;
    case '0': op = Op::False; return true;
    case '!': op = Op::Not; return true;
    case '&': op = Op::And; return true;
    case '|': op = Op::Or; return true;
    case '=': op = Op::Iff; return true;
    case '^': op = Op::Xor; return true;
    case 'X': op = Op::Next; return true;
    case 'U': op = Op::Until; return true;
    default:
      if (c >= 'a' && c <= 'z') {
        op = Op::Ap;
        return true;
      }
      return false;
  }
}

class Parser {
 public:
  Parser(std::string_view text, Dialect d) : text_(text), dialect_(d) {}

  Formula run() {
    if (text_.empty()) throw ParseError("empty formula", 0);
    Formula f = node();
    if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
    return f;
  }

 private:
  Formula node() {
    if (pos_ >= text_.size()) throw ParseError("operator is missing an operand", pos_);
    const char c = text_[pos_];
    Op op;
    if (!op_of(c, op) || !allowed(op, dialect_)) {
      throw ParseError(std::string("unexpected symbol '") + c + "'", pos_);
    }
    ++pos_;
    Formula f{op, op == Op::Ap ? c : char(0), {}};
    for (int i = 0; i < arity(op); ++i) f.args.push_back(node());
    return f;
  }

  std::string_view text_;
  Dialect dialect_;
  std::size_t pos_ = 0;
};

void unparse_into(const Formula& f, std::string& out) {
  out.push_back(f.op == Op::Ap ? f.ap : symbol(f.op));
  for (const auto& a : f.args) unparse_into(a, out);
}

bool is_const(const Formula& f, bool v) { return f.op == (v ? Op::True : Op::False); }

}  // namespace

Formula parse(std::string_view text, Dialect dialect) { return Parser(text, dialect).run(); }
Formula parse_prop(std::string_view text) { return parse(text, Dialect::prop); }
Formula parse_ltl(std::string_view text) { return parse(text, Dialect::ltl); }

std::string unparse(const Formula& f) {
  std::string out;
  unparse_into(f, out);
  return out;
}

std::size_t size(const Formula& f) {
  std::size_t n = 1;
  for (const auto& a : f.args) n += size(a);
  return n;
}

std::size_t depth(const Formula& f) {
  std::size_t d = 0;
  for (const auto& a : f.args) d = std::max(d, 1 + depth(a));
  return d;
}

std::uint32_t ap_mask(const Formula& f) {
  std::uint32_t m = f.op == Op::Ap ? (1u << (f.ap - 'a')) : 0u;
  for (const auto& a : f.args) m |= ap_mask(a);
  return m;
}

std::string ap_names(std::uint32_t mask) {
  std::string out;
  for (int i = 0; i < 26; ++i) {
    if (mask & (1u << i)) out.push_back(char('a' + i));
  }
  return out;
}

bool eval(const Formula& f, std::uint32_t v) {
  switch (f.op) {
    case Op::True: return true;
    case Op::False: return false;
    case Op::Ap: return (v >> (f.ap - 'a')) & 1u;
    case Op::Not: return !eval(f.args[0], v);
    case Op::And: return eval(f.args[0], v) && eval(f.args[1], v);
    case Op::Or: return eval(f.args[0], v) || eval(f.args[1], v);
    case Op::Iff: return eval(f.args[0], v) == eval(f.args[1], v);
    case Op::Xor: return eval(f.args[0], v) != eval(f.args[1], v);
    case Op::Next:
    case Op::Until:
      break;
  }
  throw ContractError("eval: temporal operator in a propositional context");
}

Formula simplify_not(Formula a) {
  if (a.op == Op::True) return Formula::constant(false);
  if (a.op == Op::False) return Formula::constant(true);
  if (a.op == Op::Not) return std::move(a.args[0]);
  return Formula::unary(Op::Not, std::move(a));
}

Formula simplify_and(Formula a, Formula b) {
  if (is_const(a, false) || is_const(b, false)) return Formula::constant(false);
  if (is_const(a, true)) return b;
  if (is_const(b, true) || a == b) return a;
  return Formula::binary(Op::And, std::move(a), std::move(b));
}

Formula simplify_or(Formula a, Formula b) {
  if (is_const(a, true) || is_const(b, true)) return Formula::constant(true);
  if (is_const(a, false)) return b;
  if (is_const(b, false) || a == b) return a;
  return Formula::binary(Op::Or, std::move(a), std::move(b));
}

Formula progress(const Formula& f, std::uint32_t v) {
  switch (f.op) {
    case Op::True:
    case Op::False:
      return f;
    case Op::Ap:
      return Formula::constant((v >> (f.ap - 'a')) & 1u);
    case Op::Not:
      return simplify_not(progress(f.args[0], v));
    case Op::And:
      return simplify_and(progress(f.args[0], v), progress(f.args[1], v));
    case Op::Or:
      return simplify_or(progress(f.args[0], v), progress(f.args[1], v));
    case Op::Iff:
    case Op::Xor: {
      const bool eq = f.op == Op::Iff;
      Formula a = progress(f.args[0], v), b = progress(f.args[1], v);
      // (a & b) | (!a & !b) for iff, with the negation on b for xor.
      Formula nb = simplify_not(b);
      Formula pos = simplify_and(a, eq ? b : nb);
      Formula neg = simplify_and(simplify_not(a), eq ? nb : b);
      return simplify_or(std::move(pos), std::move(neg));
    }
    case Op::Next:
      return f.args[0];
    case Op::Until:
      return simplify_or(progress(f.args[1], v), simplify_and(progress(f.args[0], v), f));
  }
  return f;
}

}  // namespace sit::logic
