#pragma once

// Propositional and LTL formulas in Polish notation.
//
// Symbols: '1' true, '0' false, lowercase letters are atomic propositions,
// '!' not, '&' and, '|' or, '=' iff, '^' xor, 'X' next, 'U' until.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sit::logic {

enum class Op : std::uint8_t { True, False, Ap, Not, And, Or, Iff, Xor, Next, Until };

struct Formula {
  Op op = Op::True;
  char ap = 0;
  std::vector<Formula> args;

  static Formula constant(bool value);
  static Formula atom(char name);
  static Formula unary(Op op, Formula a);
  static Formula binary(Op op, Formula a, Formula b);

  bool operator==(const Formula&) const = default;
};

// Which operators a parser accepts.
enum class Dialect {
  prop,        // constants, APs, ! & | = ^
  ltl,         // constants, APs, ! & X U
  constraint,  // trace step constraints: constants, APs, ! & |
};

int arity(Op op);
char symbol(Op op);
bool allowed(Op op, Dialect dialect);

// Throws ParseError (with the offending character position) on unknown or
// disallowed symbols, missing operands and trailing input.
Formula parse(std::string_view text, Dialect dialect);
Formula parse_prop(std::string_view text);
Formula parse_ltl(std::string_view text);

std::string unparse(const Formula& f);

// Node count.
std::size_t size(const Formula& f);
// Height; a leaf has depth 0.
std::size_t depth(const Formula& f);
// Bit i set when AP ('a' + i) occurs.
std::uint32_t ap_mask(const Formula& f);
std::string ap_names(std::uint32_t mask);

// Truth value under a total valuation (bit i = AP 'a' + i). Throws
// ContractError on temporal operators.
bool eval(const Formula& f, std::uint32_t valuation);

// Constant folding of !, &, | over true/false.
Formula simplify_not(Formula a);
Formula simplify_and(Formula a, Formula b);
Formula simplify_or(Formula a, Formula b);

// LTL progression through one step: the obligation left for the remaining
// trace after reading `valuation`.
Formula progress(const Formula& f, std::uint32_t valuation);

}  // namespace sit::logic
