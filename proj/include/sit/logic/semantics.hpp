#pragma once

// Partial assignments, lasso traces and their checkers.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sit/logic/formula.hpp"

namespace sit::logic {

using Assignment = std::map<char, bool>;

// "a1b0" form. Throws ParseError on malformed text or a repeated AP.
Assignment parse_assignment(std::string_view text);
std::string format_assignment(const Assignment& a);

// True iff f holds under every completion of the APs the assignment leaves
// open. Throws ResourceError above 20 open APs.
bool check_assignment(const Formula& f, const Assignment& a);

// Symbolic lasso u v^omega: one propositional constraint per step.
struct LassoTrace {
  std::vector<Formula> prefix;
  std::vector<Formula> cycle;
};

// "a;&ab;{b}": steps separated by ';', the cycle in braces at the end.
// Throws ParseError.
LassoTrace parse_trace(std::string_view text);
std::string format_trace(const LassoTrace& t);

// Lasso whose steps are total valuations (bit i = AP 'a' + i).
struct ConcreteTrace {
  std::vector<std::uint32_t> prefix;
  std::vector<std::uint32_t> cycle;
};

// Truth of f at position 0. Until is the least fixpoint over the |u|+|v|
// positions, the last one wrapping to |u|. Throws ContractError on an empty
// cycle.
bool eval_lasso(const Formula& f, const ConcreteTrace& t);

// Per-position truth of every subformula; exposed for the fixpoint
// stability property.
std::vector<char> eval_positions(const Formula& f, const ConcreteTrace& t, std::size_t extra_rounds = 0);

// True iff every concretization of the trace (restricted to f's APs)
// satisfies f. Throws InvalidTraceError when a step admits no valuation and
// ResourceError when more than `limit` concretizations would be needed.
bool check_symbolic_trace(const Formula& f, const LassoTrace& t, std::size_t limit = std::size_t{1} << 20);

// Steps as conjunctions of one literal per AP in `aps` (ascending), "1"
// when `aps` is empty.
LassoTrace symbolic_from_concrete(const ConcreteTrace& t, std::uint32_t aps);

}  // namespace sit::logic
