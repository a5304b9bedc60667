#include "sit/logic/semantics.hpp"

#include <algorithm>
#include <bit>
#include <set>

#include "sit/errors.hpp"

namespace sit::logic {

// ---------------------------------------------------------------- assignments

Assignment parse_assignment(std::string_view text) {
  if (text.size() % 2 != 0) throw ParseError("assignment: dangling proposition", text.size());
  Assignment a;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    const char p = text[i], v = text[i + 1];
    if (p < 'a' || p > 'z') throw ParseError(std::string("assignment: expected a proposition, got '") + p + "'", i);
    if (v != '0' && v != '1') throw ParseError(std::string("assignment: expected 0 or 1, got '") + v + "'", i + 1);
    if (!a.emplace(p, v == '1').second) throw ParseError(std::string("assignment: '") + p + "' assigned twice", i);
  }
  return a;
}

std::string format_assignment(const Assignment& a) {
  std::string out;
  for (const auto& [p, v] : a) {
    out.push_back(p);
    out.push_back(v ? '1' : '0');
  }
  return out;
}

bool check_assignment(const Formula& f, const Assignment& a) {
  std::uint32_t fixed = 0, open = ap_mask(f);
  for (const auto& [p, v] : a) {
    const std::uint32_t bit = 1u << (p - 'a');
    if (v) fixed |= bit;
    open &= ~bit;
  }
  const int n_open = std::popcount(open);
  if (n_open > 20) throw ResourceError("check_assignment: " + std::to_string(n_open) + " open propositions");
  // Walk every subset of the open bits.
  std::uint32_t sub = 0;
  while (true) {
    if (!eval(f, fixed | sub)) return false;
    if (sub == open) break;
    sub = (sub - open) & open;
  }
  return true;
}

// ---------------------------------------------------------------- traces

namespace {

Formula parse_step(std::string_view text, std::size_t offset) {
  try {
    return parse(text, Dialect::constraint);
  } catch (const ParseError& e) {
    throw ParseError("trace step: malformed constraint", offset + e.position());
  }
}

std::vector<Formula> parse_steps(std::string_view text, std::size_t offset) {
  std::vector<Formula> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(';', start);
    const auto part = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (part.empty()) throw ParseError("trace: empty step", offset + start);
    out.push_back(parse_step(part, offset + start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

LassoTrace parse_trace(std::string_view text) {
  const std::size_t open = text.find('{');
  if (open == std::string_view::npos) throw ParseError("trace: missing '{' cycle", text.size());
  if (open > 0 && text[open - 1] != ';') throw ParseError("trace: expected ';' before '{'", open);
  if (text.back() != '}') throw ParseError("trace: cycle must end the trace with '}'", text.size() - 1);
  const std::size_t close = text.size() - 1;
  if (text.find('}') != close || text.find('{', open + 1) != std::string_view::npos) {
    throw ParseError("trace: more than one cycle", text.find('}'));
  }
  LassoTrace t;
  if (open > 0) t.prefix = parse_steps(text.substr(0, open - 1), 0);
  t.cycle = parse_steps(text.substr(open + 1, close - open - 1), open + 1);
  return t;
}

std::string format_trace(const LassoTrace& t) {
  std::string out;
  for (const auto& s : t.prefix) out += unparse(s) + ";";
  out += "{";
  for (std::size_t i = 0; i < t.cycle.size(); ++i) out += (i ? ";" : "") + unparse(t.cycle[i]);
  out += "}";
  return out;
}

namespace {

struct Positions {
  std::vector<std::uint32_t> vals;
  std::size_t loop;
  std::size_t succ(std::size_t i) const { return i + 1 < vals.size() ? i + 1 : loop; }
};

std::vector<char> eval_at(const Formula& f, const Positions& p, std::size_t extra_rounds) {
  const std::size_t n = p.vals.size();
  std::vector<char> out(n);
  switch (f.op) {
    case Op::True:
    case Op::False:
      std::fill(out.begin(), out.end(), f.op == Op::True);
      return out;
    case Op::Ap:
      for (std::size_t i = 0; i < n; ++i) out[i] = (p.vals[i] >> (f.ap - 'a')) & 1u;
      return out;
    case Op::Next: {
      const auto a = eval_at(f.args[0], p, extra_rounds);
      for (std::size_t i = 0; i < n; ++i) out[i] = a[p.succ(i)];
      return out;
    }
    case Op::Until: {
      const auto a = eval_at(f.args[0], p, extra_rounds);
      const auto b = eval_at(f.args[1], p, extra_rounds);
      // Least fixpoint from all-false; stops once a round changes nothing.
      std::size_t stable_rounds = 0;
      while (stable_rounds <= extra_rounds) {
        bool changed = false;
        for (std::size_t k = n; k-- > 0;) {
          const char v = b[k] || (a[k] && out[p.succ(k)]);
          changed |= v != out[k];
          out[k] = v;
        }
        stable_rounds = changed ? 0 : stable_rounds + 1;
      }
      return out;
    }
    default:
      break;
  }
  const auto a = eval_at(f.args[0], p, extra_rounds);
  if (f.op == Op::Not) {
    for (std::size_t i = 0; i < n; ++i) out[i] = !a[i];
    return out;
  }
  const auto b = eval_at(f.args[1], p, extra_rounds);
  for (std::size_t i = 0; i < n; ++i) {
    switch (f.op) {
      case Op::And: out[i] = a[i] && b[i]; break;
      case Op::Or: out[i] = a[i] || b[i]; break;
      case Op::Iff: out[i] = a[i] == b[i]; break;
      default: out[i] = a[i] != b[i]; break;
    }
  }
  return out;
}

}  // namespace

std::vector<char> eval_positions(const Formula& f, const ConcreteTrace& t, std::size_t extra_rounds) {
  if (t.cycle.empty()) throw ContractError("lasso trace needs a nonempty cycle");
  Positions p{t.prefix, t.prefix.size()};
  p.vals.insert(p.vals.end(), t.cycle.begin(), t.cycle.end());
  return eval_at(f, p, extra_rounds);
}

bool eval_lasso(const Formula& f, const ConcreteTrace& t) { return eval_positions(f, t)[0] != 0; }

bool check_symbolic_trace(const Formula& f, const LassoTrace& t, std::size_t limit) {
  if (t.cycle.empty()) throw ContractError("lasso trace needs a nonempty cycle");
  const std::uint32_t relevant = ap_mask(f);
  std::vector<const Formula*> steps;
  for (const auto& s : t.prefix) steps.push_back(&s);
  for (const auto& s : t.cycle) steps.push_back(&s);

  // Satisfying valuations of each step, projected onto f's propositions.
  std::vector<std::vector<std::uint32_t>> options;
  double product = 1.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::uint32_t bits = relevant | ap_mask(*steps[i]);
    if (std::popcount(bits) > 20) throw ResourceError("trace step mentions more than 20 propositions");
    std::set<std::uint32_t> seen;
    std::uint32_t sub = 0;
    while (true) {
      if (eval(*steps[i], sub)) seen.insert(sub & relevant);
      if (sub == bits) break;
      sub = (sub - bits) & bits;
    }
    if (seen.empty()) throw InvalidTraceError("trace step " + std::to_string(i) + " is unsatisfiable");
    options.emplace_back(seen.begin(), seen.end());
    product *= static_cast<double>(seen.size());
    if (product > static_cast<double>(limit)) {
      throw ResourceError("trace has more than " + std::to_string(limit) + " concretizations");
    }
  }

  std::vector<std::size_t> pick(steps.size(), 0);
  ConcreteTrace c;
  c.prefix.resize(t.prefix.size());
  c.cycle.resize(t.cycle.size());
  while (true) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::uint32_t v = options[i][pick[i]];
      (i < c.prefix.size() ? c.prefix[i] : c.cycle[i - c.prefix.size()]) = v;
    }
    if (!eval_lasso(f, c)) return false;
    std::size_t i = 0;
    while (i < pick.size() && ++pick[i] == options[i].size()) pick[i++] = 0;
    if (i == pick.size()) return true;
  }
}

LassoTrace symbolic_from_concrete(const ConcreteTrace& t, std::uint32_t aps) {
  auto step = [aps](std::uint32_t v) {
    std::vector<Formula> lits;
    for (int i = 0; i < 26; ++i) {
      if (!(aps & (1u << i))) continue;
      Formula a = Formula::atom(char('a' + i));
      lits.push_back((v >> i) & 1u ? a : Formula::unary(Op::Not, a));
    }
    if (lits.empty()) return Formula::constant(true);
    Formula f = lits.back();
    for (std::size_t k = lits.size() - 1; k-- > 0;) f = Formula::binary(Op::And, lits[k], f);
    return f;
  };
  LassoTrace out;
  for (auto v : t.prefix) out.prefix.push_back(step(v));
  for (auto v : t.cycle) out.cycle.push_back(step(v));
  return out;
}

}  // namespace sit::logic
