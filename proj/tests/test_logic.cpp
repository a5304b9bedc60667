#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "logic_oracle.hpp"
#include "sit/errors.hpp"
#include "sit/logic/datasets.hpp"

using namespace sit;
using namespace sit::logic;

namespace {

// Random AST built without the library's generator, including constants.
Formula random_ast(std::mt19937_64& rng, Dialect d, int budget) {
  static const std::vector<Op> prop_ops{Op::Not, Op::And, Op::Or, Op::Iff, Op::Xor};
  static const std::vector<Op> ltl_ops{Op::Not, Op::And, Op::Next, Op::Until};
  const auto& ops = d == Dialect::prop ? prop_ops : ltl_ops;
  if (budget <= 1 || uniform_index(rng, 3) == 0) {
    const auto r = uniform_index(rng, 8);
    if (r == 0) return Formula::constant(true);
    if (r == 1) return Formula::constant(false);
    return Formula::atom(static_cast<char>('a' + uniform_index(rng, 5)));
  }
  const Op op = ops[uniform_index(rng, ops.size())];
  if (arity(op) == 1) return Formula::unary(op, random_ast(rng, d, budget - 1));
  return Formula::binary(op, random_ast(rng, d, budget / 2), random_ast(rng, d, budget / 2));
}

std::string rename_text(std::string s, const std::string& perm) {
  for (auto& c : s) {
    if (c >= 'a' && c <= 'z' && static_cast<std::size_t>(c - 'a') < perm.size()) c = perm[c - 'a'];
  }
  return s;
}

std::vector<std::uint32_t> random_steps(std::mt19937_64& rng, std::size_t n, std::size_t aps) {
  std::vector<std::uint32_t> v(n);
  for (auto& x : v) x = static_cast<std::uint32_t>(uniform_index(rng, std::size_t{1} << aps));
  return v;
}

}  // namespace

TEST_CASE("parser: paper examples and arity errors") {
  const Formula f = parse_prop("&ab");
  CHECK(f == Formula::binary(Op::And, Formula::atom('a'), Formula::atom('b')));
  CHECK(parse_prop("a") == Formula::atom('a'));
  CHECK_THROWS_AS(parse_prop("&a"), ParseError);
  try {
    parse_prop("&a");
  } catch (const ParseError& e) {
    CHECK(e.position() == 2);
  }
  CHECK_THROWS_AS(parse_prop("ab"), ParseError);   // trailing
  CHECK_THROWS_AS(parse_prop(""), ParseError);
  CHECK_THROWS_AS(parse_prop("&a#"), ParseError);  // unknown symbol
  CHECK_THROWS_AS(parse_prop("Xa"), ParseError);   // temporal op in prop
  CHECK_THROWS_AS(parse_ltl("|ab"), ParseError);   // no disjunction in LTL
  CHECK_THROWS_AS(parse_ltl("=ab"), ParseError);
  CHECK(unparse(parse_ltl("U1c")) == "U1c");
  CHECK(depth(parse_ltl("XXa")) == 2);
  CHECK(size(parse_ltl("&aXb")) == 4);
}

TEST_CASE("parser: unparse then parse is the identity on 10k random ASTs per logic") {
  std::mt19937_64 rng(11);
  for (Dialect d : {Dialect::prop, Dialect::ltl}) {
    std::size_t mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const Formula f = random_ast(rng, d, 1 + static_cast<int>(uniform_index(rng, 16)));
      const std::string text = unparse(f);
      if (!(parse(text, d) == f) || unparse(parse(text, d)) != text) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("assignments: format, parse and paper example") {
  CHECK(format_assignment(parse_assignment("b0a1")) == "a1b0");
  CHECK_THROWS_AS(parse_assignment("a1a0"), ParseError);
  CHECK_THROWS_AS(parse_assignment("a2"), ParseError);
  CHECK_THROWS_AS(parse_assignment("a"), ParseError);
  CHECK_THROWS_AS(parse_assignment("1a"), ParseError);
  CHECK(parse_assignment("").empty());
  CHECK(check_assignment(parse_prop("|ab"), {{'a', true}}));
  CHECK_FALSE(check_assignment(parse_prop("|ab"), {{'a', false}}));
  for (const char* a : {"", "a0", "a1", "a1b1"}) CHECK_FALSE(check_assignment(parse_prop("&a!a"), parse_assignment(a)));
}

TEST_CASE("assignments: too many open propositions is a resource error") {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "&";
  for (int i = 0; i < 21; ++i) text.push_back(static_cast<char>('a' + i));
  const Formula f = parse_prop(text);
  CHECK_THROWS_AS(check_assignment(f, {}), ResourceError);
  CHECK_FALSE(check_assignment(f, {{'a', false}}));
}

TEST_CASE("assignments: agree with the truth table on every partial map of random formulas") {
  std::mt19937_64 rng(3);
  FormulaSpec spec = FormulaSpec::prop(3, {1, 15});
  std::size_t tested = 0, disagreements = 0;
  while (tested < 300) {
    auto f = random_formula(spec, rng);
    if (!f) continue;
    ++tested;
    const std::string text = unparse(*f);
    for (int code = 0; code < 27; ++code) {
      std::map<char, bool> partial;
      int c = code;
      for (char p : {'a', 'b', 'c'}) {
        if (c % 3) partial[p] = c % 3 == 2;
        c /= 3;
      }
      if (check_assignment(*f, partial) != oracle::truth_table_forces(text, partial)) ++disagreements;
    }
  }
  CHECK(disagreements == 0);
}

TEST_CASE("traces: parsing examples and malformed input") {
  const LassoTrace t = parse_trace("a;&ab;{b}");
  REQUIRE(t.prefix.size() == 2);
  REQUIRE(t.cycle.size() == 1);
  CHECK(t.prefix[1] == parse_prop("&ab"));
  CHECK(t.cycle[0] == Formula::atom('b'));
  CHECK(format_trace(t) == "a;&ab;{b}");
  const LassoTrace one = parse_trace("{1}");
  CHECK(one.prefix.empty());
  CHECK(one.cycle == std::vector<Formula>{Formula::constant(true)});
  CHECK(format_trace(parse_trace("|a!b;{a;b}")) == "|a!b;{a;b}");
  for (const char* bad : {"a;b", "{}", "a{b}", "{a};b", ";{a}", "a;;{b}", "{a;}", "{Xa}", "{a}}", "{{a}", "a;{b};{c}"}) {
    CHECK_THROWS_AS(parse_trace(bad), ParseError);
  }
}

TEST_CASE("lasso semantics: paper examples") {
  // a, a & !b, then c forever.
  const ConcreteTrace t{{0b001, 0b001}, {0b100}};
  CHECK(eval_lasso(parse_ltl("U1c"), t));
  CHECK_FALSE(eval_lasso(parse_ltl("XXb"), t));
  CHECK(eval_lasso(parse_ltl("XXa"), ConcreteTrace{{0, 0}, {1}}));
  CHECK_FALSE(eval_lasso(parse_ltl("XXa"), ConcreteTrace{{1, 1}, {0}}));
  CHECK_THROWS_AS(eval_lasso(parse_ltl("a"), ConcreteTrace{{1}, {}}), ContractError);
  // Until needs its witness to arrive: a forever never reaches b.
  CHECK_FALSE(eval_lasso(parse_ltl("Uab"), ConcreteTrace{{}, {0b01}}));
  CHECK(eval_lasso(parse_ltl("Uab"), ConcreteTrace{{0b01}, {0b01, 0b10}}));
}

TEST_CASE("lasso semantics: agree with the unrolling oracle on the exhaustive small space") {
  std::vector<std::string> formulas;
  for (std::size_t s = 1; s <= 5; ++s) {
    auto f = oracle::all_formulas(s, "1ab", "!X", "&U");
    formulas.insert(formulas.end(), f.begin(), f.end());
  }
  std::vector<std::vector<std::uint32_t>> words{{}};
  for (std::size_t len = 1; len <= 2; ++len) {
    for (std::uint32_t code = 0; code < (1u << (2 * len)); ++code) {
      std::vector<std::uint32_t> w;
      for (std::size_t i = 0; i < len; ++i) w.push_back((code >> (2 * i)) & 3u);
      words.push_back(w);
    }
  }
  std::size_t checks = 0, disagreements = 0;
  for (const auto& text : formulas) {
    const Formula f = parse_ltl(text);
    for (const auto& u : words) {
      for (const auto& v : words) {
        if (v.empty()) continue;
        ++checks;
        if (eval_lasso(f, {u, v}) != oracle::unrolled_holds(text, u, v)) ++disagreements;
      }
    }
  }
  MESSAGE("formulas=" << formulas.size() << " checks=" << checks);
  CHECK(formulas.size() == 867);
  CHECK(disagreements == 0);
}

TEST_CASE("lasso semantics: one more fixpoint round changes nothing") {
  std::mt19937_64 rng(21);
  FormulaSpec spec = FormulaSpec::ltl(3, {1, 20});
  std::size_t tested = 0;
  while (tested < 500) {
    auto f = random_formula(spec, rng);
    if (!f) continue;
    ++tested;
    const ConcreteTrace t{random_steps(rng, uniform_index(rng, 5), 3), random_steps(rng, 1 + uniform_index(rng, 4), 3)};
    REQUIRE(eval_positions(*f, t, 0) == eval_positions(*f, t, 1));
  }
}

TEST_CASE("symbolic traces: examples, invalid steps and resource bound") {
  CHECK(check_symbolic_trace(parse_ltl("U1c"), parse_trace("{c}")));
  CHECK_FALSE(check_symbolic_trace(parse_ltl("XXb"), parse_trace("a;&a!b;{c}")));
  CHECK(check_symbolic_trace(parse_ltl("XXa"), parse_trace("1;1;{a}")));
  CHECK_FALSE(check_symbolic_trace(parse_ltl("a"), parse_trace("{|ab}")));
  CHECK_THROWS_AS(check_symbolic_trace(parse_ltl("a"), parse_trace("a;{&b!b}")), InvalidTraceError);
  CHECK_THROWS_AS(check_symbolic_trace(parse_ltl("&a&b&c&d&ef"), parse_trace("1;1;1;{1}"), 1000), ResourceError);
  // Constraints may mention letters the formula ignores.
  CHECK(check_symbolic_trace(parse_ltl("a"), parse_trace("{&az}")));
}

TEST_CASE("symbolic traces: agree with eval_lasso on fully concrete traces") {
  std::mt19937_64 rng(8);
  FormulaSpec spec = FormulaSpec::ltl(3, {1, 12});
  std::size_t tested = 0;
  while (tested < 1000) {
    auto f = random_formula(spec, rng);
    if (!f) continue;
    ++tested;
    const ConcreteTrace t{random_steps(rng, uniform_index(rng, 4), 3), random_steps(rng, 1 + uniform_index(rng, 3), 3)};
    const bool expect = eval_lasso(*f, t);
    REQUIRE(check_symbolic_trace(*f, symbolic_from_concrete(t, ap_mask(*f))) == expect);
    REQUIRE(check_symbolic_trace(*f, symbolic_from_concrete(t, 0b111)) == expect);
  }
}

TEST_CASE("copying generator") {
  const auto g = gen_copying(5, 10, {5, 15}, 300);
  CHECK(g.data.samples.size() == 300);
  CHECK(g.warning.empty());
  for (const auto& s : g.data.samples) {
    CHECK(s.input == s.target);
    CHECK(s.input.size() >= 5);
    CHECK(s.input.size() <= 15);
    CHECK(std::set<char>(s.input.begin(), s.input.end()).size() <= s.input.size());
    for (char c : s.input) CHECK((c >= 'a' && c < 'a' + 10));
  }
  CHECK(gen_copying(5, 10, {5, 15}, 300).data == g.data);
  CHECK_FALSE(gen_copying(6, 10, {5, 15}, 300).data == g.data);
  for (const auto& s : gen_copying(1, 10, {3, 4}, 50, 10).data.samples) {
    for (char c : s.input) CHECK((c >= 'k' && c <= 't'));
  }
  CHECK_THROWS_AS(gen_copying(1, 0, {3, 4}, 5), ConfigError);
  CHECK_THROWS_AS(gen_copying(1, 20, {3, 4}, 5, 10), ConfigError);
}

TEST_CASE("prop generator: targets are minimal, valid and deterministic") {
  const auto g = gen_prop(4, FormulaSpec::prop(3, {3, 12}), 300);
  REQUIRE(g.data.samples.size() == 300);
  CHECK(gen_prop(4, FormulaSpec::prop(3, {3, 12}), 300).data == g.data);
  for (const auto& s : g.data.samples) {
    REQUIRE(check_sample(Task::prop, s.input, s.target));
    const Formula f = parse_prop(s.input);
    CHECK(size(f) >= 3);
    CHECK(size(f) <= 12);
    // No partial map with fewer entries forces the formula.
    const std::string aps = oracle::letters_in(s.input);
    const std::size_t k = parse_assignment(s.target).size();
    for (std::uint32_t code = 0; code < 81; ++code) {
      std::map<char, bool> partial;
      std::uint32_t c = code;
      for (char p : aps) {
        if (c % 3) partial[p] = c % 3 == 2;
        c /= 3;
      }
      if (partial.size() < k) REQUIRE_FALSE(oracle::truth_table_forces(s.input, partial));
    }
  }
}

TEST_CASE("ltl generator: targets are the shortest lassos and pass the checker") {
  const auto g = gen_ltl(9, FormulaSpec::ltl(2, {3, 10}), 120);
  REQUIRE(g.data.samples.size() == 120);
  CHECK(gen_ltl(9, FormulaSpec::ltl(2, {3, 10}), 120).data == g.data);
  for (const auto& s : g.data.samples) {
    REQUIRE(check_sample(Task::ltl, s.input, s.target));
    const LassoTrace t = parse_trace(s.target);
    const std::size_t n = t.prefix.size() + t.cycle.size();
    CHECK(t.prefix.size() <= 4);
    CHECK(t.cycle.size() <= 3);
    // Oracle: no lasso with fewer steps satisfies the formula.
    const std::uint32_t used = ap_mask(parse_ltl(s.input));
    const std::string aps = ap_names(used);
    std::size_t count = 1;
    for (std::size_t len = 1; len < n; ++len) {
      count = std::size_t{1} << (aps.size() * len);
      for (std::size_t code = 0; code < count; ++code) {
        std::vector<std::uint32_t> steps;
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t local = (code >> (aps.size() * i)) & ((std::size_t{1} << aps.size()) - 1);
          std::uint32_t m = 0;
          for (std::size_t j = 0; j < aps.size(); ++j) {
            if ((local >> j) & 1u) m |= 1u << (aps[j] - 'a');
          }
          steps.push_back(m);
        }
        for (std::size_t j = len > 3 ? len - 3 : 0; j <= std::min<std::size_t>(4, len - 1); ++j) {
          const std::vector<std::uint32_t> u(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(j));
          const std::vector<std::uint32_t> v(steps.begin() + static_cast<std::ptrdiff_t>(j), steps.end());
          REQUIRE_FALSE(oracle::unrolled_holds(s.input, u, v));
        }
      }
    }
  }
}

TEST_CASE("ltl generator: unsatisfiable formulas find no lasso") {
  CHECK_FALSE(find_lasso(parse_ltl("&a!a")).has_value());
  CHECK_FALSE(find_lasso(parse_ltl("&U1a!U1a")).has_value());
  const auto t = find_lasso(parse_ltl("XXa"));
  REQUIRE(t.has_value());
  CHECK(format_trace(symbolic_from_concrete(*t, 1)) == "{a}");
  CHECK(format_trace(symbolic_from_concrete(*find_lasso(parse_ltl("&!aXa")), 1)) == "{!a;a}");
  CHECK(format_trace(symbolic_from_concrete(*find_lasso(parse_ltl("U11")), 0)) == "{1}");
}

TEST_CASE("generators: operator frequencies track the configured weights") {
  const auto count_ops = [](const Dataset& d) {
    std::map<char, double> freq;
    double total = 0;
    for (const auto& s : d.samples) {
      for (char c : s.input) {
        if (oracle::Tree::arity(c) > 0) {
          freq[c] += 1;
          total += 1;
        }
      }
    }
    for (auto& [c, n] : freq) n /= total;
    return freq;
  };
  const auto prop = count_ops(gen_prop(1, FormulaSpec::prop(3, {3, 12}), 1000).data);
  for (char c : std::string("!&|=^")) {
    MESSAGE("prop " << c << " " << prop.at(c));
    CHECK(std::abs(prop.at(c) - 0.2) <= 0.2 * 0.2);
  }
  const auto ltl = count_ops(gen_ltl(1, FormulaSpec::ltl(3, {3, 12}), 1000).data);
  for (char c : std::string("!&XU")) {
    MESSAGE("ltl " << c << " " << ltl.at(c));
    CHECK(std::abs(ltl.at(c) - 0.25) <= 0.2 * 0.25);
  }
}

TEST_CASE("generators: exact AP counts and exhaustion warning") {
  FormulaSpec spec = FormulaSpec::prop(4, {3, 14});
  spec.exact_aps = true;
  for (const auto& s : gen_prop(2, spec, 50).data.samples) CHECK(oracle::letters_in(s.input).size() == 4);
  // Four distinct APs cannot fit in three nodes.
  FormulaSpec tiny = FormulaSpec::prop(4, {1, 3});
  tiny.exact_aps = true;
  const auto g = gen_prop(2, tiny, 5);
  CHECK(g.data.samples.empty());
  CHECK_FALSE(g.warning.empty());
  CHECK_THROWS_AS(gen_prop(1, FormulaSpec::ltl(3, {3, 5}), 1), ConfigError);
  CHECK_THROWS_AS(gen_ltl(1, FormulaSpec::prop(3, {3, 5}), 1), ConfigError);
}

TEST_CASE("checks are invariant under renaming propositions") {
  const std::vector<std::string> perms{"abc", "acb", "bac", "bca", "cab", "cba"};
  for (Task task : {Task::prop, Task::ltl}) {
    const auto spec = task == Task::prop ? FormulaSpec::prop(3, {3, 9}) : FormulaSpec::ltl(3, {3, 8});
    const auto d = task == Task::prop ? gen_prop(12, spec, 60).data : gen_ltl(12, spec, 60).data;
    std::size_t failures = 0, negatives = 0;
    for (const auto& s : d.samples) {
      // Also a likely-wrong target so both verdicts get exercised.
      std::string wrong = s.target;
      for (auto& c : wrong) {
        if (c == '0') c = '1';
        else if (c == '1') c = '0';
      }
      if (task == Task::ltl) wrong = "{" + std::string(s.input.find('a') != std::string::npos ? "!a" : "1") + "}";
      for (const std::string* target : {&s.target, static_cast<const std::string*>(&wrong)}) {
        const bool base = check_sample(task, s.input, *target);
        negatives += !base;
        for (const auto& p : perms) {
          if (check_sample(task, rename_text(s.input, p), rename_text(*target, p)) != base) ++failures;
        }
      }
    }
    CHECK(failures == 0);
    CHECK(negatives > 0);
  }
}

TEST_CASE("check_sample: malformed predictions are incorrect, malformed inputs are errors") {
  CHECK_FALSE(check_sample(Task::prop, "|ab", "a"));
  CHECK_FALSE(check_sample(Task::ltl, "a", "a;"));
  CHECK_FALSE(check_sample(Task::ltl, "a", "{&a!a}"));
  CHECK(check_sample(Task::ltl, "a", "{a}"));
  CHECK(check_sample(Task::copying, "abc", "abc"));
  CHECK_FALSE(check_sample(Task::copying, "abc", "abd"));
  CHECK_THROWS_AS(check_sample(Task::prop, "&a", "a1"), ParseError);
}

TEST_CASE("dataset file format round trip and errors") {
  Dataset d = gen_prop(3, FormulaSpec::prop(3, {3, 8}), 20).data;
  const std::string text = d.serialize();
  CHECK(text.rfind("#task=prop aps=3\n", 0) == 0);
  CHECK(Dataset::parse(text) == d);
  CHECK(Dataset::parse("#task=ltl aps=2\nXa\t{!a;a}\n").samples[0].target == "{!a;a}");
  CHECK_THROWS_AS(Dataset::parse(""), ParseError);
  CHECK_THROWS_AS(Dataset::parse("#task=foo aps=2\n"), ParseError);
  CHECK_THROWS_AS(Dataset::parse("#task=prop aps=x\n"), ParseError);
  CHECK_THROWS_AS(Dataset::parse("#task=prop aps=2\nab\n"), ParseError);
  CHECK_THROWS_AS(Dataset::parse("#task=prop aps=2\na\tb\tc\n"), ParseError);
  CHECK_THROWS_AS(parse_task("foo"), ConfigError);

  const auto vocab = task_vocabulary(3);
  const auto pairs = encode(d, vocab);
  REQUIRE(pairs.size() == d.samples.size());
  CHECK(vocab.decode(pairs[0].source) == d.samples[0].input);
}

TEST_CASE("perturbations: renamed is idempotent and keeps shapes, reduced keeps the fraction") {
  const Dataset d = gen_ltl(5, FormulaSpec::ltl(4, {3, 10}), 200).data;
  const Dataset r = perturb_renamed(d);
  CHECK(perturb_renamed(r) == r);
  std::multiset<std::string> before, after;
  for (const auto& s : d.samples) before.insert(shape_of(s.input) + "\t" + shape_of(s.target));
  for (const auto& s : r.samples) after.insert(shape_of(s.input) + "\t" + shape_of(s.target));
  CHECK(before == after);
  for (const auto& s : r.samples) CHECK(check_sample(Task::ltl, s.input, s.target));

  Dataset big;
  for (int i = 0; i < 800; ++i) big.samples.push_back({std::to_string(i), ""});
  const Dataset small = perturb_reduced(big, 0.1, 3);
  CHECK(small.samples.size() == 80);
  CHECK(std::is_sorted(small.samples.begin(), small.samples.end(),
                       [](const Sample& a, const Sample& b) { return std::stoi(a.input) < std::stoi(b.input); }));
  CHECK(perturb_reduced(big, 0.1, 3) == small);
  CHECK_FALSE(perturb_reduced(big, 0.1, 4) == small);
  CHECK(perturb_reduced(big, 1.0, 3) == big);
  CHECK_THROWS_AS(perturb_reduced(big, 1.5, 3), ConfigError);
}
