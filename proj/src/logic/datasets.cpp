#include "sit/logic/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sit/errors.hpp"

namespace sit::logic {

std::string task_name(Task t) {
  switch (t) {
    case Task::copying: return "copying";
    case Task::prop: return "prop";
    case Task::ltl: return "ltl";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "copying") return Task::copying;
  if (name == "prop") return Task::prop;
  if (name == "ltl") return Task::ltl;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected copying, prop or ltl)");
}

// ---------------------------------------------------------------- file format

std::string Dataset::serialize() const {
  std::string out = "#task=" + task_name(task) + " aps=" + std::to_string(aps) + "\n";
  for (const auto& s : samples) out += s.input + "\t" + s.target + "\n";
  return out;
}

Dataset Dataset::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset: missing header", 1);
  Dataset d;
  {
    const std::string task_key = "#task=", aps_key = " aps=";
    const auto sep = line.find(aps_key);
    if (line.rfind(task_key, 0) != 0 || sep == std::string::npos) {
      throw ParseError("dataset: header must read '#task=<name> aps=<n>'", 1);
    }
    try {
      d.task = parse_task(line.substr(task_key.size(), sep - task_key.size()));
    } catch (const ConfigError&) {
      throw ParseError("dataset: unknown task in header", 1);
    }
    const std::string n = line.substr(sep + aps_key.size());
    if (n.empty() || n.find_first_not_of("0123456789") != std::string::npos) {
      throw ParseError("dataset: aps must be a nonnegative integer", 1);
    }
    d.aps = std::stoul(n);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError("dataset: expected exactly one tab", line_no);
    }
    d.samples.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return d;
}

void Dataset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset " + path.string());
  out << serialize();
}

Dataset Dataset::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Vocabulary task_vocabulary(std::size_t aps) {
  if (aps > 26) throw ConfigError("at most 26 interchangeable letters");
  const Vocabulary full = Vocabulary::standard();
  std::vector<std::string> letters(full.interchangeable_tokens().begin(),
                                   full.interchangeable_tokens().begin() + static_cast<std::ptrdiff_t>(aps));
  return Vocabulary(full.base_tokens(), std::move(letters));
}

std::vector<SequencePair> encode(const Dataset& d, const Vocabulary& vocab) {
  std::vector<SequencePair> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back({vocab.encode(s.input), vocab.encode(s.target)});
  return out;
}

// ---------------------------------------------------------------- copying

Generated gen_copying(std::uint64_t seed, std::size_t vocab_size, std::pair<std::size_t, std::size_t> len_range,
                      std::size_t n, std::size_t first) {
  if (vocab_size == 0 || first + vocab_size > 26) throw ConfigError("copying alphabet must fit in a..z");
  if (len_range.first == 0 || len_range.first > len_range.second) throw ConfigError("copying: bad length range");
  std::mt19937_64 rng(seed);
  Generated g;
  g.data.task = Task::copying;
  g.data.aps = first + vocab_size;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = len_range.first + uniform_index(rng, len_range.second - len_range.first + 1);
    std::string s(len, 'a');
    for (auto& c : s) c = static_cast<char>('a' + first + uniform_index(rng, vocab_size));
    g.data.samples.push_back({s, s});
  }
  g.attempts = n;
  return g;
}

// ---------------------------------------------------------------- formulas

FormulaSpec FormulaSpec::prop(std::size_t aps, std::pair<std::size_t, std::size_t> size_range) {
  FormulaSpec s;
  s.aps = aps;
  s.size_range = size_range;
  s.ops = {{Op::Not, 1.0}, {Op::And, 1.0}, {Op::Or, 1.0}, {Op::Iff, 1.0}, {Op::Xor, 1.0}};
  return s;
}

FormulaSpec FormulaSpec::ltl(std::size_t aps, std::pair<std::size_t, std::size_t> size_range) {
  FormulaSpec s;
  s.aps = aps;
  s.size_range = size_range;
  s.ops = {{Op::Not, 1.0}, {Op::And, 1.0}, {Op::Next, 1.0}, {Op::Until, 1.0}};
  return s;
}

std::optional<Formula> random_formula(const FormulaSpec& spec, std::mt19937_64& rng) {
  if (spec.ops.empty()) throw ConfigError("formula spec needs at least one operator");
  if (spec.aps > 26) throw ConfigError("at most 26 propositions");
  const auto [lo, hi] = spec.size_range;
  if (lo == 0 || lo > hi) throw ConfigError("formula spec: bad size range");
  double total = 0.0;
  bool has_unary = false;
  for (const auto& [op, w] : spec.ops) {
    if (!(w > 0.0) || arity(op) == 0) throw ConfigError("formula spec: operators need positive arity and weight");
    total += w;
    has_unary |= arity(op) == 1;
  }
  if (!has_unary && lo == hi && lo % 2 == 0) throw ConfigError("formula spec: size unreachable with binary operators");

  auto pick_op = [&] {
    double r = uniform_unit(rng) * total;
    for (const auto& [op, w] : spec.ops) {
      if (r < w) return op;
      r -= w;
    }
    return spec.ops.back().first;
  };

  // Operator multiset; a binary draw may overshoot the target by one node.
  std::vector<Formula> symbols;
  std::size_t binaries = 0;
  while (true) {
    symbols.clear();
    binaries = 0;
    const std::size_t target = lo + uniform_index(rng, hi - lo + 1);
    while (symbols.size() + 1 + binaries < target) {
      const Op op = pick_op();
      binaries += arity(op) == 2;
      symbols.push_back({op, 0, {}});
    }
    if (symbols.size() + 1 + binaries <= hi) break;
  }
  for (std::size_t i = 0; i <= binaries; ++i) {
    symbols.push_back(spec.aps == 0 || uniform_unit(rng) < spec.true_leaf
                          ? Formula::constant(true)
                          : Formula::atom(static_cast<char>('a' + uniform_index(rng, spec.aps))));
  }
  for (std::size_t i = symbols.size(); i > 1; --i) std::swap(symbols[i - 1], symbols[uniform_index(rng, i)]);

  // Cycle lemma: with weight arity-1 per symbol the total is -1, and the
  // rotation starting after the first minimum prefix sum is the unique valid
  // Polish order.
  long sum = 0, best = 1;
  std::size_t start = 0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    sum += arity(symbols[i].op) - 1;
    if (sum < best) {
      best = sum;
      start = i + 1;
    }
  }
  std::rotate(symbols.begin(), symbols.begin() + static_cast<std::ptrdiff_t>(start % symbols.size()), symbols.end());

  std::size_t pos = 0;
  auto build = [&](auto&& self) -> Formula {
    Formula f = std::move(symbols[pos++]);
    for (int i = 0; i < arity(f.op); ++i) f.args.push_back(self(self));
    return f;
  };
  Formula f = build(build);
  if (spec.exact_aps && static_cast<std::size_t>(std::popcount(ap_mask(f))) != spec.aps) return std::nullopt;
  return f;
}

// ---------------------------------------------------------------- targets

std::optional<Assignment> minimal_assignment(const Formula& f) {
  const std::string names = ap_names(ap_mask(f));
  const std::size_t k = names.size();
  if (k > 20) throw ResourceError("minimal_assignment: more than 20 propositions");
  for (std::size_t size = 0; size <= k; ++size) {
    // Combinations of `size` indices in lexicographic order.
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      for (std::uint32_t pattern = 0; pattern < (1u << size); ++pattern) {
        Assignment a;
        for (std::size_t i = 0; i < size; ++i) a[names[idx[i]]] = (pattern >> (size - 1 - i)) & 1u;
        if (check_assignment(f, a)) return a;
      }
      std::size_t i = size;
      while (i > 0 && idx[i - 1] == k - size + i - 1) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return std::nullopt;
}

namespace {

class LassoSearch {
 public:
  LassoSearch(const Formula& f, const LassoSearchLimits& limits) : f_(f), limits_(limits) {
    const std::uint32_t mask = ap_mask(f);
    std::vector<int> bits;
    for (int i = 0; i < 26; ++i) {
      if (mask & (1u << i)) bits.push_back(i);
    }
    // Valuation index v sets AP j when bit (k-1-j) of v is set, so the
    // first AP varies slowest.
    const std::size_t k = bits.size();
    for (std::uint32_t v = 0; v < (1u << k); ++v) {
      std::uint32_t m = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if ((v >> (k - 1 - j)) & 1u) m |= 1u << bits[j];
      }
      vals_.push_back(m);
    }
  }

  std::optional<ConcreteTrace> run() {
    for (std::size_t n = 1; n <= limits_.max_prefix + limits_.max_cycle; ++n) {
      path_.clear();
      if (dfs(f_, n)) return found_;
      if (exhausted_) return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  bool dfs(const Formula& state, std::size_t n) {
    if (++nodes_ > limits_.node_budget) {
      exhausted_ = true;
      return false;
    }
    if (state.op == Op::False) return false;
    if (path_.size() == n) {
      const std::size_t lo = n > limits_.max_cycle ? n - limits_.max_cycle : 0;
      const std::size_t hi = std::min(limits_.max_prefix, n - 1);
      for (std::size_t j = lo; j <= hi; ++j) {
        ConcreteTrace t{{path_.begin(), path_.begin() + static_cast<std::ptrdiff_t>(j)},
                        {path_.begin() + static_cast<std::ptrdiff_t>(j), path_.end()}};
        if (eval_lasso(f_, t)) {
          found_ = std::move(t);
          return true;
        }
      }
      return false;
    }
    for (auto v : vals_) {
      path_.push_back(v);
      const bool ok = dfs(progress(state, v), n);
      path_.pop_back();
      if (ok) return true;
      if (exhausted_) return false;
    }
    return false;
  }

  const Formula& f_;
  LassoSearchLimits limits_;
  std::vector<std::uint32_t> vals_;
  std::vector<std::uint32_t> path_;
  ConcreteTrace found_;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
};

Generated generate_formulas(std::uint64_t seed, const FormulaSpec& spec, std::size_t n, Task task,
                            const LassoSearchLimits& limits) {
  std::mt19937_64 rng(seed);
  Generated g;
  g.data.task = task;
  g.data.aps = spec.aps;
  const std::size_t max_attempts = 1000 * std::max<std::size_t>(n, 1);
  while (g.data.samples.size() < n && g.attempts < max_attempts) {
    ++g.attempts;
    auto f = random_formula(spec, rng);
    if (!f) continue;  // outside the size range; not counted as a discard
    std::optional<std::string> target;
    if (task == Task::prop) {
      if (auto a = minimal_assignment(*f)) target = format_assignment(*a);
    } else if (auto t = find_lasso(*f, limits)) {
      target = format_trace(symbolic_from_concrete(*t, ap_mask(*f)));
    }
    const std::string input = unparse(*f);
    if (!target || !check_sample(task, input, *target)) {
      ++g.discarded;
      continue;
    }
    g.data.samples.push_back({input, *target});
  }
  if (g.data.samples.size() < n) {
    g.warning = "generated " + std::to_string(g.data.samples.size()) + " of " + std::to_string(n) +
                " samples after " + std::to_string(g.attempts) + " attempts";
  }
  return g;
}

}  // namespace

std::optional<ConcreteTrace> find_lasso(const Formula& f, const LassoSearchLimits& limits) {
  if (limits.max_cycle == 0) throw ConfigError("lasso search needs a positive cycle bound");
  return LassoSearch(f, limits).run();
}

Generated gen_prop(std::uint64_t seed, const FormulaSpec& spec, std::size_t n) {
  for (const auto& [op, w] : spec.ops) {
    if (!allowed(op, Dialect::prop)) throw ConfigError("operator not in the propositional language");
  }
  return generate_formulas(seed, spec, n, Task::prop, {});
}

Generated gen_ltl(std::uint64_t seed, const FormulaSpec& spec, std::size_t n, const LassoSearchLimits& limits) {
  for (const auto& [op, w] : spec.ops) {
    if (!allowed(op, Dialect::ltl)) throw ConfigError("operator not in the LTL language");
  }
  return generate_formulas(seed, spec, n, Task::ltl, limits);
}

// ---------------------------------------------------------------- perturbations

Dataset perturb_renamed(const Dataset& d) {
  const Vocabulary vocab = Vocabulary::standard();
  Dataset out{d.task, d.aps, {}};
  for (const auto& s : d.samples) {
    const auto c = canonicalize_first_appearance(vocab, {vocab.encode(s.input), vocab.encode(s.target)});
    out.samples.push_back({vocab.decode(c.pair.source), vocab.decode(c.pair.target)});
  }
  return out;
}

Dataset perturb_reduced(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("reduce fraction must lie in [0, 1]");
  const std::size_t total = d.samples.size();
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + uniform_index(rng, total - i)]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  Dataset out{d.task, d.aps, {}};
  for (auto i : idx) out.samples.push_back(d.samples[i]);
  return out;
}

// ---------------------------------------------------------------- checking

bool check_sample(Task task, std::string_view input, std::string_view target) {
  if (task == Task::copying) return input == target;
  const Formula f = task == Task::prop ? parse_prop(input) : parse_ltl(input);
  try {
    if (task == Task::prop) return check_assignment(f, parse_assignment(target));
    return check_symbolic_trace(f, parse_trace(target));
  } catch (const ContractError&) {
    return false;
  } catch (const ResourceError&) {
    return false;
  }
}

std::string shape_of(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'a' && c <= 'z') c = '?';
  }
  return out;
}

}  // namespace sit::logic
