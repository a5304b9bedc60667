#pragma once

// Dataset generators for copying, propositional assignment and LTL witness
// tasks, the line format they share, and the renamed/reduced perturbations.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sit/logic/formula.hpp"
#include "sit/logic/semantics.hpp"
#include "sit/vocabulary.hpp"

namespace sit::logic {

enum class Task { copying, prop, ltl };

std::string task_name(Task t);
// Throws ConfigError on an unknown name.
Task parse_task(std::string_view name);

struct Sample {
  std::string input;
  std::string target;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  Task task = Task::copying;
  std::size_t aps = 0;  // size of the interchangeable alphabet in use
  std::vector<Sample> samples;

  // Header `#task=<name> aps=<n>`, then one `input\ttarget` line per sample.
  std::string serialize() const;
  // Throws ParseError (position = line number) on a malformed file.
  static Dataset parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path);

  bool operator==(const Dataset&) const = default;
};

// Standard base tokens with interchangeable letters a.. up to `aps` letters.
Vocabulary task_vocabulary(std::size_t aps);

std::vector<SequencePair> encode(const Dataset& d, const Vocabulary& vocab);

struct Generated {
  Dataset data;
  std::size_t attempts = 0;
  std::size_t discarded = 0;
  std::string warning;  // nonempty when fewer than the requested samples came out
};

// Strings over letters [first, first + vocab_size) with lengths in
// [min_len, max_len]; target equals source.
Generated gen_copying(std::uint64_t seed, std::size_t vocab_size, std::pair<std::size_t, std::size_t> len_range,
                      std::size_t n, std::size_t first = 0);

// Random formula shape controls. A target size is drawn uniformly from the
// range, operators are drawn i.i.d. by weight until the tree reaches it, and
// the operators and leaves are arranged into a uniformly random tree. Leaves
// are True with probability `true_leaf`, otherwise a uniform AP among the
// first `aps` letters.
struct FormulaSpec {
  std::size_t aps = 3;
  std::pair<std::size_t, std::size_t> size_range{3, 12};
  std::vector<std::pair<Op, double>> ops;
  double true_leaf = 0.05;
  // When set, keep only formulas mentioning exactly `aps` distinct APs.
  bool exact_aps = false;

  static FormulaSpec prop(std::size_t aps, std::pair<std::size_t, std::size_t> size_range);
  static FormulaSpec ltl(std::size_t aps, std::pair<std::size_t, std::size_t> size_range);
};

// One formula inside the size range, or nullopt when `exact_aps` rejects it.
std::optional<Formula> random_formula(const FormulaSpec& spec, std::mt19937_64& rng);

// Smallest partial assignment forcing f true. Subsets of f's APs are tried
// by size, then in lexicographic order of AP names, then by value pattern
// with 0 before 1 on the first AP. nullopt when f is unsatisfiable.
std::optional<Assignment> minimal_assignment(const Formula& f);

struct LassoSearchLimits {
  std::size_t max_prefix = 4;
  std::size_t max_cycle = 3;
  std::size_t node_budget = 200000;
};

// First satisfying concrete lasso by total length, then lexicographic over
// valuations of f's APs, then by prefix length. nullopt when none exists in
// bounds or the node budget runs out.
std::optional<ConcreteTrace> find_lasso(const Formula& f, const LassoSearchLimits& limits = {});

Generated gen_prop(std::uint64_t seed, const FormulaSpec& spec, std::size_t n);
Generated gen_ltl(std::uint64_t seed, const FormulaSpec& spec, std::size_t n,
                  const LassoSearchLimits& limits = {});

// Every pair relabelled by first appearance.
Dataset perturb_renamed(const Dataset& d);
// Deterministic subsample of round(fraction * size) samples in original order.
Dataset perturb_reduced(const Dataset& d, double fraction, std::uint64_t seed);

// Semantic check of a predicted target. Malformed, invalid or
// over-budget predictions are incorrect rather than errors.
bool check_sample(Task task, std::string_view input, std::string_view target);

// Formula text with every AP replaced by one placeholder.
std::string shape_of(std::string_view text);

}  // namespace sit::logic
