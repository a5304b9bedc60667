#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sit {

using TokenId = int;
using Sequence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kSos = 1;
inline constexpr TokenId kEos = 2;

// Token id space: [0, base_size) fixed-identity tokens, then the
// interchangeable ids [base_size, base_size + interchangeable_size). The
// embedding table has base_size + 2 rows: the base tokens, then the shared
// "actual" and "placeholder" rows.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> base, std::vector<std::string> interchangeable);

  // PAD/SOS/EOS, value constants, logic operators and trace delimiters as
  // base tokens; the 26 lowercase letters as interchangeable tokens.
  static Vocabulary standard();

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  std::size_t base_size() const noexcept { return base_.size(); }
  std::size_t interchangeable_size() const noexcept { return interchangeable_.size(); }
  std::size_t size() const noexcept { return base_.size() + interchangeable_.size(); }
  std::size_t embedding_rows() const noexcept { return base_.size() + 2; }
  std::size_t actual_row() const noexcept { return base_.size(); }
  std::size_t placeholder_row() const noexcept { return base_.size() + 1; }

  bool is_interchangeable(TokenId id) const noexcept {
    return id >= static_cast<TokenId>(base_.size()) && id < static_cast<TokenId>(size());
  }
  bool contains(TokenId id) const noexcept { return id >= 0 && id < static_cast<TokenId>(size()); }
  // Throws VocabularyError when the id is outside the token space.
  void check(TokenId id) const;

  TokenId id_of(std::string_view surface) const;
  const std::string& surface(TokenId id) const;

  // One token per character; throws VocabularyError on unknown characters.
  Sequence encode(std::string_view text) const;
  // Inverse of encode; PAD/SOS/EOS are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& base_tokens() const noexcept { return base_; }
  const std::vector<std::string>& interchangeable_tokens() const noexcept {
    return interchangeable_;
  }

  bool operator==(const Vocabulary& other) const {
    return base_ == other.base_ && interchangeable_ == other.interchangeable_;
  }

 private:
  std::vector<std::string> base_;
  std::vector<std::string> interchangeable_;
  std::unordered_map<std::string, TokenId> ids_;
};

// A bijection on token ids that fixes every base id and permutes the
// interchangeable ids.
class AlphaRenaming {
 public:
  // image[j] is the interchangeable index that index j maps to.
  AlphaRenaming(std::size_t base_size, std::vector<std::size_t> image);

  static AlphaRenaming identity(const Vocabulary& vocab);
  static AlphaRenaming random(const Vocabulary& vocab, std::mt19937_64& rng);
  static AlphaRenaming swap(const Vocabulary& vocab, TokenId a, TokenId b);

  TokenId apply(TokenId id) const noexcept;
  AlphaRenaming inverse() const;
  bool is_identity() const noexcept;

  std::size_t base_size() const noexcept { return base_size_; }
  const std::vector<std::size_t>& image() const noexcept { return image_; }

  bool operator==(const AlphaRenaming&) const = default;

 private:
  std::size_t base_size_;
  std::vector<std::size_t> image_;
};

Sequence apply_renaming(const AlphaRenaming& f, std::span<const TokenId> s);

struct SequencePair {
  Sequence source;
  Sequence target;
  bool operator==(const SequencePair&) const = default;
};

struct CanonicalPair {
  SequencePair pair;
  AlphaRenaming renaming;  // maps the input pair to `pair`
};

// Relabels interchangeable ids so their first appearances, scanning the
// target and then the source, use ascending ids starting at base_size.
// Unused ids fill the remaining slots in ascending order.
CanonicalPair canonicalize_first_appearance(const Vocabulary& vocab, const SequencePair& pair);

// Uniform integer in [0, n) from a 64-bit engine; platform independent.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);
double uniform_unit(std::mt19937_64& rng);

}  // namespace sit
