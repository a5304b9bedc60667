#include "sit/vocabulary.hpp"

#include <algorithm>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sit/errors.hpp"

namespace sit {

Vocabulary::Vocabulary(std::vector<std::string> base, std::vector<std::string> interchangeable)
    : base_(std::move(base)), interchangeable_(std::move(interchangeable)) {
  if (base_.size() < 3) throw VocabularyError("base vocabulary must hold PAD, SOS and EOS");
  TokenId next = 0;
  for (const auto* list : {&base_, &interchangeable_}) {
    for (const auto& s : *list) {
      if (s.empty()) throw VocabularyError("empty token surface form");
      if (!ids_.emplace(s, next).second) throw VocabularyError("duplicate token '" + s + "'");
      ++next;
    }
  }
}

Vocabulary Vocabulary::standard() {
  std::vector<std::string> base{"<pad>", "<sos>", "<eos>", "0", "1", "!", "&", "|",
                                "=",     "^",     "X",     "U", ";", "{", "}"};
  std::vector<std::string> letters;
  for (char c = 'a'; c <= 'z'; ++c) letters.emplace_back(1, c);
  return Vocabulary(std::move(base), std::move(letters));
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  out << "[base]\n";
  for (const auto& s : base_) out << s << '\n';
  out << "[interchangeable]\n";
  for (const auto& s : interchangeable_) out << s << '\n';
  return out.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> base, inter;
  std::vector<std::string>* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "[base]") {
      section = &base;
    } else if (line == "[interchangeable]") {
      section = &inter;
    } else if (section == nullptr) {
      throw VocabularyError("vocabulary text must start with a [base] section");
    } else {
      section->push_back(line);
    }
  }
  return Vocabulary(std::move(base), std::move(inter));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw VocabularyError("cannot open vocabulary file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw VocabularyError("cannot write vocabulary file " + path.string());
  out << serialize();
}

void Vocabulary::check(TokenId id) const {
  if (!contains(id)) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(size()));
  }
}

TokenId Vocabulary::id_of(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  if (it == ids_.end()) throw VocabularyError("unknown token '" + std::string(surface) + "'");
  return it->second;
}

const std::string& Vocabulary::surface(TokenId id) const {
  check(id);
  const auto n = static_cast<TokenId>(base_.size());
  return id < n ? base_[id] : interchangeable_[id - n];
}

Sequence Vocabulary::encode(std::string_view text) const {
  Sequence out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id_of(std::string_view(&c, 1)));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad || id == kSos || id == kEos) continue;
    out += surface(id);
  }
  return out;
}

AlphaRenaming::AlphaRenaming(std::size_t base_size, std::vector<std::size_t> image)
    : base_size_(base_size), image_(std::move(image)) {
  std::vector<bool> seen(image_.size(), false);
  for (std::size_t v : image_) {
    if (v >= image_.size() || seen[v]) throw ContractError("alpha-renaming is not a bijection");
    seen[v] = true;
  }
}

AlphaRenaming AlphaRenaming::identity(const Vocabulary& vocab) {
  std::vector<std::size_t> image(vocab.interchangeable_size());
  std::iota(image.begin(), image.end(), std::size_t{0});
  return AlphaRenaming(vocab.base_size(), std::move(image));
}

AlphaRenaming AlphaRenaming::random(const Vocabulary& vocab, std::mt19937_64& rng) {
  std::vector<std::size_t> image(vocab.interchangeable_size());
  std::iota(image.begin(), image.end(), std::size_t{0});
  // Fisher-Yates with the portable index draw.
  for (std::size_t i = image.size(); i > 1; --i) {
    std::swap(image[i - 1], image[uniform_index(rng, i)]);
  }
  return AlphaRenaming(vocab.base_size(), std::move(image));
}

AlphaRenaming AlphaRenaming::swap(const Vocabulary& vocab, TokenId a, TokenId b) {
  if (!vocab.is_interchangeable(a) || !vocab.is_interchangeable(b)) {
    throw ContractError("swap renaming needs two interchangeable ids");
  }
  auto r = identity(vocab);
  const std::size_t n = vocab.base_size();
  std::swap(r.image_[a - n], r.image_[b - n]);
  return r;
}

TokenId AlphaRenaming::apply(TokenId id) const noexcept {
  const auto n = static_cast<TokenId>(base_size_);
  if (id < n || id >= n + static_cast<TokenId>(image_.size())) return id;
  return n + static_cast<TokenId>(image_[id - n]);
}

AlphaRenaming AlphaRenaming::inverse() const {
  std::vector<std::size_t> inv(image_.size());
  for (std::size_t j = 0; j < image_.size(); ++j) inv[image_[j]] = j;
  return AlphaRenaming(base_size_, std::move(inv));
}

bool AlphaRenaming::is_identity() const noexcept {
  for (std::size_t j = 0; j < image_.size(); ++j) {
    if (image_[j] != j) return false;
  }
  return true;
}

Sequence apply_renaming(const AlphaRenaming& f, std::span<const TokenId> s) {
  Sequence out(s.size());
  std::transform(s.begin(), s.end(), out.begin(), [&](TokenId id) { return f.apply(id); });
  return out;
}

CanonicalPair canonicalize_first_appearance(const Vocabulary& vocab, const SequencePair& pair) {
  const std::size_t n = vocab.base_size();
  const std::size_t count = vocab.interchangeable_size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> image(count, kUnset);
  std::vector<bool> used(count, false);
  std::size_t next = 0;
  for (const Sequence* seq : {&pair.target, &pair.source}) {
    for (TokenId id : *seq) {
      vocab.check(id);
      if (!vocab.is_interchangeable(id)) continue;
      const std::size_t j = static_cast<std::size_t>(id) - n;
      if (image[j] == kUnset) {
        image[j] = next;
        used[next] = true;
        ++next;
      }
    }
  }
  std::size_t fill = 0;
  for (std::size_t j = 0; j < count; ++j) {
    if (image[j] != kUnset) continue;
    while (used[fill]) ++fill;
    image[j] = fill;
    used[fill] = true;
  }
  AlphaRenaming f(n, std::move(image));
  return {{apply_renaming(f, pair.source), apply_renaming(f, pair.target)}, std::move(f)};
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw ContractError("uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace sit
