#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iolab {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reserved ids. The order is part of the checkpoint format and never changes.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kStart = 2;
inline constexpr TokenId kEnd = 3;
inline constexpr TokenId kEos = 4;
inline constexpr TokenId kCount = 5;
}  // namespace special

/// Token/id bijection with corpus frequency counts.
///
/// Ids 0..4 are the special tokens; ordinary tokens follow in the order they
/// were supplied. Immutable once constructed.
class Vocabulary {
 public:
  struct Entry {
    std::string token;
    std::uint64_t frequency = 0;
  };

  /// Specials only.
  Vocabulary();

  /// Ordinary tokens in id order; throws on duplicates or tokens containing
  /// whitespace.
  explicit Vocabulary(std::vector<Entry> entries);

  std::size_t size() const { return tokens_.size(); }
  std::size_t ordinary_size() const { return tokens_.size() - special::kCount; }

  const std::string& token(TokenId id) const;
  std::uint64_t frequency(TokenId id) const;
  bool contains(std::string_view token) const;
  /// UNK for out-of-vocabulary tokens.
  TokenId id(std::string_view token) const;
  static bool is_special(TokenId id) { return id >= 0 && id < special::kCount; }

  TokenSeq encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  std::string join(std::span<const TokenId> ids) const;

  /// `token<TAB>frequency` per line, id order, specials omitted.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && frequencies_ == other.frequencies_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Sorts tokens by descending frequency (ties by first occurrence) and keeps
/// the `max_size` most frequent. Throws CorpusError("empty corpus").
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus, std::size_t max_size);

struct ParallelExample {
  TokenSeq source;
  TokenSeq target;

  bool operator==(const ParallelExample&) const = default;
};

enum class SyntheticKind { copy, reverse, sort, lexicon_translate };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticTaskSpec {
  SyntheticKind kind = SyntheticKind::copy;
  int vocab_size = 20;
  int min_len = 1;
  int max_len = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The synthetic task's token inventory: `vocab_size` pseudo-words of varied
/// length and case, independent of the task seed, all with frequency 0.
Vocabulary synthetic_vocabulary(int vocab_size);

/// Content ids are special::kCount .. special::kCount + vocab_size - 1.
/// Sources are uniform over those ids (with replacement), lengths uniform in
/// [min_len, max_len]. Pure function of (spec, n).
std::vector<ParallelExample> generate_synthetic(const SyntheticTaskSpec& spec, int n);

/// The lexicon-translate mapping over content ids, indexed by
/// id - special::kCount. Fisher-Yates (see Rng::shuffle) on a generator
/// seeded with the raw task seed.
std::vector<TokenId> lexicon_permutation(int vocab_size, std::uint64_t seed);

/// Copy of `vocab` with frequencies recounted from the target side of
/// `examples`.
Vocabulary with_target_frequencies(const Vocabulary& vocab, std::span<const ParallelExample> examples);

std::vector<std::string> split_whitespace(std::string_view line);

/// One example per line pair of two whitespace-tokenized files. OOV tokens map
/// to UNK. Throws CorpusError on unreadable files, line-count mismatch or an
/// empty line.
std::vector<ParallelExample> load_parallel(const std::filesystem::path& src_path,
                                           const std::filesystem::path& tgt_path,
                                           const Vocabulary& vocab);

void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   std::span<const ParallelExample> examples, const Vocabulary& vocab);

std::vector<std::vector<std::string>> read_tokenized(const std::filesystem::path& path);

}  // namespace iolab
