#include "iolab/corpus.hpp"

#include <cctype>
#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "iolab/rng.hpp"

namespace iolab {
namespace {

constexpr std::string_view kSpecialNames[special::kCount] = {"<pad>", "<unk>", "<s>", "</s>", "<eos>"};

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read " + path.string());
  return in;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<Entry>{}) {}

Vocabulary::Vocabulary(std::vector<Entry> entries) {
  tokens_.reserve(entries.size() + special::kCount);
  frequencies_.reserve(entries.size() + special::kCount);
  for (auto name : kSpecialNames) {
    ids_.emplace(std::string(name), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(name);
    frequencies_.push_back(0);
  }
  for (auto& e : entries) {
    if (e.token.empty() || has_space(e.token)) throw CorpusError("invalid token '" + e.token + "'");
    auto [it, inserted] = ids_.emplace(e.token, static_cast<TokenId>(tokens_.size()));
    if (!inserted) throw CorpusError("duplicate token '" + e.token + "'");
    tokens_.push_back(std::move(e.token));
    frequencies_.push_back(e.frequency);
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw CorpusError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::frequency(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw CorpusError("token id out of range");
  return frequencies_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? special::kUnk : it->second;
}

TokenSeq Vocabulary::encode(std::span<const std::string> tokens) const {
  TokenSeq ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token(id));
  return out;
}

std::string Vocabulary::join(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (std::size_t i = special::kCount; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << frequencies_[i] << '\n';
  if (!out) throw CorpusError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": expected token<TAB>frequency");
    }
    Entry e;
    e.token = line.substr(0, tab);
    try {
      std::size_t used = 0;
      const std::string count = line.substr(tab + 1);
      e.frequency = std::stoull(count, &used);
      if (used != count.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": bad frequency");
    }
    entries.push_back(std::move(e));
  }
  return Vocabulary(std::move(entries));
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus, std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Vocabulary::Entry> entries;  // first-occurrence order
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) {
      auto [it, inserted] = index.emplace(tok, entries.size());
      if (inserted) entries.push_back({tok, 0});
      ++entries[it->second].frequency;
    }
  }
  if (entries.empty()) throw CorpusError("empty corpus");
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
  if (entries.size() > max_size) entries.resize(max_size);
  return Vocabulary(std::move(entries));
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::copy: return "copy";
    case SyntheticKind::reverse: return "reverse";
    case SyntheticKind::sort: return "sort";
    case SyntheticKind::lexicon_translate: return "lexicon-translate";
  }
  return "?";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  for (auto k : {SyntheticKind::copy, SyntheticKind::reverse, SyntheticKind::sort, SyntheticKind::lexicon_translate}) {
    if (to_string(k) == name) return k;
  }
  throw CorpusError("unknown task kind '" + std::string(name) + "' (copy, reverse, sort, lexicon-translate)");
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 2) throw CorpusError("vocab_size must be at least 2");
  if (min_len < 1 || min_len > max_len) throw CorpusError("require 1 <= min_len <= max_len");
}

Vocabulary synthetic_vocabulary(int vocab_size) {
  if (vocab_size < 1) throw CorpusError("vocab_size must be positive");
  Rng rng(0x1A7B5EEDull);
  std::unordered_set<std::string> seen;
  std::vector<Vocabulary::Entry> entries;
  while (static_cast<int>(entries.size()) < vocab_size) {
    const auto len = 1 + rng.below(7);
    std::string word;
    for (std::uint64_t i = 0; i < len; ++i) word += static_cast<char>('a' + rng.below(26));
    if (rng.below(4) == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
    if (seen.insert(word).second) entries.push_back({word, 0});
  }
  return Vocabulary(std::move(entries));
}

std::vector<TokenId> lexicon_permutation(int vocab_size, std::uint64_t seed) {
  std::vector<TokenId> perm(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) perm[static_cast<std::size_t>(i)] = special::kCount + i;
  Rng rng(seed);
  rng.shuffle(std::span<TokenId>(perm));
  return perm;
}

std::vector<ParallelExample> generate_synthetic(const SyntheticTaskSpec& spec, int n) {
  spec.validate();
  if (n < 1) throw CorpusError("n must be at least 1");
  std::vector<TokenId> perm;
  if (spec.kind == SyntheticKind::lexicon_translate) perm = lexicon_permutation(spec.vocab_size, spec.seed);

  Rng rng(derive_seed(spec.seed, 1));
  const auto span = static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1);
  std::vector<ParallelExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const auto len = static_cast<std::size_t>(spec.min_len) + rng.below(span);
    ParallelExample ex;
    ex.source.resize(len);
    for (auto& t : ex.source) {
      t = special::kCount + static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(spec.vocab_size)));
    }
    switch (spec.kind) {
      case SyntheticKind::copy:
        ex.target = ex.source;
        break;
      case SyntheticKind::reverse:
        ex.target.assign(ex.source.rbegin(), ex.source.rend());
        break;
      case SyntheticKind::sort:
        ex.target = ex.source;
        std::sort(ex.target.begin(), ex.target.end());
        break;
      case SyntheticKind::lexicon_translate:
        ex.target.reserve(len);
        for (TokenId t : ex.source) ex.target.push_back(perm[static_cast<std::size_t>(t - special::kCount)]);
        break;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Vocabulary with_target_frequencies(const Vocabulary& vocab, std::span<const ParallelExample> examples) {
  std::vector<std::uint64_t> counts(vocab.size(), 0);
  for (const auto& ex : examples) {
    for (TokenId t : ex.target) {
      if (t >= 0 && static_cast<std::size_t>(t) < counts.size()) ++counts[static_cast<std::size_t>(t)];
    }
  }
  std::vector<Vocabulary::Entry> entries;
  for (std::size_t i = special::kCount; i < vocab.size(); ++i) {
    entries.push_back({vocab.token(static_cast<TokenId>(i)), counts[i]});
  }
  return Vocabulary(std::move(entries));
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::vector<std::string>> read_tokenized(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_whitespace(line));
  return out;
}

std::vector<ParallelExample> load_parallel(const std::filesystem::path& src_path,
                                           const std::filesystem::path& tgt_path,
                                           const Vocabulary& vocab) {
  const auto src = read_tokenized(src_path);
  const auto tgt = read_tokenized(tgt_path);
  if (src.size() != tgt.size()) {
    throw CorpusError("line count mismatch: " + src_path.string() + " has " + std::to_string(src.size()) + ", " +
                      tgt_path.string() + " has " + std::to_string(tgt.size()));
  }
  std::vector<ParallelExample> out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty()) throw CorpusError("empty sentence at line " + std::to_string(i + 1));
    out.push_back({vocab.encode(src[i]), vocab.encode(tgt[i])});
  }
  return out;
}

void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   std::span<const ParallelExample> examples, const Vocabulary& vocab) {
  std::ofstream src(src_path, std::ios::binary), tgt(tgt_path, std::ios::binary);
  if (!src) throw CorpusError("cannot write " + src_path.string());
  if (!tgt) throw CorpusError("cannot write " + tgt_path.string());
  for (const auto& ex : examples) {
    src << vocab.join(ex.source) << '\n';
    tgt << vocab.join(ex.target) << '\n';
  }
}

}  // namespace iolab
