#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "doctest.h"
#include "iolab/corpus.hpp"
#include "support/oracles.hpp"

using namespace iolab;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("iolab_corpus_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("specials occupy the lowest ids") {
  const Vocabulary v;
  CHECK(v.size() == 5);
  CHECK(v.token(special::kPad) == "<pad>");
  CHECK(v.token(special::kUnk) == "<unk>");
  CHECK(v.token(special::kStart) == "<s>");
  CHECK(v.token(special::kEnd) == "</s>");
  CHECK(v.token(special::kEos) == "<eos>");
  for (TokenId t = 0; t < special::kCount; ++t) CHECK(v.frequency(t) == 0);
}

TEST_CASE("build_vocabulary sorts by frequency, ties by first occurrence") {
  const std::vector<std::vector<std::string>> corpus{{"a", "b", "a"}};
  const auto v = build_vocabulary(corpus, 10);
  CHECK(v.frequency(v.id("a")) == 2);
  CHECK(v.frequency(v.id("b")) == 1);
  CHECK(v.id("a") < v.id("b"));

  const std::vector<std::vector<std::string>> ties{{"z", "y"}, {"x", "y", "x", "z"}};
  const auto t = build_vocabulary(ties, 10);
  CHECK(t.token(5) == "z");
  CHECK(t.token(6) == "y");
  CHECK(t.token(7) == "x");

  const auto small = build_vocabulary(ties, 2);
  CHECK(small.ordinary_size() == 2);
  CHECK(small.id("x") == special::kUnk);
}

TEST_CASE("build_vocabulary rejects an empty corpus") {
  std::vector<std::vector<std::string>> empty;
  CHECK_THROWS_WITH_AS(build_vocabulary(empty, 10), "empty corpus", CorpusError);
}

TEST_CASE("encode/decode round trip, OOV maps to UNK") {
  const std::vector<std::vector<std::string>> corpus{{"the", "man", "ate", "a", "snack"}};
  const auto v = build_vocabulary(corpus, 100);
  const std::vector<std::string> s{"a", "man", "ate", "the", "snack"};
  CHECK(v.decode(v.encode(s)) == s);
  const std::vector<std::string> oov{"the", "dog"};
  CHECK(v.encode(oov)[1] == special::kUnk);
}

TEST_CASE("vocabulary file round trip") {
  const auto dir = temp_dir("vocab");
  const std::vector<std::vector<std::string>> corpus{{"b", "a", "b", "Ünï"}};
  const auto v = build_vocabulary(corpus, 100);
  v.save(dir / "vocab.tsv");
  CHECK(Vocabulary::load(dir / "vocab.tsv") == v);
  write(dir / "bad.tsv", "word\n");
  CHECK_THROWS_AS(Vocabulary::load(dir / "bad.tsv"), CorpusError);
}

TEST_CASE("synthetic tasks") {
  SUBCASE("copy, reverse and sort targets") {
    for (auto kind : {SyntheticKind::copy, SyntheticKind::reverse, SyntheticKind::sort}) {
      const auto data = generate_synthetic({kind, 20, 1, 10, 5}, 200);
      for (const auto& ex : data) {
        auto expected = ex.source;
        if (kind == SyntheticKind::reverse) std::reverse(expected.begin(), expected.end());
        if (kind == SyntheticKind::sort) std::sort(expected.begin(), expected.end());
        CHECK(ex.target == expected);
        CHECK(ex.source.size() >= 1);
        CHECK(ex.source.size() <= 10);
        for (TokenId t : ex.source) {
          CHECK(t >= special::kCount);
          CHECK(t < special::kCount + 20);
        }
      }
    }
  }
  SUBCASE("lexicon-translate matches an independent permutation") {
    const auto perm = testing::reference_permutation(30, 3);
    CHECK(lexicon_permutation(30, 3) == perm);
    const auto data = generate_synthetic({SyntheticKind::lexicon_translate, 30, 1, 6, 3}, 100);
    for (const auto& ex : data) {
      REQUIRE(ex.target.size() == ex.source.size());
      for (std::size_t i = 0; i < ex.source.size(); ++i) {
        CHECK(ex.target[i] == perm[static_cast<std::size_t>(ex.source[i] - special::kCount)]);
      }
    }
  }
  SUBCASE("pure function of spec and n") {
    const SyntheticTaskSpec spec{SyntheticKind::sort, 50, 3, 10, 7};
    CHECK(generate_synthetic(spec, 300) == generate_synthetic(spec, 300));
    CHECK(generate_synthetic(spec, 300) != generate_synthetic({SyntheticKind::sort, 50, 3, 10, 8}, 300));
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(generate_synthetic({SyntheticKind::copy, 1, 1, 5, 0}, 10), CorpusError);
    CHECK_THROWS_AS(generate_synthetic({SyntheticKind::copy, 10, 4, 3, 0}, 10), CorpusError);
    CHECK_THROWS_AS(generate_synthetic({SyntheticKind::copy, 10, 0, 3, 0}, 10), CorpusError);
    CHECK_THROWS_AS(parse_synthetic_kind("shuffle"), CorpusError);
    CHECK(parse_synthetic_kind("lexicon-translate") == SyntheticKind::lexicon_translate);
  }
}

TEST_CASE("synthetic vocabulary words are distinct and target frequencies match a recount") {
  const auto vocab = synthetic_vocabulary(50);
  CHECK(vocab.ordinary_size() == 50);
  const auto data = generate_synthetic({SyntheticKind::sort, 50, 3, 10, 7}, 1000);
  const auto counted = with_target_frequencies(vocab, data);
  std::unordered_map<TokenId, std::uint64_t> recount;
  for (const auto& ex : data) {
    for (TokenId t : ex.target) ++recount[t];
  }
  for (TokenId t = special::kCount; t < static_cast<TokenId>(counted.size()); ++t) {
    CHECK(counted.token(t) == vocab.token(t));
    CHECK(counted.frequency(t) == recount[t]);
  }
}

TEST_CASE("load_parallel") {
  const auto dir = temp_dir("parallel");
  const std::vector<std::vector<std::string>> corpus{{"a", "b", "c"}};
  const auto v = build_vocabulary(corpus, 10);
  write(dir / "src.txt", "a b\nc  a\n");
  write(dir / "tgt.txt", "b\nq c\n");
  const auto data = load_parallel(dir / "src.txt", dir / "tgt.txt", v);
  REQUIRE(data.size() == 2);
  CHECK(data[1].source == TokenSeq{v.id("c"), v.id("a")});
  CHECK(data[1].target == TokenSeq{special::kUnk, v.id("c")});

  save_parallel(dir / "s2.txt", dir / "t2.txt", data, v);
  CHECK(load_parallel(dir / "s2.txt", dir / "t2.txt", v) == data);

  write(dir / "short.txt", "b\n");
  CHECK_THROWS_AS(load_parallel(dir / "src.txt", dir / "short.txt", v), CorpusError);
  CHECK_THROWS_AS(load_parallel(dir / "missing.txt", dir / "tgt.txt", v), CorpusError);
}
