// tests/test_text_features.cpp

// Copyright 2026  The modfuse authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "modfuse/text_features.hpp"
#include "support.hpp"

using namespace modfuse;

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("Hello, World!") ==
        std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("don't STOP!!") ==
        std::vector<std::string>{"don't", "stop"});
}

TEST_CASE("tokenize character classes, exhaustively") {
  // Every byte is either kept (as its lowercase form) or acts as a
  // separator; walking the full byte range pins the contract.
  for (int b = 1; b < 256; ++b) {
    const char c = static_cast<char>(b);
    const std::string s = std::string("x") + c + "y";
    const auto toks = tokenize(s);
    const bool keeps = (b >= 'a' && b <= 'z') || (b >= 'A' && b <= 'Z') ||
                       (b >= '0' && b <= '9') || b == '\'';
    if (keeps) {
      REQUIRE(toks.size() == 1);
      CHECK(toks[0].size() == 3);
    } else {
      REQUIRE(toks.size() == 2);
      CHECK(toks[0] == "x");
      CHECK(toks[1] == "y");
    }
  }
}

TEST_CASE("vocabulary assigns first-seen indices after the reserved pair") {
  Vocabulary v = Vocabulary::build({"a b", "b c"});
  CHECK(v.size() == 5);
  CHECK(v.index_of(Vocabulary::pad_token()) == Vocabulary::kPad);
  CHECK(v.index_of(Vocabulary::unk_token()) == Vocabulary::kUnk);
  CHECK(v.index_of("a") == 2);
  CHECK(v.index_of("b") == 3);
  CHECK(v.index_of("c") == 4);
}

TEST_CASE("vocabulary deduplicates and rebuilds deterministically") {
  Vocabulary v = Vocabulary::build({"a a a"});
  CHECK(v.size() == 3);
  Vocabulary w = Vocabulary::build({"a a a"});
  CHECK(v.tokens() == w.tokens());
  CHECK_THROWS_AS(Vocabulary::build({}), Error);
}

TEST_CASE("encode maps out-of-vocabulary tokens to unk") {
  Vocabulary v = Vocabulary::build({"a b"});
  CHECK(v.encode({"a", "zzz"}) ==
        std::vector<int>{v.index_of("a"), Vocabulary::kUnk});
  CHECK(v.encode({}).empty());
  const auto known = v.encode({"a", "b", "a"});
  for (int idx : known) CHECK(idx != Vocabulary::kUnk);
}

TEST_CASE("encode of tokenize is total over arbitrary bytes") {
  Vocabulary v = Vocabulary::build({"seed words only"});
  Rng rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    std::string junk;
    const int len = rng.uniform_int(0, 40);
    for (int i = 0; i < len; ++i)
      junk.push_back(static_cast<char>(rng.uniform_int(1, 255)));
    const auto ids = v.encode(tokenize(junk));
    for (int idx : ids) {
      CHECK(idx >= 0);
      CHECK(idx < v.size());
    }
  }
}

TEST_CASE("validation tokens never enlarge the vocabulary") {
  Vocabulary v = Vocabulary::build({"train sentence here"});
  const int size_before = v.size();
  (void)v.encode(tokenize("completely unseen validation words"));
  (void)v.encode(tokenize("and test split words too"));
  CHECK(v.size() == size_before);
}

TEST_CASE("vocabulary persists as an ordered token list") {
  testsupport::TempDir dir("vocab");
  Vocabulary v = Vocabulary::build({"delta alpha", "alpha beta"});
  const std::string path = dir.file("vocab.txt");
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.tokens() == v.tokens());
  CHECK(loaded.index_of("delta") == v.index_of("delta"));
}

TEST_CASE("embeddings gather table rows") {
  Rng rng(5);
  Vocabulary v = Vocabulary::build({"one two three"});
  EmbeddingTable table = build_embeddings(v, "", true, rng);
  REQUIRE(table.table.rows() == v.size());
  REQUIRE(table.table.cols() == 300);

  const int idx = v.index_of("two");
  Tensor single = embed({idx}, table);
  CHECK(single.rows() == 1);
  CHECK(single.cols() == 300);
  for (int j = 0; j < 300; ++j)
    CHECK(single.at(0, j) == table.table.at(idx, j));

  Tensor repeated = embed({idx, idx}, table);
  for (int j = 0; j < 300; ++j)
    CHECK(repeated.at(0, j) == repeated.at(1, j));
}

TEST_CASE("embed matches a per-element gather oracle") {
  Rng rng(6);
  Vocabulary v = Vocabulary::build({"a b c d e f g"});
  EmbeddingTable table = build_embeddings(v, "", true, rng);
  std::vector<int> ids;
  for (int i = 0; i < 12; ++i) ids.push_back(rng.uniform_int(0, v.size() - 1));
  Tensor out = embed(ids, table);
  CHECK(out.rows() == static_cast<int>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (int j = 0; j < 300; ++j)
      CHECK(out.at(static_cast<int>(t), j) == table.table.at(ids[t], j));
  CHECK_THROWS_AS(embed({v.size()}, table), Error);
}

TEST_CASE("padding embeds to the zero vector") {
  Rng rng(7);
  Vocabulary v = Vocabulary::build({"something"});
  EmbeddingTable table = build_embeddings(v, "", true, rng);
  Tensor pad = embed({Vocabulary::kPad}, table);
  for (int j = 0; j < 300; ++j) CHECK(pad.at(0, j) == 0.0);
}

TEST_CASE("glove file rows override random initialization") {
  testsupport::TempDir dir("glove");
  const std::string path = dir.file("vectors.txt");
  {
    std::ofstream f(path);
    f << "known";
    for (int i = 0; i < 300; ++i) f << " " << (i * 0.01);
    f << "\n";
    f << "irrelevant";
    for (int i = 0; i < 300; ++i) f << " 9.9";
    f << "\n";
  }
  Rng rng(8);
  Vocabulary v = Vocabulary::build({"known unknown"});
  GloveLoadStats stats;
  EmbeddingTable table = build_embeddings(v, path, true, rng, &stats);
  CHECK(stats.found == 1);
  CHECK(stats.missing == 2);  // "unknown" and the unk token itself
  const int idx = v.index_of("known");
  for (int j = 0; j < 5; ++j)
    CHECK(table.table.at(idx, j) == doctest::Approx(j * 0.01));
}

TEST_CASE("malformed glove lines are a data error") {
  testsupport::TempDir dir("glove_bad");
  const std::string path = dir.file("vectors.txt");
  {
    std::ofstream f(path);
    f << "short 1.0 2.0 3.0\n";
  }
  Rng rng(9);
  Vocabulary v = Vocabulary::build({"short"});
  CHECK_THROWS_AS(build_embeddings(v, path, true, rng), DataError);
}
