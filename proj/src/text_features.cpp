// modfuse/text_features.cpp

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

#include "modfuse/text_features.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
}

}  // namespace

std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> out;
  std::string current;
  for (char raw : sentence) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (is_token_char(c)) {
      current.push_back(c);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& train_sentences) {
  if (train_sentences.empty())
    throw DataError("vocabulary: empty training corpus");
  Vocabulary v;
  v.tokens_ = {pad_token(), unk_token()};
  std::unordered_map<std::string, int> seen;
  seen.emplace(pad_token(), kPad);
  seen.emplace(unk_token(), kUnk);
  for (const std::string& sentence : train_sentences) {
    for (std::string& tok : tokenize(sentence)) {
      if (seen.emplace(tok, static_cast<int>(v.tokens_.size())).second)
        v.tokens_.push_back(std::move(tok));
    }
  }
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> ordered_tokens) {
  if (ordered_tokens.size() < 2 || ordered_tokens[0] != pad_token() ||
      ordered_tokens[1] != unk_token()) {
    throw DataError(
        "vocabulary: token list must start with the reserved <pad>, <unk> "
        "entries");
  }
  Vocabulary v;
  v.tokens_ = std::move(ordered_tokens);
  v.rebuild_index();
  return v;
}

void Vocabulary::rebuild_index() {
  sorted_index_.clear();
  sorted_index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    sorted_index_.emplace_back(tokens_[i], static_cast<int>(i));
  std::sort(sorted_index_.begin(), sorted_index_.end());
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = std::lower_bound(
      sorted_index_.begin(), sorted_index_.end(), token,
      [](const std::pair<std::string, int>& a, const std::string& b) {
        return a.first < b;
      });
  if (it != sorted_index_.end() && it->first == token) return it->second;
  return kUnk;
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(index_of(t));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("vocabulary: cannot write " + path);
  for (const std::string& t : tokens_) f << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("vocabulary: cannot read " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

namespace {

// Parses one "word v1 ... v300" line; 301 space-separated fields.
bool parse_glove_line(const std::string& line, std::string* word,
                      std::vector<double>* vec) {
  std::istringstream is(line);
  if (!(is >> *word)) return false;
  vec->clear();
  vec->reserve(EmbeddingTable::kDim);
  double x;
  while (is >> x) vec->push_back(x);
  return static_cast<int>(vec->size()) == EmbeddingTable::kDim;
}

}  // namespace

EmbeddingTable build_embeddings(const Vocabulary& vocab,
                                const std::string& glove_path, bool trainable,
                                Rng& rng, GloveLoadStats* stats) {
  const int v = vocab.size();
  const int e = EmbeddingTable::kDim;
  Tensor table = Tensor::normal({v, e}, 0.0, 0.1, rng, trainable);
  auto& values = table.values_mut();
  // Padding embeds to the zero vector; downstream masking keeps it inert.
  std::fill_n(values.begin(), e, 0.0);

  GloveLoadStats local;
  local.missing = v - 1;  // everything but <pad> starts as random init
  if (!glove_path.empty()) {
    std::ifstream f(glove_path, std::ios::binary);
    if (!f) throw DataError("glove: cannot read " + glove_path);
    std::unordered_map<std::string, int> wanted;
    for (int i = Vocabulary::kUnk + 1; i < v; ++i)
      wanted.emplace(vocab.tokens()[static_cast<std::size_t>(i)], i);
    std::string line, word;
    std::vector<double> vec;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (!parse_glove_line(line, &word, &vec))
        throw DataError("glove: line " + std::to_string(line_no) +
                        ": expected 301 space-separated fields");
      auto it = wanted.find(word);
      if (it == wanted.end()) continue;
      std::copy(vec.begin(), vec.end(),
                values.begin() + static_cast<std::size_t>(it->second) * e);
      ++local.found;
      --local.missing;
      wanted.erase(it);
    }
  }
  if (stats) *stats = local;
  return EmbeddingTable{std::move(table), trainable};
}

Tensor embed(const std::vector<int>& indices, const EmbeddingTable& table) {
  return embedding_lookup(table.table, indices);
}

}  // namespace modfuse
