// modfuse/text_features.hpp

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

#ifndef MODFUSE_TEXT_FEATURES_HPP_
#define MODFUSE_TEXT_FEATURES_HPP_

#include <string>
#include <vector>

#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

// Lowercases and splits on anything outside [a-z0-9']. Apostrophes stay
// inside tokens; every other punctuation mark acts as a separator. Total:
// never fails, may return an empty list.
std::vector<std::string> tokenize(const std::string& sentence);

// Token -> dense index map with reserved padding and unknown entries.
// Built from the training split only; anything unseen encodes to kUnk.
class Vocabulary {
 public:
  Vocabulary() = default;  // empty until built or loaded

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static const char* pad_token() { return "<pad>"; }
  static const char* unk_token() { return "<unk>"; }

  // Indices are assigned in first-seen order over the tokenized sentences,
  // so rebuilding from the same corpus reproduces the same mapping.
  static Vocabulary build(const std::vector<std::string>& train_sentences);

  // Reconstructs a vocabulary from its persisted ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> ordered_tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // kUnk for out-of-vocabulary tokens.
  int index_of(const std::string& token) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  // Ordered token list, one per line.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::pair<std::string, int>> sorted_index_;  // binary search
  void rebuild_index();
};

// Trainable word embedding matrix, one 300-d row per vocabulary entry.
struct EmbeddingTable {
  static constexpr int kDim = 300;
  Tensor table;  // [|V|, 300]
  bool trainable = true;
};

struct GloveLoadStats {
  int found = 0;    // vocabulary tokens with a pretrained vector
  int missing = 0;  // vocabulary tokens falling back to random init
};

// Builds the table for a vocabulary. Rows are N(0, 0.1^2) unless a GloVe
// text file ("word v1 ... v300" per line) provides them; the padding row is
// always the zero vector. An empty glove_path skips file lookup entirely.
EmbeddingTable build_embeddings(const Vocabulary& vocab,
                                const std::string& glove_path, bool trainable,
                                Rng& rng, GloveLoadStats* stats = nullptr);

// Row t of the result is the table row for indices[t] -> [T, 300].
Tensor embed(const std::vector<int>& indices, const EmbeddingTable& table);

}  // namespace modfuse

#endif  // MODFUSE_TEXT_FEATURES_HPP_
