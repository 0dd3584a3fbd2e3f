// modfuse/model.hpp

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

#ifndef MODFUSE_MODEL_HPP_
#define MODFUSE_MODEL_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modfuse/encoders.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"
#include "modfuse/text_features.hpp"

namespace modfuse {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// The full classifier: word embeddings, one LSTM per modality, the variant
// encoder, attention-reduce pooling and the fused projection.
struct Model {
  ModelConfig cfg;
  EmbeddingTable embedding;
  LstmParams lstm_text, lstm_audio;
  std::vector<TransformerBlockParams> tower_text, tower_audio;
  std::optional<FilmParams> film;
  ReduceParams reduce_text, reduce_audio;
  ProjectionParams projection;

  static Model init(const ModelConfig& cfg, int vocab_size, Rng& rng);

  // Single-sample forward. token_ids index the embedding table (an empty
  // sequence falls back to the unknown token); mel is [T, mel_bins].
  // Returns logits of length num_classes.
  Tensor forward(const std::vector<int>& token_ids, const Tensor& mel,
                 bool training, Rng* rng,
                 AttentionRecord* cross_attn = nullptr) const;

  std::vector<double> predict_probs(const std::vector<int>& token_ids,
                                    const Tensor& mel) const;

  // Trainable tensors in a fixed enumeration order.
  std::vector<NamedTensor> named_params() const;
  // Every tensor, trainable or frozen; used by serialization.
  std::vector<NamedTensor> all_tensors() const;
  std::size_t param_count() const;

  void zero_grads() const;
  Model clone() const;
};

// Checkpoint container: versioned header, a config block covering the model
// configuration, class list and vocabulary, then named parameter records
// (name, shape, raw little-endian 32-bit floats).
struct Checkpoint {
  Model model;
  Vocabulary vocab;
  std::vector<std::string> classes;
};

void save_checkpoint(const std::string& path, const Model& model,
                     const Vocabulary& vocab,
                     const std::vector<std::string>& classes);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace modfuse

#endif  // MODFUSE_MODEL_HPP_
