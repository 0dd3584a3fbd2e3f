// modfuse/encoders.hpp

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

#ifndef MODFUSE_ENCODERS_HPP_
#define MODFUSE_ENCODERS_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

// Model variants, in increasing order of cross-modal coupling:
//   P   projection baseline, no transformer towers;
//   NT  independent self-attention towers per modality;
//   MAT acoustic attention keys/values switched to the encoded text;
//   MNT acoustic layer norms shifted by FiLM deltas predicted from text.
enum class Variant { kP, kNT, kMAT, kMNT };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::kNT;
  int blocks = 0;  // 0 -> per-variant default (2 for P/NT, 4 for MAT/MNT)
  int hidden = 512;      // C, shared across modalities
  int heads = 8;
  int mlp_hidden = 2048;  // C-bar
  double dropout_block = 0.1;
  double dropout_proj = 0.5;
  int num_classes = 0;
  int mel_bins = 80;
  bool film_per_channel = true;    // false -> one scalar pair per norm layer
  bool mat_modulate_raw = false;   // true -> keys/values from raw LSTM output
  bool attention_scale_full_dim = false;  // true -> 1/sqrt(C) instead of
                                          // 1/sqrt(C/heads)
  bool positional_encoding = false;
  bool temporal_layer_norm = false;  // tower norms over time per channel
  bool train_embeddings = true;

  // Fills per-variant defaults and checks invariants.
  void finalize();
};

// Per-modality recurrent front end. Weight layout packs the four gates
// (input, forget, cell, output) side by side along the width.
struct LstmParams {
  Tensor w_ih;  // [D, 4C]
  Tensor w_hh;  // [C, 4C]
  Tensor bias;  // [4C]
  int hidden = 0;

  static LstmParams init(int input_dim, int hidden, Rng& rng);
};

// Standard recurrence with zero initial state; returns every hidden state,
// [T, C].
Tensor lstm_forward(const Tensor& seq, const LstmParams& params);

struct MhaParams {
  Tensor wq, wk, wv, wo;  // all [C, C]
};

// Per-head attention maps captured for inspection (detached copies).
struct AttentionRecord {
  std::vector<Tensor> per_head;  // each [T_q, T_k]
};

// Multi-head scaled dot-product attention. Heads slice the feature axis
// into C/heads sub-spaces; scores use 1/sqrt(C/heads) unless
// scale_full_dim asks for 1/sqrt(C). Masked keys get exactly zero weight.
Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v,
           const std::optional<Mask>& key_mask, const MhaParams& params,
           int heads, bool scale_full_dim = false,
           AttentionRecord* record = nullptr);

struct TransformerBlockParams {
  MhaParams attn;
  Tensor mlp_w1, mlp_b1;  // [C, C-bar], [C-bar]
  Tensor mlp_w2, mlp_b2;  // [C-bar, C], [C]
  Tensor ln1_gamma, ln1_beta;  // [C]
  Tensor ln2_gamma, ln2_beta;  // [C]

  static TransformerBlockParams init(int hidden, int mlp_hidden, Rng& rng);
};

// FiLM-style shifts for one block's two norm layers, each of length C.
struct BlockModulation {
  Tensor dg1, db1, dg2, db2;
};

// Dropout / norm-axis context threaded through the towers.
struct ForwardCtx {
  bool training = false;
  Rng* rng = nullptr;
  double dropout_block = 0.1;
  int heads = 8;
  bool scale_full_dim = false;
  NormAxis norm_axis = NormAxis::kFeature;
};

// One post-norm block: LayerNorm(x + MHA) then LayerNorm(u + MLP), with
// dropout on the block output while training. When kv is given the
// attention keys/values come from it (with kv_mask over its rows) instead
// of x; when mod is given the two layer norms run with gamma+dg / beta+db.
Tensor transformer_block(const Tensor& x, const std::optional<Mask>& self_mask,
                         const TransformerBlockParams& params,
                         const ForwardCtx& ctx,
                         const BlockModulation* mod = nullptr,
                         const Tensor* kv = nullptr,
                         const std::optional<Mask>& kv_mask = std::nullopt,
                         AttentionRecord* record = nullptr);

// Plain self-attention stack.
Tensor run_tower(const Tensor& x, const std::optional<Mask>& mask,
                 const std::vector<TransformerBlockParams>& blocks,
                 const ForwardCtx& ctx);

// Independent towers; the modalities never interact.
std::pair<Tensor, Tensor> encode_naive(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y, const ForwardCtx& ctx);

// Attention modulation: the acoustic tower's keys/values are the encoded
// text sequence (or the raw one when modulate_raw is set), with the text
// mask on the keys. Uses the same parameters as the naive encoder.
std::pair<Tensor, Tensor> encode_mat(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y, const ForwardCtx& ctx,
    bool modulate_raw = false, AttentionRecord* first_block_attn = nullptr);

// One linear map from the pooled text encoding to all norm-layer deltas.
// Per-channel mode emits 4*C*B values (dgamma/dbeta for 2 layers x B blocks
// x C channels); scalar mode emits 4*B values broadcast over channels.
struct FilmParams {
  Tensor w;  // [C, 4*C*B] or [C, 4*B]
  Tensor b;  // matching width
  int blocks = 0;
  int hidden = 0;
  bool per_channel = true;

  static FilmParams init(int hidden, int blocks, bool per_channel, Rng& rng);
};

// Masked mean-pool of x_tilde over time, then the linear map, sliced per
// (block, norm layer).
std::vector<BlockModulation> film_predict(const Tensor& x_tilde,
                                          const std::optional<Mask>& mask,
                                          const FilmParams& params);

// Normalization modulation: the naive towers, with every acoustic norm
// layer running on gamma+dgamma / beta+dbeta from film_predict.
std::pair<Tensor, Tensor> encode_mnt(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y,
    const FilmParams& film, const ForwardCtx& ctx);

// Sinusoidal position table [T, C]; optional, off by default in the models.
Tensor sinusoidal_encoding(int t, int c);

}  // namespace modfuse

#endif  // MODFUSE_ENCODERS_HPP_
