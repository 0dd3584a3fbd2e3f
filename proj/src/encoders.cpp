// modfuse/encoders.cpp

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

#include "modfuse/encoders.hpp"

#include <cmath>

#include "modfuse/error.hpp"

namespace modfuse {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kP: return "P";
    case Variant::kNT: return "NT";
    case Variant::kMAT: return "MAT";
    case Variant::kMNT: return "MNT";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "P") return Variant::kP;
  if (name == "NT") return Variant::kNT;
  if (name == "MAT") return Variant::kMAT;
  if (name == "MNT") return Variant::kMNT;
  throw ConfigError("unknown model variant '" + name +
                    "' (expected P, NT, MAT or MNT)");
}

void ModelConfig::finalize() {
  if (blocks == 0)
    blocks = (variant == Variant::kP || variant == Variant::kNT) ? 2 : 4;
  if (blocks < 0) throw ConfigError("model: blocks must be >= 0");
  if (hidden <= 0) throw ConfigError("model: hidden size must be positive");
  if (heads <= 0 || hidden % heads != 0)
    throw ConfigError("model: heads (" + std::to_string(heads) +
                      ") must divide the hidden size (" +
                      std::to_string(hidden) + ")");
  if (mlp_hidden <= 0) throw ConfigError("model: mlp_hidden must be positive");
  if (dropout_block < 0.0 || dropout_block >= 1.0 || dropout_proj < 0.0 ||
      dropout_proj >= 1.0)
    throw ConfigError("model: dropout rates must lie in [0,1)");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (mel_bins <= 0) throw ConfigError("model: mel_bins must be positive");
}

namespace {

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

}  // namespace

LstmParams LstmParams::init(int input_dim, int hidden, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.w_ih = fan_in_uniform({input_dim, 4 * hidden}, input_dim, rng);
  p.w_hh = fan_in_uniform({hidden, 4 * hidden}, hidden, rng);
  p.bias = fan_in_uniform({4 * hidden}, hidden, rng);
  // Forget gate opens at init so early gradients reach back in time.
  auto& b = p.bias.values_mut();
  for (int j = hidden; j < 2 * hidden; ++j)
    b[static_cast<std::size_t>(j)] += 1.0;
  return p;
}

Tensor lstm_forward(const Tensor& seq, const LstmParams& params) {
  const int t_len = seq.rows();
  const int d = seq.cols();
  const int c = params.hidden;
  if (params.w_ih.rows() != d)
    throw Error("lstm: input width " + shape_str(seq.shape()) +
                " does not match weights " + shape_str(params.w_ih.shape()));

  Tensor h = Tensor::zeros({1, c});
  Tensor cell = Tensor::zeros({1, c});
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    Tensor x_t = row_slice(seq, t, t + 1);
    Tensor z = add_rowvec(
        add(matmul(x_t, params.w_ih), matmul(h, params.w_hh)), params.bias);
    Tensor gi = sigmoid(col_slice(z, 0, c));
    Tensor gf = sigmoid(col_slice(z, c, 2 * c));
    Tensor gc = tanh_op(col_slice(z, 2 * c, 3 * c));
    Tensor go = sigmoid(col_slice(z, 3 * c, 4 * c));
    cell = add(mul(gf, cell), mul(gi, gc));
    h = mul(go, tanh_op(cell));
    outputs.push_back(h);
  }
  return concat_rows(outputs);
}

Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v,
           const std::optional<Mask>& key_mask, const MhaParams& params,
           int heads, bool scale_full_dim, AttentionRecord* record) {
  const int c = q.cols();
  if (k.cols() != c || v.cols() != c)
    throw Error("mha: feature size mismatch " + shape_str(q.shape()) + " / " +
                shape_str(k.shape()) + " / " + shape_str(v.shape()));
  if (k.rows() != v.rows())
    throw Error("mha: key/value length mismatch " + shape_str(k.shape()) +
                " vs " + shape_str(v.shape()));
  if (heads <= 0 || c % heads != 0)
    throw Error("mha: heads must divide the feature size");
  const int d_head = c / heads;
  const double inv_scale =
      1.0 / std::sqrt(static_cast<double>(scale_full_dim ? c : d_head));

  Tensor qp = matmul(q, params.wq);
  Tensor kp = matmul(k, params.wk);
  Tensor vp = matmul(v, params.wv);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int hidx = 0; hidx < heads; ++hidx) {
    const int c0 = hidx * d_head, c1 = (hidx + 1) * d_head;
    Tensor qh = col_slice(qp, c0, c1);
    Tensor kh = col_slice(kp, c0, c1);
    Tensor vh = col_slice(vp, c0, c1);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    Tensor weights = softmax(scores, key_mask);
    if (record) record->per_head.push_back(weights.detach());
    head_outputs.push_back(matmul(weights, vh));
  }
  return matmul(concat_cols(head_outputs), params.wo);
}

TransformerBlockParams TransformerBlockParams::init(int hidden, int mlp_hidden,
                                                    Rng& rng) {
  TransformerBlockParams p;
  p.attn.wq = fan_in_uniform({hidden, hidden}, hidden, rng);
  p.attn.wk = fan_in_uniform({hidden, hidden}, hidden, rng);
  p.attn.wv = fan_in_uniform({hidden, hidden}, hidden, rng);
  p.attn.wo = fan_in_uniform({hidden, hidden}, hidden, rng);
  p.mlp_w1 = fan_in_uniform({hidden, mlp_hidden}, hidden, rng);
  p.mlp_b1 = fan_in_uniform({mlp_hidden}, hidden, rng);
  p.mlp_w2 = fan_in_uniform({mlp_hidden, hidden}, mlp_hidden, rng);
  p.mlp_b2 = fan_in_uniform({hidden}, mlp_hidden, rng);
  p.ln1_gamma = Tensor::full({hidden}, 1.0, true);
  p.ln1_beta = Tensor::zeros({hidden}, true);
  p.ln2_gamma = Tensor::full({hidden}, 1.0, true);
  p.ln2_beta = Tensor::zeros({hidden}, true);
  return p;
}

Tensor transformer_block(const Tensor& x, const std::optional<Mask>& self_mask,
                         const TransformerBlockParams& params,
                         const ForwardCtx& ctx, const BlockModulation* mod,
                         const Tensor* kv, const std::optional<Mask>& kv_mask,
                         AttentionRecord* record) {
  const Tensor& keys = kv ? *kv : x;
  const std::optional<Mask>& key_mask = kv ? kv_mask : self_mask;

  Tensor g1 = mod ? add(params.ln1_gamma, mod->dg1) : params.ln1_gamma;
  Tensor b1 = mod ? add(params.ln1_beta, mod->db1) : params.ln1_beta;
  Tensor g2 = mod ? add(params.ln2_gamma, mod->dg2) : params.ln2_gamma;
  Tensor b2 = mod ? add(params.ln2_beta, mod->db2) : params.ln2_beta;

  Tensor attended = mha(x, keys, keys, key_mask, params.attn, ctx.heads,
                        ctx.scale_full_dim, record);
  Tensor u = layer_norm(add(x, attended), g1, b1, 1e-5, ctx.norm_axis);
  Tensor hidden = relu(add_rowvec(matmul(u, params.mlp_w1), params.mlp_b1));
  Tensor mlp_out = add_rowvec(matmul(hidden, params.mlp_w2), params.mlp_b2);
  Tensor out = layer_norm(add(u, mlp_out), g2, b2, 1e-5, ctx.norm_axis);
  if (ctx.training && ctx.dropout_block > 0.0) {
    if (!ctx.rng) throw Error("transformer_block: training requires an rng");
    out = dropout(out, ctx.dropout_block, true, *ctx.rng);
  }
  return out;
}

Tensor run_tower(const Tensor& x, const std::optional<Mask>& mask,
                 const std::vector<TransformerBlockParams>& blocks,
                 const ForwardCtx& ctx) {
  Tensor cur = x;
  for (const TransformerBlockParams& b : blocks)
    cur = transformer_block(cur, mask, b, ctx);
  return cur;
}

std::pair<Tensor, Tensor> encode_naive(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y, const ForwardCtx& ctx) {
  return {run_tower(x, mask_x, tower_x, ctx),
          run_tower(y, mask_y, tower_y, ctx)};
}

std::pair<Tensor, Tensor> encode_mat(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y, const ForwardCtx& ctx,
    bool modulate_raw, AttentionRecord* first_block_attn) {
  if (x.cols() != y.cols())
    throw Error("encode_mat: feature sizes must match across modalities, got " +
                shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  Tensor x_tilde = run_tower(x, mask_x, tower_x, ctx);
  const Tensor& kv = modulate_raw ? x : x_tilde;
  Tensor cur = y;
  for (std::size_t i = 0; i < tower_y.size(); ++i)
    cur = transformer_block(cur, mask_y, tower_y[i], ctx, nullptr, &kv, mask_x,
                            i == 0 ? first_block_attn : nullptr);
  return {x_tilde, cur};
}

FilmParams FilmParams::init(int hidden, int blocks, bool per_channel,
                            Rng& rng) {
  FilmParams p;
  p.blocks = blocks;
  p.hidden = hidden;
  p.per_channel = per_channel;
  const int width = per_channel ? 4 * hidden * blocks : 4 * blocks;
  p.w = fan_in_uniform({hidden, width}, hidden, rng);
  p.b = fan_in_uniform({width}, hidden, rng);
  return p;
}

std::vector<BlockModulation> film_predict(const Tensor& x_tilde,
                                          const std::optional<Mask>& mask,
                                          const FilmParams& params) {
  const int c = params.hidden;
  const int b = params.blocks;
  if (x_tilde.cols() != c)
    throw Error("film: pooled width " + shape_str(x_tilde.shape()) +
                " does not match hidden size " + std::to_string(c));
  Tensor pooled = mean_rows(x_tilde, mask);               // [1, C]
  Tensor deltas = add_rowvec(matmul(pooled, params.w), params.b);

  std::vector<BlockModulation> out;
  out.reserve(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    BlockModulation m;
    if (params.per_channel) {
      // Layout per block: [dg1 C][db1 C][dg2 C][db2 C].
      const int base = i * 4 * c;
      m.dg1 = reshape(col_slice(deltas, base, base + c), {c});
      m.db1 = reshape(col_slice(deltas, base + c, base + 2 * c), {c});
      m.dg2 = reshape(col_slice(deltas, base + 2 * c, base + 3 * c), {c});
      m.db2 = reshape(col_slice(deltas, base + 3 * c, base + 4 * c), {c});
    } else {
      const int base = i * 4;
      auto pick = [&](int j) {
        return broadcast_scalar(
            reshape(col_slice(deltas, base + j, base + j + 1), {1}), c);
      };
      m.dg1 = pick(0);
      m.db1 = pick(1);
      m.dg2 = pick(2);
      m.db2 = pick(3);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::pair<Tensor, Tensor> encode_mnt(
    const Tensor& x, const Tensor& y, const std::optional<Mask>& mask_x,
    const std::optional<Mask>& mask_y,
    const std::vector<TransformerBlockParams>& tower_x,
    const std::vector<TransformerBlockParams>& tower_y,
    const FilmParams& film, const ForwardCtx& ctx) {
  if (static_cast<int>(tower_y.size()) != film.blocks)
    throw Error("encode_mnt: film covers " + std::to_string(film.blocks) +
                " blocks but the acoustic tower has " +
                std::to_string(tower_y.size()));
  Tensor x_tilde = run_tower(x, mask_x, tower_x, ctx);
  std::vector<BlockModulation> mods = film_predict(x_tilde, mask_x, film);
  Tensor cur = y;
  for (std::size_t i = 0; i < tower_y.size(); ++i)
    cur = transformer_block(cur, mask_y, tower_y[i], ctx, &mods[i]);
  return {x_tilde, cur};
}

Tensor sinusoidal_encoding(int t, int c) {
  std::vector<double> v(static_cast<std::size_t>(t) * c);
  for (int pos = 0; pos < t; ++pos) {
    for (int i = 0; i < c; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(c));
      v[static_cast<std::size_t>(pos) * c + i] =
          (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return Tensor({t, c}, std::move(v));
}

}  // namespace modfuse
