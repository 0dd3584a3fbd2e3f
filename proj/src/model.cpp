// modfuse/model.cpp

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

#include "modfuse/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "modfuse/error.hpp"

namespace modfuse {

Model Model::init(const ModelConfig& config, int vocab_size, Rng& rng) {
  Model m;
  m.cfg = config;
  m.cfg.finalize();
  if (vocab_size < 2) throw ConfigError("model: vocabulary too small");

  m.embedding.table = Tensor::normal({vocab_size, EmbeddingTable::kDim}, 0.0,
                                     0.1, rng, m.cfg.train_embeddings);
  m.embedding.trainable = m.cfg.train_embeddings;
  {
    auto& v = m.embedding.table.values_mut();
    std::fill_n(v.begin(), EmbeddingTable::kDim, 0.0);  // padding row
  }
  m.lstm_text = LstmParams::init(EmbeddingTable::kDim, m.cfg.hidden, rng);
  m.lstm_audio = LstmParams::init(m.cfg.mel_bins, m.cfg.hidden, rng);

  if (m.cfg.variant != Variant::kP) {
    m.tower_text.reserve(static_cast<std::size_t>(m.cfg.blocks));
    m.tower_audio.reserve(static_cast<std::size_t>(m.cfg.blocks));
    for (int b = 0; b < m.cfg.blocks; ++b)
      m.tower_text.push_back(
          TransformerBlockParams::init(m.cfg.hidden, m.cfg.mlp_hidden, rng));
    for (int b = 0; b < m.cfg.blocks; ++b)
      m.tower_audio.push_back(
          TransformerBlockParams::init(m.cfg.hidden, m.cfg.mlp_hidden, rng));
  }
  if (m.cfg.variant == Variant::kMNT)
    m.film = FilmParams::init(m.cfg.hidden, m.cfg.blocks,
                              m.cfg.film_per_channel, rng);

  m.reduce_text = ReduceParams::init(m.cfg.hidden, rng);
  m.reduce_audio = ReduceParams::init(m.cfg.hidden, rng);
  m.projection = ProjectionParams::init(m.cfg.hidden, m.cfg.num_classes, rng);
  return m;
}

Tensor Model::forward(const std::vector<int>& token_ids, const Tensor& mel,
                      bool training, Rng* rng,
                      AttentionRecord* cross_attn) const {
  std::vector<int> ids = token_ids;
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  if (mel.ndim() != 2 || mel.cols() != cfg.mel_bins)
    throw DataError("model: mel input " + shape_str(mel.shape()) +
                    " does not have " + std::to_string(cfg.mel_bins) +
                    " channels");

  Tensor x = lstm_forward(embed(ids, embedding), lstm_text);
  Tensor y = lstm_forward(mel, lstm_audio);
  if (cfg.positional_encoding && cfg.variant != Variant::kP) {
    x = add(x, sinusoidal_encoding(x.rows(), cfg.hidden));
    y = add(y, sinusoidal_encoding(y.rows(), cfg.hidden));
  }

  ForwardCtx ctx;
  ctx.training = training;
  ctx.rng = rng;
  ctx.dropout_block = cfg.dropout_block;
  ctx.heads = cfg.heads;
  ctx.scale_full_dim = cfg.attention_scale_full_dim;
  ctx.norm_axis =
      cfg.temporal_layer_norm ? NormAxis::kTemporal : NormAxis::kFeature;

  // Per-sample sequences are unpadded, so no positions are masked here; the
  // encoder surfaces take masks for callers that batch with padding.
  switch (cfg.variant) {
    case Variant::kP:
      break;
    case Variant::kNT: {
      auto enc = encode_naive(x, y, std::nullopt, std::nullopt, tower_text,
                              tower_audio, ctx);
      x = enc.first;
      y = enc.second;
      break;
    }
    case Variant::kMAT: {
      auto enc = encode_mat(x, y, std::nullopt, std::nullopt, tower_text,
                            tower_audio, ctx, cfg.mat_modulate_raw,
                            cross_attn);
      x = enc.first;
      y = enc.second;
      break;
    }
    case Variant::kMNT: {
      auto enc = encode_mnt(x, y, std::nullopt, std::nullopt, tower_text,
                            tower_audio, *film, ctx);
      x = enc.first;
      y = enc.second;
      break;
    }
  }

  Tensor x_bar = attention_reduce(x, std::nullopt, reduce_text);
  Tensor y_bar = attention_reduce(y, std::nullopt, reduce_audio);
  return project(x_bar, y_bar, projection, cfg.dropout_proj, training, rng);
}

std::vector<double> Model::predict_probs(const std::vector<int>& token_ids,
                                         const Tensor& mel) const {
  NoGradGuard no_grad;
  Tensor logits = forward(token_ids, mel, false, nullptr);
  const auto& z = logits.values();
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> probs(z.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    probs[i] = std::exp(z[i] - mx);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

namespace {

void push_lstm(std::vector<NamedTensor>& out, const std::string& prefix,
               const LstmParams& p) {
  out.push_back({prefix + ".w_ih", p.w_ih});
  out.push_back({prefix + ".w_hh", p.w_hh});
  out.push_back({prefix + ".bias", p.bias});
}

void push_block(std::vector<NamedTensor>& out, const std::string& prefix,
                const TransformerBlockParams& p) {
  out.push_back({prefix + ".attn.wq", p.attn.wq});
  out.push_back({prefix + ".attn.wk", p.attn.wk});
  out.push_back({prefix + ".attn.wv", p.attn.wv});
  out.push_back({prefix + ".attn.wo", p.attn.wo});
  out.push_back({prefix + ".mlp.w1", p.mlp_w1});
  out.push_back({prefix + ".mlp.b1", p.mlp_b1});
  out.push_back({prefix + ".mlp.w2", p.mlp_w2});
  out.push_back({prefix + ".mlp.b2", p.mlp_b2});
  out.push_back({prefix + ".ln1.gamma", p.ln1_gamma});
  out.push_back({prefix + ".ln1.beta", p.ln1_beta});
  out.push_back({prefix + ".ln2.gamma", p.ln2_gamma});
  out.push_back({prefix + ".ln2.beta", p.ln2_beta});
}

}  // namespace

std::vector<NamedTensor> Model::all_tensors() const {
  std::vector<NamedTensor> out;
  out.push_back({"embedding.table", embedding.table});
  push_lstm(out, "lstm_text", lstm_text);
  push_lstm(out, "lstm_audio", lstm_audio);
  for (std::size_t i = 0; i < tower_text.size(); ++i)
    push_block(out, "tower_text." + std::to_string(i), tower_text[i]);
  for (std::size_t i = 0; i < tower_audio.size(); ++i)
    push_block(out, "tower_audio." + std::to_string(i), tower_audio[i]);
  if (film) {
    out.push_back({"film.w", film->w});
    out.push_back({"film.b", film->b});
  }
  out.push_back({"reduce_text.w", reduce_text.w});
  out.push_back({"reduce_text.v", reduce_text.v});
  out.push_back({"reduce_audio.w", reduce_audio.w});
  out.push_back({"reduce_audio.v", reduce_audio.v});
  out.push_back({"projection.ln.gamma", projection.ln_gamma});
  out.push_back({"projection.ln.beta", projection.ln_beta});
  out.push_back({"projection.w", projection.w});
  out.push_back({"projection.bias", projection.bias});
  return out;
}

std::vector<NamedTensor> Model::named_params() const {
  std::vector<NamedTensor> all = all_tensors();
  std::vector<NamedTensor> out;
  out.reserve(all.size());
  for (NamedTensor& nt : all)
    if (nt.tensor.requires_grad()) out.push_back(std::move(nt));
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const NamedTensor& nt : named_params()) n += nt.tensor.size();
  return n;
}

void Model::zero_grads() const {
  for (const NamedTensor& nt : named_params()) {
    Tensor t = nt.tensor;
    t.zero_grad();
  }
}

Model Model::clone() const {
  Model m;
  m.cfg = cfg;
  m.embedding.table = embedding.table.clone();
  m.embedding.trainable = embedding.trainable;
  auto clone_lstm = [](const LstmParams& p) {
    LstmParams q;
    q.w_ih = p.w_ih.clone();
    q.w_hh = p.w_hh.clone();
    q.bias = p.bias.clone();
    q.hidden = p.hidden;
    return q;
  };
  m.lstm_text = clone_lstm(lstm_text);
  m.lstm_audio = clone_lstm(lstm_audio);
  auto clone_block = [](const TransformerBlockParams& p) {
    TransformerBlockParams q;
    q.attn.wq = p.attn.wq.clone();
    q.attn.wk = p.attn.wk.clone();
    q.attn.wv = p.attn.wv.clone();
    q.attn.wo = p.attn.wo.clone();
    q.mlp_w1 = p.mlp_w1.clone();
    q.mlp_b1 = p.mlp_b1.clone();
    q.mlp_w2 = p.mlp_w2.clone();
    q.mlp_b2 = p.mlp_b2.clone();
    q.ln1_gamma = p.ln1_gamma.clone();
    q.ln1_beta = p.ln1_beta.clone();
    q.ln2_gamma = p.ln2_gamma.clone();
    q.ln2_beta = p.ln2_beta.clone();
    return q;
  };
  for (const auto& b : tower_text) m.tower_text.push_back(clone_block(b));
  for (const auto& b : tower_audio) m.tower_audio.push_back(clone_block(b));
  if (film) {
    FilmParams f;
    f.w = film->w.clone();
    f.b = film->b.clone();
    f.blocks = film->blocks;
    f.hidden = film->hidden;
    f.per_channel = film->per_channel;
    m.film = std::move(f);
  }
  m.reduce_text.w = reduce_text.w.clone();
  m.reduce_text.v = reduce_text.v.clone();
  m.reduce_audio.w = reduce_audio.w.clone();
  m.reduce_audio.v = reduce_audio.v.clone();
  m.projection.ln_gamma = projection.ln_gamma.clone();
  m.projection.ln_beta = projection.ln_beta.clone();
  m.projection.w = projection.w.clone();
  m.projection.bias = projection.bias.clone();
  return m;
}

// ---- checkpoint container ---------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size())
      throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(&data[pos]);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["variant"] = variant_name(cfg.variant);
  j["blocks"] = cfg.blocks;
  j["hidden"] = cfg.hidden;
  j["heads"] = cfg.heads;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["dropout_block"] = cfg.dropout_block;
  j["dropout_proj"] = cfg.dropout_proj;
  j["num_classes"] = cfg.num_classes;
  j["mel_bins"] = cfg.mel_bins;
  j["film_per_channel"] = cfg.film_per_channel;
  j["mat_modulate_raw"] = cfg.mat_modulate_raw;
  j["attention_scale_full_dim"] = cfg.attention_scale_full_dim;
  j["positional_encoding"] = cfg.positional_encoding;
  j["temporal_layer_norm"] = cfg.temporal_layer_norm;
  j["train_embeddings"] = cfg.train_embeddings;
  return j;
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig cfg;
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.blocks = j.at("blocks").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
  cfg.dropout_block = j.at("dropout_block").get<double>();
  cfg.dropout_proj = j.at("dropout_proj").get<double>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.mel_bins = j.at("mel_bins").get<int>();
  cfg.film_per_channel = j.at("film_per_channel").get<bool>();
  cfg.mat_modulate_raw = j.at("mat_modulate_raw").get<bool>();
  cfg.attention_scale_full_dim = j.at("attention_scale_full_dim").get<bool>();
  cfg.positional_encoding = j.at("positional_encoding").get<bool>();
  cfg.temporal_layer_norm = j.at("temporal_layer_norm").get<bool>();
  cfg.train_embeddings = j.at("train_embeddings").get<bool>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const Vocabulary& vocab,
                     const std::vector<std::string>& classes) {
  nlohmann::ordered_json cfg_block;
  cfg_block["model"] = config_to_json(model.cfg);
  cfg_block["classes"] = classes;
  cfg_block["vocab"] = vocab.tokens();
  const std::string cfg_bytes = cfg_block.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg_bytes.size()));
  out += cfg_bytes;

  const std::vector<NamedTensor> tensors = model.all_tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
    out += nt.name;
    const Shape& s = nt.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    for (int d : s) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : nt.tensor.values())
      put_f32(out, static_cast<float>(v));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot read " + path);
  const std::string data((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  Reader r{data};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw DataError("checkpoint: " + path + " has a bad magic header");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  nlohmann::ordered_json cfg_block;
  try {
    cfg_block = nlohmann::ordered_json::parse(r.bytes(cfg_len));
  } catch (const std::exception& e) {
    throw DataError("checkpoint: bad config block: " + std::string(e.what()));
  }

  Checkpoint out;
  ModelConfig cfg = config_from_json(cfg_block.at("model"));
  out.classes = cfg_block.at("classes").get<std::vector<std::string>>();
  out.vocab = Vocabulary::from_tokens(
      cfg_block.at("vocab").get<std::vector<std::string>>());

  Rng scratch(0);  // values are overwritten record by record below
  out.model = Model::init(cfg, out.vocab.size(), scratch);

  const std::uint32_t n_records = r.u32();
  std::vector<NamedTensor> tensors = out.model.all_tensors();
  if (n_records != tensors.size())
    throw DataError("checkpoint: expected " + std::to_string(tensors.size()) +
                    " parameter records, found " + std::to_string(n_records));
  for (NamedTensor& nt : tensors) {
    const std::string name = r.bytes(r.u32());
    if (name != nt.name)
      throw DataError("checkpoint: record '" + name + "' where '" + nt.name +
                      "' was expected");
    const std::uint32_t ndim = r.u32();
    Shape s(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i)
      s[i] = static_cast<int>(r.u32());
    if (s != nt.tensor.shape())
      throw DataError("checkpoint: shape " + shape_str(s) + " for '" + name +
                      "' does not match expected " +
                      shape_str(nt.tensor.shape()));
    auto& v = nt.tensor.values_mut();
    for (double& x : v) x = static_cast<double>(r.f32());
  }
  if (r.pos != data.size())
    throw DataError("checkpoint: trailing bytes in " + path);
  return out;
}

}  // namespace modfuse
