#include "xencdec/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace xencdec {

namespace {

constexpr double kMasked = -1e30;

Tensor random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v), true);
}

Tensor constant_vector(std::size_t n, double value) {
  return Tensor({n}, std::vector<double>(n, value), true);
}

// [B, H, Lq, Lk] additive mask; keys with valid == 0 (and future keys when
// causal) get kMasked.
Tensor additive_mask(std::span<const std::uint8_t> key_valid, std::size_t batch, std::size_t heads,
                     std::size_t lq, std::size_t lk, bool causal) {
  std::vector<double> m(batch * heads * lq * lk, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < lq; ++q) {
      for (std::size_t k = 0; k < lk; ++k) {
        const bool hidden = (!key_valid.empty() && key_valid[b * lk + k] == 0) || (causal && k > q);
        if (!hidden) continue;
        for (std::size_t h = 0; h < heads; ++h) m[((b * heads + h) * lq + q) * lk + k] = kMasked;
      }
    }
  }
  return Tensor({batch, heads, lq, lk}, std::move(m));
}

void check_embeddings(const Tensor& x, std::size_t dim, std::size_t max_len, const char* what) {
  if (x.rank() != 3 || x.dim(2) != dim) {
    throw ShapeError(std::string(what) + ": expected [B, L, " + std::to_string(dim) + "], got " +
                     to_string(x.shape()));
  }
  if (x.dim(1) > max_len) {
    throw LengthError(std::string(what) + ": length " + std::to_string(x.dim(1)) + " exceeds max_len " +
                      std::to_string(max_len));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers == 0 || model_dim == 0 || num_heads == 0 || ffn_dim == 0 || max_len == 0) {
    throw ValidationError("model sizes must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw ValidationError("model_dim " + std::to_string(model_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
  }
  if (vocab_size < 3 + num_languages) throw ValidationError("vocab_size does not cover special and tag tokens");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ValidationError("label_smoothing must lie in [0, 1)");
  }
  if (tag_mode == TagMode::LanguageEmbedding && num_languages == 0) {
    throw ValidationError("language-embedding mode needs num_languages > 0");
  }
  if (attention_layer >= static_cast<int>(num_layers) || attention_layer < -1) {
    throw ValidationError("attention_layer out of range");
  }
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  const std::size_t ff = config_.ffn_dim;
  std::mt19937_64 rng(seed);
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double ffn_out_std = 1.0 / std::sqrt(static_cast<double>(ff));

  positions_.assign(config_.max_len * d, 0.0);
  for (std::size_t pos = 0; pos < config_.max_len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      positions_[pos * d + i] = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) positions_[pos * d + i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  }

  token_embedding_ = random_matrix(rng, config_.vocab_size, d, embed_std);
  if (config_.tag_mode == TagMode::LanguageEmbedding) {
    language_embedding_ = random_matrix(rng, config_.num_languages, d, embed_std);
  }
  auto make_norm = [&] { return Norm{constant_vector(d, 1.0), constant_vector(d, 0.0)}; };
  auto make_attention = [&] {
    return Attention{random_matrix(rng, d, d, proj_std), constant_vector(d, 0.0),
                     random_matrix(rng, d, d, proj_std), constant_vector(d, 0.0),
                     random_matrix(rng, d, d, proj_std), constant_vector(d, 0.0),
                     random_matrix(rng, d, d, proj_std), constant_vector(d, 0.0)};
  };
  auto make_ffn = [&] {
    return FeedForward{random_matrix(rng, d, ff, proj_std), constant_vector(ff, 0.0),
                       random_matrix(rng, ff, d, ffn_out_std), constant_vector(d, 0.0)};
  };
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    EncoderLayer layer;
    layer.attn_norm = make_norm();
    layer.self_attn = make_attention();
    layer.ffn_norm = make_norm();
    layer.ffn = make_ffn();
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    DecoderLayer layer;
    layer.self_norm = make_norm();
    layer.self_attn = make_attention();
    layer.cross_norm = make_norm();
    layer.cross_attn = make_attention();
    layer.ffn_norm = make_norm();
    layer.ffn = make_ffn();
    decoder_.push_back(std::move(layer));
  }
  encoder_final_ = make_norm();
  decoder_final_ = make_norm();
  if (!config_.tie_embeddings) output_projection_ = random_matrix(rng, d, config_.vocab_size, proj_std);
  output_bias_ = constant_vector(config_.vocab_size, 0.0);
  register_parameters();
}

void Seq2SeqModel::register_parameters() {
  parameters_.clear();
  auto add = [&](std::string name, const Tensor& t) { parameters_.push_back({std::move(name), t}); };
  auto add_norm = [&](const std::string& p, const Norm& n) {
    add(p + ".gain", n.gain);
    add(p + ".bias", n.bias);
  };
  auto add_attention = [&](const std::string& p, const Attention& a) {
    add(p + ".wq", a.wq); add(p + ".bq", a.bq);
    add(p + ".wk", a.wk); add(p + ".bk", a.bk);
    add(p + ".wv", a.wv); add(p + ".bv", a.bv);
    add(p + ".wo", a.wo); add(p + ".bo", a.bo);
  };
  auto add_ffn = [&](const std::string& p, const FeedForward& f) {
    add(p + ".w1", f.w1); add(p + ".b1", f.b1);
    add(p + ".w2", f.w2); add(p + ".b2", f.b2);
  };
  add("token_embedding", token_embedding_);
  if (language_embedding_.defined()) add("language_embedding", language_embedding_);
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    add_norm(p + ".attn_norm", encoder_[l].attn_norm);
    add_attention(p + ".self_attn", encoder_[l].self_attn);
    add_norm(p + ".ffn_norm", encoder_[l].ffn_norm);
    add_ffn(p + ".ffn", encoder_[l].ffn);
  }
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l);
    add_norm(p + ".self_norm", decoder_[l].self_norm);
    add_attention(p + ".self_attn", decoder_[l].self_attn);
    add_norm(p + ".cross_norm", decoder_[l].cross_norm);
    add_attention(p + ".cross_attn", decoder_[l].cross_attn);
    add_norm(p + ".ffn_norm", decoder_[l].ffn_norm);
    add_ffn(p + ".ffn", decoder_[l].ffn);
  }
  add_norm("encoder.final_norm", encoder_final_);
  add_norm("decoder.final_norm", decoder_final_);
  if (output_projection_.defined()) add("output_projection", output_projection_);
  add("output_bias", output_bias_);
}

std::vector<NamedTensor> Seq2SeqModel::parameters() const { return parameters_; }

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters_) total += p.tensor.size();
  return total;
}

void Seq2SeqModel::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

Seq2SeqModel Seq2SeqModel::snapshot() const {
  Seq2SeqModel copy(*this);
  auto clone = [](Tensor& t) {
    if (!t.defined()) return;
    auto v = t.values();
    t = Tensor(t.shape(), std::vector<double>(v.begin(), v.end()), true);
  };
  clone(copy.token_embedding_);
  clone(copy.language_embedding_);
  for (auto* norm : {&copy.encoder_final_, &copy.decoder_final_}) {
    clone(norm->gain);
    clone(norm->bias);
  }
  auto clone_attention = [&](Attention& a) {
    for (Tensor* t : {&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo}) clone(*t);
  };
  auto clone_ffn = [&](FeedForward& f) {
    for (Tensor* t : {&f.w1, &f.b1, &f.w2, &f.b2}) clone(*t);
  };
  for (auto& l : copy.encoder_) {
    for (Norm* n : {&l.attn_norm, &l.ffn_norm}) { clone(n->gain); clone(n->bias); }
    clone_attention(l.self_attn);
    clone_ffn(l.ffn);
  }
  for (auto& l : copy.decoder_) {
    for (Norm* n : {&l.self_norm, &l.cross_norm, &l.ffn_norm}) { clone(n->gain); clone(n->bias); }
    clone_attention(l.self_attn);
    clone_attention(l.cross_attn);
    clone_ffn(l.ffn);
  }
  clone(copy.output_projection_);
  clone(copy.output_bias_);
  copy.register_parameters();
  return copy;
}

Tensor Seq2SeqModel::position_table(std::size_t batch, std::size_t length) const {
  const std::size_t d = config_.model_dim;
  std::vector<double> v(batch * length * d);
  for (std::size_t b = 0; b < batch; ++b) {
    std::memcpy(v.data() + b * length * d, positions_.data(), length * d * sizeof(double));
  }
  return Tensor({batch, length, d}, std::move(v));
}

Tensor Seq2SeqModel::token_embeddings(const TokenMatrix& tokens) const {
  if (tokens.cols > config_.max_len) {
    throw LengthError("sequence length " + std::to_string(tokens.cols) + " exceeds max_len " +
                      std::to_string(config_.max_len));
  }
  const std::size_t d = config_.model_dim;
  Tensor rows = embedding(token_embedding_, tokens.ids);
  Tensor scaled = scale(reshape(rows, {tokens.rows, tokens.cols, d}), std::sqrt(static_cast<double>(d)));
  return add(scaled, position_table(tokens.rows, tokens.cols));
}

Tensor Seq2SeqModel::language_embeddings(std::span<const int> languages, std::size_t length) const {
  if (config_.tag_mode != TagMode::LanguageEmbedding) {
    throw ValidationError("language embeddings requested in source-tag mode");
  }
  std::vector<std::int32_t> ids;
  ids.reserve(languages.size() * length);
  for (int lang : languages) {
    if (lang < 0 || static_cast<std::size_t>(lang) >= config_.num_languages) {
      throw ValidationError("unknown language id " + std::to_string(lang));
    }
    ids.insert(ids.end(), length, lang);
  }
  const std::size_t d = config_.model_dim;
  Tensor rows = embedding(language_embedding_, ids);
  return scale(reshape(rows, {languages.size(), length, d}), std::sqrt(static_cast<double>(d)));
}

Tensor Seq2SeqModel::embed_tokens(const TokenMatrix& tokens, std::span<const int> languages) const {
  Tensor tok = token_embeddings(tokens);
  if (config_.tag_mode == TagMode::SourceTag) return tok;
  if (languages.size() != tokens.rows) {
    throw ValidationError("language-embedding mode needs one language id per row");
  }
  return add(tok, language_embeddings(languages, tokens.cols));
}

Tensor Seq2SeqModel::split_heads(const Tensor& x) const {
  const std::size_t b = x.dim(0), len = x.dim(1), h = config_.num_heads;
  return permute(reshape(x, {b, len, h, config_.model_dim / h}), {0, 2, 1, 3});
}

Seq2SeqModel::AttentionResult Seq2SeqModel::attend(const Attention& w, const Tensor& query,
                                                   const Tensor& memory, const Tensor& additive) const {
  return attend_heads(w, query, split_heads(linear(memory, w.wk, w.bk)), split_heads(linear(memory, w.wv, w.bv)),
                      additive);
}

Seq2SeqModel::AttentionResult Seq2SeqModel::attend_heads(const Attention& w, const Tensor& query, const Tensor& keys,
                                                         const Tensor& values, const Tensor& additive) const {
  const std::size_t b = query.dim(0), lq = query.dim(1);
  const std::size_t d = config_.model_dim, dh = d / config_.num_heads;
  Tensor q = split_heads(linear(query, w.wq, w.bq));
  Tensor scores = add(scale(batched_matmul(q, keys, true), 1.0 / std::sqrt(static_cast<double>(dh))), additive);
  Tensor probs = softmax(scores, 3);
  Tensor context = permute(batched_matmul(probs, values), {0, 2, 1, 3});
  Tensor out = linear(reshape(context, {b, lq, d}), w.wo, w.bo);
  return {out, probs};
}

Tensor Seq2SeqModel::feed_forward(const FeedForward& w, const Tensor& x) const {
  return linear(gelu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

Tensor Seq2SeqModel::encode(const Tensor& source_embeddings, std::span<const std::uint8_t> source_valid) const {
  check_embeddings(source_embeddings, config_.model_dim, config_.max_len, "encode");
  const std::size_t b = source_embeddings.dim(0), len = source_embeddings.dim(1);
  if (source_valid.size() != b * len) throw ShapeError("encode: source mask does not match embeddings");
  Tensor mask = additive_mask(source_valid, b, config_.num_heads, len, len, false);
  Tensor x = source_embeddings;
  for (const auto& layer : encoder_) {
    Tensor normed = layer_norm(x, layer.attn_norm.gain, layer.attn_norm.bias);
    x = add(x, attend(layer.self_attn, normed, normed, mask).output);
    x = add(x, feed_forward(layer.ffn, layer_norm(x, layer.ffn_norm.gain, layer.ffn_norm.bias)));
  }
  return layer_norm(x, encoder_final_.gain, encoder_final_.bias);
}

Tensor Seq2SeqModel::run_decoder(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                                 std::span<const std::uint8_t> source_valid,
                                 std::vector<double>* cross_attention) const {
  check_embeddings(target_input_embeddings, config_.model_dim, config_.max_len, "decode");
  const std::size_t b = target_input_embeddings.dim(0), tlen = target_input_embeddings.dim(1);
  if (encoder_out.rank() != 3 || encoder_out.dim(0) != b) {
    throw ShapeError("decode: encoder output " + to_string(encoder_out.shape()) + " for batch " +
                     std::to_string(b));
  }
  const std::size_t slen = encoder_out.dim(1);
  if (source_valid.size() != b * slen) throw ShapeError("decode: source mask does not match encoder output");
  const std::size_t h = config_.num_heads;
  Tensor self_mask = additive_mask({}, b, h, tlen, tlen, true);
  Tensor cross_mask = additive_mask(source_valid, b, h, tlen, slen, false);
  const std::size_t report_layer =
      config_.attention_layer < 0 ? decoder_.size() - 1 : static_cast<std::size_t>(config_.attention_layer);

  Tensor x = target_input_embeddings;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    Tensor normed = layer_norm(x, layer.self_norm.gain, layer.self_norm.bias);
    x = add(x, attend(layer.self_attn, normed, normed, self_mask).output);
    auto cross = attend(layer.cross_attn, layer_norm(x, layer.cross_norm.gain, layer.cross_norm.bias),
                        encoder_out, cross_mask);
    x = add(x, cross.output);
    x = add(x, feed_forward(layer.ffn, layer_norm(x, layer.ffn_norm.gain, layer.ffn_norm.bias)));
    if (cross_attention && l == report_layer) {
      const auto p = cross.probs.values();
      auto& out = *cross_attention;
      out.assign(b * tlen * slen, 0.0);
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < h; ++hi)
          for (std::size_t j = 0; j < tlen; ++j)
            for (std::size_t i = 0; i < slen; ++i)
              out[(bi * tlen + j) * slen + i] += p[((bi * h + hi) * tlen + j) * slen + i];
      for (auto& a : out) a /= static_cast<double>(h);
    }
  }
  return layer_norm(x, decoder_final_.gain, decoder_final_.bias);
}

Tensor Seq2SeqModel::output_log_probs(const Tensor& hidden) const {
  Tensor logits = config_.tie_embeddings ? batched_matmul(hidden, token_embedding_, true)
                                         : matmul(hidden, output_projection_);
  return log_softmax(add_bias(logits, output_bias_));
}

ForwardOutput Seq2SeqModel::decode(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                                   std::span<const std::uint8_t> source_valid) const {
  ForwardOutput out;
  Tensor x = run_decoder(target_input_embeddings, encoder_out, source_valid, &out.cross_attention);
  const std::size_t b = x.dim(0), tlen = x.dim(1);
  out.batch = b;
  out.target_len = tlen;
  out.source_len = encoder_out.dim(1);
  out.encoder_out = encoder_out;
  Tensor hidden = reshape(x, {b * tlen, config_.model_dim});
  out.log_probs = reshape(output_log_probs(hidden), {b, tlen, config_.vocab_size});
  return out;
}

Tensor Seq2SeqModel::next_token_log_probs(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                                          std::span<const std::uint8_t> source_valid) const {
  NoGradGuard guard;
  Tensor x = run_decoder(target_input_embeddings, encoder_out, source_valid, nullptr);
  const std::size_t b = x.dim(0), tlen = x.dim(1), d = config_.model_dim;
  const auto v = x.values();
  std::vector<double> last(b * d);
  for (std::size_t r = 0; r < b; ++r)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((r * tlen + tlen - 1) * d), d,
                last.begin() + static_cast<std::ptrdiff_t>(r * d));
  return output_log_probs(Tensor({b, d}, std::move(last)));
}

ForwardOutput Seq2SeqModel::forward(const ParallelBatch& batch) const {
  const auto src_langs = batch.source_languages();
  const auto tgt_langs = batch.target_languages();
  const auto valid = batch.source.valid_mask();
  Tensor enc = encode(embed_tokens(batch.source, src_langs), valid);
  return decode(embed_tokens(batch.decoder_input, tgt_langs), enc, valid);
}

IncrementalDecoder::IncrementalDecoder(const Seq2SeqModel& model, const Tensor& encoder_out,
                                       std::span<const std::uint8_t> source_valid)
    : model_(&model), source_valid_(source_valid.begin(), source_valid.end()) {
  NoGradGuard guard;
  if (encoder_out.rank() != 3 || encoder_out.dim(2) != model.config_.model_dim)
    throw ShapeError("incremental decoder: bad encoder output " + to_string(encoder_out.shape()));
  source_len_ = encoder_out.dim(1);
  if (source_valid.size() != encoder_out.dim(0) * source_len_)
    throw ShapeError("incremental decoder: source mask does not match encoder output");
  for (const auto& layer : model.decoder_) {
    cross_keys_.push_back(model.split_heads(linear(encoder_out, layer.cross_attn.wk, layer.cross_attn.bk)));
    cross_values_.push_back(model.split_heads(linear(encoder_out, layer.cross_attn.wv, layer.cross_attn.bv)));
  }
  self_keys_.resize(model.decoder_.size());
  self_values_.resize(model.decoder_.size());
}

namespace {

// Rows of a [B, H, L, dh] tensor picked by `rows`, extended along L by the
// matching row of `append` [R, H, 1, dh] when given. `x` may be undefined
// (L = 0) when appending.
Tensor gather_heads(const Tensor& x, std::span<const std::size_t> rows, const Tensor& append) {
  const Tensor& like = x.defined() ? x : append;
  const std::size_t h = like.dim(1), dh = like.dim(3);
  const std::size_t len = x.defined() ? x.dim(2) : 0;
  const std::size_t out_len = len + (append.defined() ? 1 : 0);
  std::vector<double> out(rows.size() * h * out_len * dh);
  const auto src = x.defined() ? x.values() : std::span<const double>{};
  const auto add = append.defined() ? append.values() : std::span<const double>{};
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t hi = 0; hi < h; ++hi) {
      double* dst = out.data() + (r * h + hi) * out_len * dh;
      if (len) std::copy_n(src.data() + (rows[r] * h + hi) * len * dh, len * dh, dst);
      if (!add.empty()) std::copy_n(add.data() + (r * h + hi) * dh, dh, dst + len * dh);
    }
  return Tensor({rows.size(), h, out_len, dh}, std::move(out));
}

}  // namespace

Tensor IncrementalDecoder::step(std::span<const TokenId> tokens, std::span<const std::size_t> sources,
                                std::span<const std::size_t> parents, std::span<const int> languages) {
  NoGradGuard guard;
  const auto& m = *model_;
  const auto& cfg = m.config_;
  const std::size_t rows = tokens.size(), d = cfg.model_dim, h = cfg.num_heads;
  if (sources.size() != rows || (position_ > 0 && parents.size() != rows))
    throw ShapeError("incremental decoder: row bookkeeping does not match tokens");
  if (position_ >= cfg.max_len) throw LengthError("incremental decoder: max_len reached");

  Tensor x = scale(reshape(embedding(m.token_embedding_, tokens), {rows, 1, d}), std::sqrt(static_cast<double>(d)));
  std::vector<double> pos(rows * d);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(m.positions_.data() + position_ * d, d, pos.data() + r * d);
  x = add(x, Tensor({rows, 1, d}, std::move(pos)));
  if (cfg.tag_mode == TagMode::LanguageEmbedding) {
    if (languages.size() != rows) throw ValidationError("language-embedding mode needs one language id per row");
    x = add(x, m.language_embeddings(languages, 1));
  }

  std::vector<std::uint8_t> valid(rows * source_len_);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(source_valid_.data() + sources[r] * source_len_, source_len_, valid.data() + r * source_len_);
  Tensor cross_mask = additive_mask(valid, rows, h, 1, source_len_, false);
  Tensor self_mask({rows, h, 1, position_ + 1});
  std::vector<std::size_t> order(rows);
  if (position_ == 0)
    std::iota(order.begin(), order.end(), std::size_t{0});
  else
    order.assign(parents.begin(), parents.end());

  for (std::size_t l = 0; l < m.decoder_.size(); ++l) {
    const auto& layer = m.decoder_[l];
    Tensor normed = layer_norm(x, layer.self_norm.gain, layer.self_norm.bias);
    const Tensor k_new = m.split_heads(linear(normed, layer.self_attn.wk, layer.self_attn.bk));
    const Tensor v_new = m.split_heads(linear(normed, layer.self_attn.wv, layer.self_attn.bv));
    self_keys_[l] = gather_heads(self_keys_[l], order, k_new);
    self_values_[l] = gather_heads(self_values_[l], order, v_new);
    x = add(x, m.attend_heads(layer.self_attn, normed, self_keys_[l], self_values_[l], self_mask).output);
    const Tensor ck = gather_heads(cross_keys_[l], sources, Tensor());
    const Tensor cv = gather_heads(cross_values_[l], sources, Tensor());
    x = add(x, m.attend_heads(layer.cross_attn, layer_norm(x, layer.cross_norm.gain, layer.cross_norm.bias), ck, cv,
                              cross_mask)
                   .output);
    x = add(x, m.feed_forward(layer.ffn, layer_norm(x, layer.ffn_norm.gain, layer.ffn_norm.bias)));
  }
  ++position_;
  Tensor hidden = reshape(layer_norm(x, m.decoder_final_.gain, m.decoder_final_.bias), {rows, d});
  return m.output_log_probs(hidden);
}

std::vector<double> label_distributions(const TokenMatrix& target, std::size_t vocab, double epsilon) {
  std::vector<double> v(target.ids.size() * vocab, epsilon / static_cast<double>(vocab));
  for (std::size_t r = 0; r < target.ids.size(); ++r) {
    const auto tok = target.ids[r];
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab) throw ValidationError("label token out of range");
    v[r * vocab + static_cast<std::size_t>(tok)] += 1.0 - epsilon;
  }
  return v;
}

}  // namespace xencdec
