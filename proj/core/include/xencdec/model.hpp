#pragma once

// Pre-LayerNorm encoder-decoder transformer. Callers hand the encoder and
// decoder embeddings rather than token ids, so interpolated inputs can be
// injected in place of a plain lookup.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xencdec/data.hpp"
#include "xencdec/tensor.hpp"

namespace xencdec {

class LengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t vocab_size = 0;
  std::size_t max_len = 32;
  std::size_t num_languages = 0;
  double label_smoothing = 0.1;
  TagMode tag_mode = TagMode::SourceTag;
  bool tie_embeddings = true;
  // Decoder layer whose head-averaged cross-attention is reported; -1 = last.
  int attention_layer = -1;

  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ForwardOutput {
  Tensor log_probs;    // [B, J, V]
  Tensor encoder_out;  // [B, I, d]
  // Head-averaged cross-attention of the reporting layer, [B, J, I] row-major.
  std::vector<double> cross_attention;
  std::size_t batch = 0;
  std::size_t target_len = 0;
  std::size_t source_len = 0;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // sqrt(d) * E[token] + sinusoidal position encoding, [B, L, d].
  Tensor token_embeddings(const TokenMatrix& tokens) const;
  // sqrt(d) * language vector broadcast along each row, [B, L, d].
  // Only valid in LanguageEmbedding mode.
  Tensor language_embeddings(std::span<const int> languages, std::size_t length) const;
  // token_embeddings plus, in LanguageEmbedding mode, language_embeddings.
  Tensor embed_tokens(const TokenMatrix& tokens, std::span<const int> languages = {}) const;

  // source_valid is [B x I] with 1 for real tokens; padded keys are masked.
  Tensor encode(const Tensor& source_embeddings, std::span<const std::uint8_t> source_valid) const;
  ForwardOutput decode(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                       std::span<const std::uint8_t> source_valid) const;

  // Log-probabilities of the token after the last decoder position, [B, V].
  // Inference only: no gradient is recorded.
  Tensor next_token_log_probs(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                              std::span<const std::uint8_t> source_valid) const;

  // Teacher-forced pass over a batch.
  ForwardOutput forward(const ParallelBatch& batch) const;

  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Deep copy of every parameter; the copy shares no storage with this model.
  Seq2SeqModel snapshot() const;

 private:
  struct Norm {
    Tensor gain, bias;
  };
  struct Attention {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Norm attn_norm;
    Attention self_attn;
    Norm ffn_norm;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Norm self_norm;
    Attention self_attn;
    Norm cross_norm;
    Attention cross_attn;
    Norm ffn_norm;
    FeedForward ffn;
  };
  struct AttentionResult {
    Tensor output;
    Tensor probs;  // [B, H, Lq, Lk]
  };

  AttentionResult attend(const Attention& w, const Tensor& query, const Tensor& memory,
                         const Tensor& additive_mask) const;
  // keys and values already split into heads, [B, H, Lk, dh].
  AttentionResult attend_heads(const Attention& w, const Tensor& query, const Tensor& keys, const Tensor& values,
                               const Tensor& additive_mask) const;
  Tensor split_heads(const Tensor& x) const;
  Tensor feed_forward(const FeedForward& w, const Tensor& x) const;
  Tensor run_decoder(const Tensor& target_input_embeddings, const Tensor& encoder_out,
                     std::span<const std::uint8_t> source_valid, std::vector<double>* cross_attention) const;
  Tensor output_log_probs(const Tensor& hidden) const;
  Tensor position_table(std::size_t batch, std::size_t length) const;
  void register_parameters();

  friend class IncrementalDecoder;

  ModelConfig config_;
  std::vector<double> positions_;  // [max_len x d]
  Tensor token_embedding_;
  Tensor language_embedding_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm encoder_final_;
  Norm decoder_final_;
  Tensor output_projection_;  // [d x V], untied only
  Tensor output_bias_;
  std::vector<NamedTensor> parameters_;
};

// Step-by-step decoding with cached self-attention keys and values and
// precomputed cross-attention memory. Inference only.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const Seq2SeqModel& model, const Tensor& encoder_out, std::span<const std::uint8_t> source_valid);

  // Feeds tokens[r] at the next position. Row r decodes encoder row
  // sources[r] and continues row parents[r] of the previous step (parents is
  // ignored at the first step). Returns next-token log-probabilities [R, V].
  Tensor step(std::span<const TokenId> tokens, std::span<const std::size_t> sources,
              std::span<const std::size_t> parents, std::span<const int> languages = {});

  std::size_t position() const { return position_; }

 private:
  const Seq2SeqModel* model_;
  std::vector<std::uint8_t> source_valid_;
  std::size_t source_len_ = 0;
  std::size_t position_ = 0;
  std::vector<Tensor> cross_keys_, cross_values_;
  std::vector<Tensor> self_keys_, self_values_;
};

// Label-smoothed one-hot rows v(y) for a target matrix, [rows*cols x vocab]:
// (1 - epsilon) on the token plus epsilon / vocab everywhere.
std::vector<double> label_distributions(const TokenMatrix& target, std::size_t vocab, double epsilon);

// Writes/reads the versioned binary checkpoint described in the README.
void save_checkpoint(const std::string& path, const Seq2SeqModel& model);
Seq2SeqModel load_checkpoint(const std::string& path);

}  // namespace xencdec
