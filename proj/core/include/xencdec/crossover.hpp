#pragma once

// Crossover examples built from two parents: source mask, language-tag
// interpolation, target weights (attention, simplified, hard), mixed decoder
// inputs and co-refined mixed labels.
//
// Every weight pair is stored as (weight_a, weight_b) with both entries
// computed directly rather than as 1 - w, so swapping the parents and
// complementing the mask reproduces the same batch bit for bit.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "xencdec/data.hpp"
#include "xencdec/model.hpp"
#include "xencdec/sampling.hpp"
#include "xencdec/tensor.hpp"

namespace xencdec {

struct CrossoverMask {
  std::vector<std::uint8_t> m;  // 1 = parent A; m[0] is unused when has_tag
  bool has_tag = true;
  double effective_ratio = 0.0;  // fraction of zeros over the sampled positions

  std::size_t size() const { return m.size(); }
  std::size_t first_sampled() const { return has_tag ? 1 : 0; }
  std::size_t ones() const;
  std::size_t zeros() const;
  void validate() const;
  CrossoverMask complement() const;
};

// Each sampled position is 0 with probability `ratio` (or exactly
// round(ratio * n) zeros when exact_count is set).
CrossoverMask sample_mask(std::size_t length, double ratio, Rng& rng, bool has_tag = true, bool exact_count = false);
CrossoverMask make_mask(std::vector<std::uint8_t> m, bool has_tag = true);

struct WeightPair {
  double a = 1.0;
  double b = 0.0;
};

// Sentence-level share of each parent: ones / n and zeros / n over the
// sampled positions.
WeightPair sentence_weights(const CrossoverMask& mask);

// Per source position; the tag position takes sentence_weights.
void source_weights(const CrossoverMask& mask, std::vector<double>& a, std::vector<double>& b);

// e(x~) = e(x) m + e(x') (1 - m), tag row mixed by sentence weight. Inputs [L, d].
Tensor mix_source(const Tensor& e_x, const Tensor& e_xp, const CrossoverMask& mask);

// Soft interpolation of two tag embeddings [d] by the content fraction.
Tensor mix_language_tags(const Tensor& e_tag_x, const Tensor& e_tag_xp, const CrossoverMask& mask);

enum class TargetWeightMode { Attention, Simplified, Hardened };

struct TargetWeights {
  std::vector<double> t;           // weight of parent A, per target position
  std::vector<double> complement;  // weight of parent B
  TargetWeightMode mode = TargetWeightMode::Simplified;

  std::size_t size() const { return t.size(); }
};

// t_j = S_A / (S_A + S_B), S_A = sum_i A_ji w_a(i), S_B = sum_i A'_ji w_b(i),
// with w from source_weights. A and A' are [J x I] row-major over the mask
// length. Rows with both sums below 1e-9 fall back to the simplified weight.
TargetWeights target_weights_attention(std::span<const double> attention_a, std::span<const double> attention_b,
                                       std::size_t target_len, const CrossoverMask& mask);
TargetWeights target_weights_simplified(const CrossoverMask& mask, std::size_t target_len);

// Quantizes t to {0, 1} (t > 0.5) when the target languages differ.
TargetWeights harden(const TargetWeights& weights, bool different_target_languages);

// Decoder input j >= 1 mixes by the weight at j - 1. Position 0 (the start
// token) takes `first` -- (1, 0) when both parents share it.
void decoder_input_weights(const TargetWeights& weights, WeightPair first, std::vector<double>& a,
                           std::vector<double>& b);
Tensor mix_decoder_inputs(const Tensor& e_y, const Tensor& e_yp, const TargetWeights& weights,
                          WeightPair first = {});

// Rows [J x V]: each parent label is co-refined as beta v + (1 - beta) f,
// then the two are mixed by (t, complement). Refinement spans may be empty
// when beta == 1.
std::vector<double> mix_labels(std::span<const double> v_y, std::span<const double> v_yp, std::size_t vocab,
                               const TargetWeights& weights, std::span<const double> refine_a,
                               std::span<const double> refine_b, double beta);

// Detached per-example outputs of a teacher-forced pass at the current
// parameters: head-averaged cross-attention and predictive distributions.
struct ParentStats {
  std::size_t batch = 0, target_len = 0, source_len = 0, vocab = 0;
  std::vector<double> attention;    // [B, J, I] or empty
  std::vector<double> predictions;  // [B, J, V] probabilities or empty

  ParentStats permuted(std::span<const std::size_t> order) const;
  std::span<const double> attention_row(std::size_t b) const;
  std::span<const double> prediction_row(std::size_t b) const;
};

ParentStats collect_parent_stats(const ForwardOutput& out, bool attention, bool predictions);

// Parent A is the batch as drawn; parent B is its shuffle.
struct PairedBatch {
  ParallelBatch a, b;
  ParentStats stats_a, stats_b;
  std::vector<std::size_t> order;
};

PairedBatch pair_batch(const ParallelBatch& batch, const ParentStats& stats, std::vector<std::size_t> order);

enum class TargetWeighting { Attention, Simplified };

struct CrossoverConfig {
  TargetWeighting weighting = TargetWeighting::Simplified;
  bool hard = false;
  double beta = 1.0;
  double label_smoothing = 0.1;
  bool exact_count_mask = false;

  void validate() const;
};

// Data-only description of a batch of offspring. Weight vectors are
// row-aligned with the flattened [B*I] source and [B*J] target positions.
struct CrossoverPlan {
  std::size_t batch = 0, source_len = 0, target_len = 0, vocab = 0;
  TagMode tag_mode = TagMode::SourceTag;
  std::vector<CrossoverMask> masks;          // empty for mixup
  std::vector<TargetWeights> weights;        // soft weights per pair
  std::vector<double> ratios;                // sampled shuffle ratio per pair
  std::vector<double> source_a, source_b;    // token (+position) weights
  std::vector<double> language_a, language_b;  // source language embedding weights
  std::vector<std::uint8_t> source_valid;
  std::vector<double> input_a, input_b;      // decoder inputs
  std::vector<double> labels;                // [B*J x V]
  std::vector<double> loss_weight;           // [B*J], 0 or 1
  std::vector<Direction> directions_a, directions_b;
  std::vector<std::int64_t> ids_a, ids_b;
};

CrossoverPlan plan_crossover(const PairedBatch& pair, std::span<const CrossoverMask> masks,
                             std::span<const double> ratios, const CrossoverConfig& config, TagMode mode,
                             std::size_t vocab);

// Mixup: one lambda per pair applied to every source, input and label position.
CrossoverPlan plan_mixup(const PairedBatch& pair, std::span<const double> lambdas, const CrossoverConfig& config,
                         TagMode mode, std::size_t vocab);

struct CrossoverBatch {
  CrossoverPlan plan;
  Tensor source_embeddings;   // [B, I, d]
  Tensor decoder_embeddings;  // [B, J, d]
};

// Mixes the model's embeddings according to the plan (differentiable).
CrossoverBatch realize(CrossoverPlan plan, const PairedBatch& pair, const Seq2SeqModel& model);

// Samples a ratio and mask per pair, then plans and realizes the offspring.
CrossoverBatch build_crossover_batch(const PairedBatch& pair, const CrossoverConfig& config,
                                     const LangPairStats& stats, const SamplerConfig& sampler,
                                     const Seq2SeqModel& model, Rng& rng, const double* ratio_override = nullptr);

// One line per pair: parent ids and directions, ratio, m, t.
void dump_crossover(std::ostream& out, const CrossoverPlan& plan, const Vocabulary* vocab = nullptr);

}  // namespace xencdec
