#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "crossover_oracle.hpp"
#include "fixtures.hpp"
#include "xencdec/crossover.hpp"

namespace xencdec::testing {

// Random nonnegative row-normalized attention and random predictive rows.
inline ParentStats random_stats(std::size_t batch, std::size_t target_len, std::size_t source_len,
                                std::size_t vocab, std::mt19937_64& rng) {
  ParentStats s;
  s.batch = batch;
  s.target_len = target_len;
  s.source_len = source_len;
  s.vocab = vocab;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto fill_rows = [&](std::vector<double>& v, std::size_t rows, std::size_t width) {
    v.resize(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0;
      for (std::size_t k = 0; k < width; ++k) total += v[r * width + k] = u(rng);
      for (std::size_t k = 0; k < width; ++k) v[r * width + k] /= total;
    }
  };
  fill_rows(s.attention, batch * target_len, source_len);
  fill_rows(s.predictions, batch * target_len, vocab);
  return s;
}

inline PairedBatch random_pair(std::size_t n, std::mt19937_64& rng, std::size_t vocab = 20) {
  auto ex = random_examples(n, rng);
  auto batch = make_batch(ex);
  auto stats = random_stats(n, batch.target.cols, batch.source.cols, vocab, rng);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return pair_batch(batch, stats, order);
}

inline PairedBatch swapped(const PairedBatch& p) {
  PairedBatch s;
  s.a = p.b;
  s.b = p.a;
  s.stats_a = p.stats_b;
  s.stats_b = p.stats_a;
  s.order = p.order;
  return s;
}

inline std::vector<double> row_slice(const Tensor& t, std::size_t row, std::size_t width) {
  const auto v = t.values();
  return {v.begin() + static_cast<std::ptrdiff_t>(row * width), v.begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
}

// Parent b of the pair as seen by the oracle; embeddings come from the model.
inline OracleParent oracle_parent(const ParallelBatch& batch, const ParentStats& stats, std::size_t b,
                                  const Tensor& source_embedding, const Tensor& decoder_embedding) {
  const std::size_t I = batch.source.cols, J = batch.target.cols;
  const std::size_t d = source_embedding.dim(2);
  OracleParent p;
  for (std::size_t i = 0; i < I; ++i) p.source.push_back(batch.source.at(b, i));
  for (std::size_t j = 0; j < J; ++j) {
    p.decoder_input.push_back(batch.decoder_input.at(b, j));
    p.target.push_back(batch.target.at(b, j));
  }
  p.target_language = batch.directions[b].target;
  p.source_embedding = row_slice(source_embedding, b, I * d);
  p.decoder_embedding = row_slice(decoder_embedding, b, J * d);
  if (!stats.attention.empty()) {
    const auto a = stats.attention_row(b);
    p.attention.assign(a.begin(), a.end());
  }
  if (!stats.predictions.empty()) {
    const auto f = stats.prediction_row(b);
    p.prediction.assign(f.begin(), f.end());
  }
  return p;
}

// Largest absolute difference between the library offspring and the oracle
// over weights, embeddings, labels and validity masks. SourceTag plans only.
inline double oracle_max_error(const PairedBatch& pair, const CrossoverBatch& off, const Seq2SeqModel& model,
                               const CrossoverConfig& config) {
  NoGradGuard guard;
  const auto& plan = off.plan;
  const std::size_t I = plan.source_len, J = plan.target_len, V = plan.vocab, d = model.config().model_dim;
  const Tensor ea = model.token_embeddings(pair.a.source), eb = model.token_embeddings(pair.b.source);
  const Tensor da = model.embed_tokens(pair.a.decoder_input, pair.a.target_languages());
  const Tensor db = model.embed_tokens(pair.b.decoder_input, pair.b.target_languages());
  OracleSettings s;
  s.tagged = plan.tag_mode == TagMode::SourceTag;
  s.attention = config.weighting == TargetWeighting::Attention;
  s.hard = config.hard;
  s.beta = config.beta;
  s.epsilon = config.label_smoothing;
  s.dim = d;
  s.vocab = V;
  double err = 0.0;
  auto track = [&err](double x, double y) { err = std::max(err, std::abs(x - y)); };
  for (std::size_t b = 0; b < plan.batch; ++b) {
    const auto A = oracle_parent(pair.a, pair.stats_a, b, ea, da);
    const auto B = oracle_parent(pair.b, pair.stats_b, b, eb, db);
    std::vector<int> m(plan.masks[b].m.begin(), plan.masks[b].m.end());
    const auto o = oracle_offspring(A, B, m, s);
    const auto src = row_slice(off.source_embeddings, b, I * d);
    const auto dec = row_slice(off.decoder_embeddings, b, J * d);
    for (std::size_t k = 0; k < I * d; ++k) track(src[k], o.source[k]);
    for (std::size_t k = 0; k < J * d; ++k) track(dec[k], o.decoder[k]);
    for (std::size_t j = 0; j < J; ++j) {
      track(plan.weights[b].t[j], o.t[j]);
      track(plan.loss_weight[b * J + j], o.loss_weight[j]);
    }
    for (std::size_t i = 0; i < I; ++i) track(plan.source_valid[b * I + i], o.source_valid[i]);
    for (std::size_t k = 0; k < J * V; ++k) track(plan.labels[b * J * V + k], o.labels[k]);
  }
  return err;
}

}  // namespace xencdec::testing
