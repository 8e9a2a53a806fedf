#include "xencdec/crossover.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "fp_contract.hpp"

namespace xencdec {

namespace {

constexpr double kAttentionGuard = 1e-9;

void smoothed_one_hot(TokenId token, std::size_t vocab, double epsilon, double* row) {
  std::fill(row, row + vocab, epsilon / static_cast<double>(vocab));
  row[static_cast<std::size_t>(token)] += 1.0 - epsilon;
}

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
}

}  // namespace

// ---- masks ------------------------------------------------------------------

std::size_t CrossoverMask::ones() const {
  return static_cast<std::size_t>(std::count(m.begin() + static_cast<std::ptrdiff_t>(first_sampled()), m.end(), 1));
}

std::size_t CrossoverMask::zeros() const { return m.size() - first_sampled() - ones(); }

void CrossoverMask::validate() const {
  if (m.size() <= first_sampled()) throw ValidationError("crossover mask has no content positions");
  for (auto v : m)
    if (v > 1) throw ValidationError("crossover mask must be binary");
}

CrossoverMask CrossoverMask::complement() const {
  CrossoverMask out = *this;
  for (std::size_t i = first_sampled(); i < m.size(); ++i) out.m[i] = static_cast<std::uint8_t>(1 - m[i]);
  out.effective_ratio = static_cast<double>(out.zeros()) / static_cast<double>(m.size() - first_sampled());
  return out;
}

CrossoverMask make_mask(std::vector<std::uint8_t> m, bool has_tag) {
  CrossoverMask mask;
  mask.m = std::move(m);
  mask.has_tag = has_tag;
  mask.validate();
  if (has_tag) mask.m[0] = 1;
  mask.effective_ratio = static_cast<double>(mask.zeros()) / static_cast<double>(mask.m.size() - mask.first_sampled());
  return mask;
}

CrossoverMask sample_mask(std::size_t length, double ratio, Rng& rng, bool has_tag, bool exact_count) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("mask ratio must lie in [0, 1]");
  const std::size_t first = has_tag ? 1 : 0;
  if (length <= first) {
    throw ValidationError("mask of length " + std::to_string(length) + " has no content positions");
  }
  std::vector<std::uint8_t> m(length, 1);
  const std::size_t n = length - first;
  if (exact_count) {
    const auto zeros = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), first);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < zeros; ++k) m[idx[k]] = 0;
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = first; i < length; ++i) m[i] = u(rng) < ratio ? 0 : 1;
  }
  return make_mask(std::move(m), has_tag);
}

WeightPair sentence_weights(const CrossoverMask& mask) {
  mask.validate();
  const auto n = static_cast<double>(mask.size() - mask.first_sampled());
  return {static_cast<double>(mask.ones()) / n, static_cast<double>(mask.zeros()) / n};
}

void source_weights(const CrossoverMask& mask, std::vector<double>& a, std::vector<double>& b) {
  const auto tag = sentence_weights(mask);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.has_tag && i == 0) {
      a.push_back(tag.a);
      b.push_back(tag.b);
    } else {
      a.push_back(mask.m[i] ? 1.0 : 0.0);
      b.push_back(mask.m[i] ? 0.0 : 1.0);
    }
  }
}

Tensor mix_source(const Tensor& e_x, const Tensor& e_xp, const CrossoverMask& mask) {
  if (e_x.shape() != e_xp.shape() || e_x.rank() != 2 || e_x.dim(0) != mask.size()) {
    throw ShapeError("mix_source: embeddings " + to_string(e_x.shape()) + " and " + to_string(e_xp.shape()) +
                     " for a mask of length " + std::to_string(mask.size()));
  }
  std::vector<double> a, b;
  source_weights(mask, a, b);
  return mix_rows(e_x, e_xp, a, b);
}

Tensor mix_language_tags(const Tensor& e_tag_x, const Tensor& e_tag_xp, const CrossoverMask& mask) {
  if (!mask.has_tag) throw ValidationError("language tag mixing needs a tagged mask");
  const auto w = sentence_weights(mask);
  const double a[] = {w.a}, b[] = {w.b};
  return mix_rows(e_tag_x, e_tag_xp, a, b);
}

// ---- target weights ---------------------------------------------------------

TargetWeights target_weights_simplified(const CrossoverMask& mask, std::size_t target_len) {
  const auto w = sentence_weights(mask);
  return {std::vector<double>(target_len, w.a), std::vector<double>(target_len, w.b), TargetWeightMode::Simplified};
}

TargetWeights target_weights_attention(std::span<const double> attention_a, std::span<const double> attention_b,
                                       std::size_t target_len, const CrossoverMask& mask) {
  const std::size_t len = mask.size();
  if (attention_a.size() != target_len * len || attention_b.size() != target_len * len) {
    throw ShapeError("attention matrices do not match [" + std::to_string(target_len) + " x " +
                     std::to_string(len) + "]");
  }
  std::vector<double> wa, wb;
  source_weights(mask, wa, wb);
  const auto fallback = sentence_weights(mask);
  TargetWeights out{{}, {}, TargetWeightMode::Attention};
  out.t.resize(target_len);
  out.complement.resize(target_len);
  for (std::size_t j = 0; j < target_len; ++j) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double a = attention_a[j * len + i], b = attention_b[j * len + i];
      if (a < 0.0 || b < 0.0) throw ValidationError("attention weights must be nonnegative");
      sa += a * wa[i];
      sb += b * wb[i];
    }
    if (sa < kAttentionGuard && sb < kAttentionGuard) {
      out.t[j] = fallback.a;
      out.complement[j] = fallback.b;
    } else {
      out.t[j] = sa / (sa + sb);
      out.complement[j] = sb / (sa + sb);
    }
  }
  return out;
}

TargetWeights harden(const TargetWeights& weights, bool different_target_languages) {
  if (!different_target_languages) return weights;
  TargetWeights out = weights;
  out.mode = TargetWeightMode::Hardened;
  for (std::size_t j = 0; j < out.t.size(); ++j) {
    const bool a = weights.t[j] > 0.5;
    out.t[j] = a ? 1.0 : 0.0;
    out.complement[j] = a ? 0.0 : 1.0;
  }
  return out;
}

void decoder_input_weights(const TargetWeights& weights, WeightPair first, std::vector<double>& a,
                           std::vector<double>& b) {
  const std::size_t len = weights.size();
  if (len == 0) return;
  a.push_back(first.a);
  b.push_back(first.b);
  for (std::size_t j = 1; j < len; ++j) {
    a.push_back(weights.t[j - 1]);
    b.push_back(weights.complement[j - 1]);
  }
}

Tensor mix_decoder_inputs(const Tensor& e_y, const Tensor& e_yp, const TargetWeights& weights, WeightPair first) {
  if (e_y.shape() != e_yp.shape() || e_y.rank() != 2 || e_y.dim(0) != weights.size()) {
    throw ShapeError("mix_decoder_inputs: embeddings " + to_string(e_y.shape()) + " and " +
                     to_string(e_yp.shape()) + " for " + std::to_string(weights.size()) + " weights");
  }
  std::vector<double> a, b;
  decoder_input_weights(weights, first, a, b);
  return mix_rows(e_y, e_yp, a, b);
}

XENCDEC_NO_FMA_ATTR std::vector<double> mix_labels(std::span<const double> v_y, std::span<const double> v_yp, std::size_t vocab,
                               const TargetWeights& weights, std::span<const double> refine_a,
                               std::span<const double> refine_b, double beta) {
  XENCDEC_NO_FMA_BODY
  check_beta(beta);
  const std::size_t n = weights.size() * vocab;
  if (v_y.size() != n || v_yp.size() != n) throw ShapeError("mix_labels: label rows do not match the weights");
  const bool refine = beta < 1.0;
  if (refine && (refine_a.size() != n || refine_b.size() != n)) {
    throw ShapeError("mix_labels: co-refinement needs predictions for both parents");
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double t = weights.t[j], c = weights.complement[j];
    for (std::size_t k = 0; k < vocab; ++k) {
      const std::size_t at = j * vocab + k;
      double la = v_y[at], lb = v_yp[at];
      if (refine) {
        la = beta * la + (1.0 - beta) * refine_a[at];
        lb = beta * lb + (1.0 - beta) * refine_b[at];
      }
      out[at] = la * t + lb * c;
    }
  }
  return out;
}

// ---- parent statistics ------------------------------------------------------

ParentStats collect_parent_stats(const ForwardOutput& out, bool attention, bool predictions) {
  ParentStats s;
  s.batch = out.batch;
  s.target_len = out.target_len;
  s.source_len = out.source_len;
  s.vocab = out.log_probs.dim(2);
  if (attention) s.attention = out.cross_attention;
  if (predictions) {
    const auto lp = out.log_probs.values();
    s.predictions.resize(lp.size());
    std::transform(lp.begin(), lp.end(), s.predictions.begin(), [](double x) { return std::exp(x); });
  }
  return s;
}

ParentStats ParentStats::permuted(std::span<const std::size_t> order) const {
  ParentStats out = *this;
  const std::size_t arow = target_len * source_len, prow = target_len * vocab;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!attention.empty())
      std::copy_n(attention.begin() + static_cast<std::ptrdiff_t>(order[r] * arow), arow,
                  out.attention.begin() + static_cast<std::ptrdiff_t>(r * arow));
    if (!predictions.empty())
      std::copy_n(predictions.begin() + static_cast<std::ptrdiff_t>(order[r] * prow), prow,
                  out.predictions.begin() + static_cast<std::ptrdiff_t>(r * prow));
  }
  return out;
}

std::span<const double> ParentStats::attention_row(std::size_t b) const {
  const std::size_t n = target_len * source_len;
  return std::span<const double>(attention).subspan(b * n, n);
}

std::span<const double> ParentStats::prediction_row(std::size_t b) const {
  const std::size_t n = target_len * vocab;
  return std::span<const double>(predictions).subspan(b * n, n);
}

PairedBatch pair_batch(const ParallelBatch& batch, const ParentStats& stats, std::vector<std::size_t> order) {
  if (order.size() != batch.size()) throw ValidationError("pairing order does not match the batch");
  PairedBatch p;
  p.a = batch;
  p.b = permute_batch(batch, order);
  p.stats_a = stats;
  p.stats_b = stats.permuted(order);
  p.order = std::move(order);
  return p;
}

void CrossoverConfig::validate() const {
  check_beta(beta);
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ValidationError("label smoothing must lie in [0, 1)");
}

// ---- plans ------------------------------------------------------------------

namespace {

CrossoverPlan empty_plan(const PairedBatch& pair, TagMode mode, std::size_t vocab) {
  if (pair.a.source.cols != pair.b.source.cols || pair.a.target.cols != pair.b.target.cols ||
      pair.a.size() != pair.b.size()) {
    throw ShapeError("paired batches must share their padded shape");
  }
  CrossoverPlan plan;
  plan.batch = pair.a.size();
  plan.source_len = pair.a.source.cols;
  plan.target_len = pair.a.target.cols;
  plan.vocab = vocab;
  plan.tag_mode = mode;
  plan.directions_a = pair.a.directions;
  plan.directions_b = pair.b.directions;
  plan.ids_a = pair.a.sentence_ids;
  plan.ids_b = pair.b.sentence_ids;
  return plan;
}

// Fills validity, labels and loss weights once source/target weights are set.
void finish_plan(CrossoverPlan& plan, const PairedBatch& pair, const CrossoverConfig& config) {
  const std::size_t I = plan.source_len, J = plan.target_len, V = plan.vocab;
  plan.source_valid.resize(plan.batch * I);
  for (std::size_t r = 0; r < plan.batch * I; ++r) {
    const bool a = plan.source_a[r] > 0.0 && pair.a.source.ids[r] != kPad;
    const bool b = plan.source_b[r] > 0.0 && pair.b.source.ids[r] != kPad;
    plan.source_valid[r] = (a || b) ? 1 : 0;
  }
  const bool refine = config.beta < 1.0;
  if (refine && (pair.stats_a.predictions.empty() || pair.stats_b.predictions.empty())) {
    throw ValidationError("co-refinement needs parent predictions");
  }
  plan.labels.resize(plan.batch * J * V);
  plan.loss_weight.resize(plan.batch * J);
  std::vector<double> va(J * V), vb(J * V);
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t j = 0; j < J; ++j) {
      smoothed_one_hot(pair.a.target.at(b, j), V, config.label_smoothing, va.data() + j * V);
      smoothed_one_hot(pair.b.target.at(b, j), V, config.label_smoothing, vb.data() + j * V);
      const auto& w = plan.weights[b];
      const bool a = w.t[j] > 0.0 && pair.a.target.at(b, j) != kPad;
      const bool bb = w.complement[j] > 0.0 && pair.b.target.at(b, j) != kPad;
      plan.loss_weight[b * J + j] = (a || bb) ? 1.0 : 0.0;
    }
    auto mixed = mix_labels(va, vb, V, plan.weights[b], refine ? pair.stats_a.prediction_row(b) : std::span<const double>{},
                            refine ? pair.stats_b.prediction_row(b) : std::span<const double>{}, config.beta);
    std::copy(mixed.begin(), mixed.end(), plan.labels.begin() + static_cast<std::ptrdiff_t>(b * J * V));
  }
}

}  // namespace

CrossoverPlan plan_crossover(const PairedBatch& pair, std::span<const CrossoverMask> masks,
                             std::span<const double> ratios, const CrossoverConfig& config, TagMode mode,
                             std::size_t vocab) {
  config.validate();
  CrossoverPlan plan = empty_plan(pair, mode, vocab);
  const std::size_t I = plan.source_len, J = plan.target_len;
  if (masks.size() != plan.batch) throw ValidationError("one crossover mask per pair is required");
  const bool tagged = mode == TagMode::SourceTag;
  if (config.weighting == TargetWeighting::Attention &&
      (pair.stats_a.attention.empty() || pair.stats_b.attention.empty())) {
    throw ValidationError("attention weighting needs parent cross-attention");
  }
  plan.masks.assign(masks.begin(), masks.end());
  plan.ratios.assign(ratios.begin(), ratios.end());
  for (std::size_t b = 0; b < plan.batch; ++b) {
    const auto& mask = masks[b];
    if (mask.size() != I || mask.has_tag != tagged) throw ValidationError("crossover mask does not fit the batch");
    source_weights(mask, plan.source_a, plan.source_b);
    const auto sw = sentence_weights(mask);
    plan.language_a.insert(plan.language_a.end(), I, sw.a);
    plan.language_b.insert(plan.language_b.end(), I, sw.b);

    TargetWeights soft = config.weighting == TargetWeighting::Attention
                             ? target_weights_attention(pair.stats_a.attention_row(b), pair.stats_b.attention_row(b), J, mask)
                             : target_weights_simplified(mask, J);
    const bool differ = pair.a.directions[b].target != pair.b.directions[b].target;
    const TargetWeights input = config.hard ? harden(soft, differ) : soft;
    const WeightPair first = tagged ? WeightPair{1.0, 0.0} : WeightPair{input.t[0], input.complement[0]};
    decoder_input_weights(input, first, plan.input_a, plan.input_b);
    plan.weights.push_back(std::move(soft));
  }
  finish_plan(plan, pair, config);
  return plan;
}

CrossoverPlan plan_mixup(const PairedBatch& pair, std::span<const double> lambdas, const CrossoverConfig& config,
                         TagMode mode, std::size_t vocab) {
  config.validate();
  CrossoverPlan plan = empty_plan(pair, mode, vocab);
  const std::size_t I = plan.source_len, J = plan.target_len;
  if (lambdas.size() != plan.batch) throw ValidationError("one mixup lambda per pair is required");
  for (std::size_t b = 0; b < plan.batch; ++b) {
    const double lam = lambdas[b];
    if (!(lam >= 0.0 && lam <= 1.0)) throw ValidationError("mixup lambda must lie in [0, 1]");
    const double rest = 1.0 - lam;
    plan.ratios.push_back(rest);
    plan.source_a.insert(plan.source_a.end(), I, lam);
    plan.source_b.insert(plan.source_b.end(), I, rest);
    plan.language_a.insert(plan.language_a.end(), I, lam);
    plan.language_b.insert(plan.language_b.end(), I, rest);
    TargetWeights w{std::vector<double>(J, lam), std::vector<double>(J, rest), TargetWeightMode::Simplified};
    const WeightPair first = mode == TagMode::SourceTag ? WeightPair{1.0, 0.0} : WeightPair{lam, rest};
    decoder_input_weights(w, first, plan.input_a, plan.input_b);
    plan.weights.push_back(std::move(w));
  }
  finish_plan(plan, pair, config);
  return plan;
}

CrossoverBatch realize(CrossoverPlan plan, const PairedBatch& pair, const Seq2SeqModel& model) {
  if (model.config().tag_mode != plan.tag_mode) throw ValidationError("plan and model disagree on the tag mode");
  CrossoverBatch out;
  if (plan.tag_mode == TagMode::SourceTag) {
    out.source_embeddings = mix_rows(model.token_embeddings(pair.a.source), model.token_embeddings(pair.b.source),
                                     plan.source_a, plan.source_b);
  } else {
    const std::size_t I = plan.source_len;
    Tensor tokens = mix_rows(model.token_embeddings(pair.a.source), model.token_embeddings(pair.b.source),
                             plan.source_a, plan.source_b);
    Tensor langs = mix_rows(model.language_embeddings(pair.a.source_languages(), I),
                            model.language_embeddings(pair.b.source_languages(), I), plan.language_a, plan.language_b);
    out.source_embeddings = add(tokens, langs);
  }
  out.decoder_embeddings = mix_rows(model.embed_tokens(pair.a.decoder_input, pair.a.target_languages()),
                                    model.embed_tokens(pair.b.decoder_input, pair.b.target_languages()),
                                    plan.input_a, plan.input_b);
  out.plan = std::move(plan);
  return out;
}

CrossoverBatch build_crossover_batch(const PairedBatch& pair, const CrossoverConfig& config,
                                     const LangPairStats& stats, const SamplerConfig& sampler,
                                     const Seq2SeqModel& model, Rng& rng, const double* ratio_override) {
  const TagMode mode = model.config().tag_mode;
  std::vector<CrossoverMask> masks;
  std::vector<double> ratios;
  for (std::size_t b = 0; b < pair.a.size(); ++b) {
    const double ratio = ratio_override ? *ratio_override
                                        : sample_pair_ratio(pair.a.directions[b], pair.b.directions[b], stats, sampler, rng).ratio;
    ratios.push_back(ratio);
    masks.push_back(sample_mask(pair.a.source.cols, ratio, rng, mode == TagMode::SourceTag, config.exact_count_mask));
  }
  return realize(plan_crossover(pair, masks, ratios, config, mode, model.config().vocab_size), pair, model);
}

void dump_crossover(std::ostream& out, const CrossoverPlan& plan, const Vocabulary* vocab) {
  const auto flags = out.flags();
  out << std::setprecision(6);
  for (std::size_t b = 0; b < plan.batch; ++b) {
    auto dir = [&](Direction d) {
      return vocab ? vocab->direction_name(d) : std::to_string(d.source) + "-" + std::to_string(d.target);
    };
    out << "pair=" << b << " a=" << plan.ids_a[b] << ':' << dir(plan.directions_a[b]) << " b=" << plan.ids_b[b]
        << ':' << dir(plan.directions_b[b]);
    if (b < plan.ratios.size()) out << " p=" << plan.ratios[b];
    if (b < plan.masks.size()) {
      out << " m=";
      const auto& m = plan.masks[b];
      for (std::size_t i = 0; i < m.size(); ++i) out << (m.has_tag && i == 0 ? '*' : static_cast<char>('0' + m.m[i]));
    }
    out << " t=";
    const auto& t = plan.weights[b].t;
    for (std::size_t j = 0; j < t.size(); ++j) out << (j ? "," : "") << t[j];
    out << '\n';
  }
  out.flags(flags);
}

}  // namespace xencdec
