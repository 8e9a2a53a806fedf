#include "doctest.h"

#include <cmath>
#include <sstream>

#include "crossover_fixtures.hpp"
#include "xencdec/crossover.hpp"

using namespace xencdec;
using namespace xencdec::testing;

namespace {

Tensor rows(std::size_t n, std::size_t d, double base) {
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = base + static_cast<double>(i);
  return Tensor({n, d}, v);
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool bit_equal(const Tensor& a, const Tensor& b) { return as_vector(a) == as_vector(b); }

CrossoverPlan plan_with(const PairedBatch& pair, const std::vector<CrossoverMask>& masks, const CrossoverConfig& cfg) {
  const std::vector<double> ratios(masks.size(), 0.15);
  return plan_crossover(pair, masks, ratios, cfg, TagMode::SourceTag, 20);
}

std::vector<CrossoverMask> random_masks(const PairedBatch& pair, double ratio, std::mt19937_64& rng) {
  std::vector<CrossoverMask> masks;
  for (std::size_t b = 0; b < pair.a.size(); ++b) masks.push_back(sample_mask(pair.a.source.cols, ratio, rng));
  return masks;
}

}  // namespace

TEST_CASE("mask sampling extremes and errors") {
  Rng rng(1);
  auto zero = sample_mask(6, 0.0, rng);
  CHECK(zero.zeros() == 0);
  CHECK(zero.effective_ratio == 0.0);
  auto one = sample_mask(6, 1.0, rng);
  CHECK(one.ones() == 0);
  CHECK(one.m[0] == 1);
  CHECK(one.effective_ratio == 1.0);
  CHECK_THROWS_AS(sample_mask(1, 0.2, rng), ValidationError);
  CHECK_THROWS_AS(sample_mask(4, 1.5, rng), ValidationError);
  CHECK_NOTHROW(sample_mask(1, 0.2, rng, false));
  CHECK_THROWS_AS(make_mask({1, 2, 0}), ValidationError);
}

TEST_CASE("mask zero fraction follows the ratio") {
  Rng rng(11);
  auto mask = sample_mask(100001, 0.15, rng);
  CHECK(std::abs(mask.effective_ratio - 0.15) <= 0.004);
  auto exact = sample_mask(41, 0.15, rng, true, true);
  CHECK(exact.zeros() == 6);
}

TEST_CASE("source mixing selects rows per position") {
  const Tensor a = rows(2, 3, 0.0), b = rows(2, 3, 100.0);
  auto mixed = as_vector(mix_source(a, b, make_mask({1, 0}, false)));
  CHECK(mixed == std::vector<double>{0, 1, 2, 103, 104, 105});
  CHECK(bit_equal(mix_source(a, b, make_mask({1, 1}, false)), a));
  CHECK(bit_equal(mix_source(a, a, make_mask({0, 1}, false)), a));
  CHECK_THROWS_AS(mix_source(a, rows(3, 3, 0.0), make_mask({1, 0}, false)), ShapeError);
}

TEST_CASE("language tag interpolation by content fraction") {
  const Tensor ta = Tensor({1, 2}, {1.0, 3.0}), tb = Tensor({1, 2}, {5.0, -1.0});
  CHECK(bit_equal(mix_language_tags(ta, tb, make_mask({1, 1, 1, 1})), ta));
  CHECK(as_vector(mix_language_tags(ta, tb, make_mask({1, 1, 1, 0, 0}))) == std::vector<double>{3.0, 1.0});
  CHECK(bit_equal(mix_language_tags(ta, ta, make_mask({1, 0, 1, 0})), ta));
  CHECK_THROWS_AS(mix_language_tags(ta, tb, make_mask({1, 0}, false)), ValidationError);
}

TEST_CASE("attention target weights") {
  const auto mask = make_mask({1, 0}, false);
  const std::vector<double> A{0.7, 0.3}, Ap{0.4, 0.6};
  auto w = target_weights_attention(A, Ap, 1, mask);
  CHECK(w.t[0] == doctest::Approx(0.5384615384615384).epsilon(1e-15));
  CHECK(w.t[0] + w.complement[0] == doctest::Approx(1.0));
  CHECK(w.mode == TargetWeightMode::Attention);
  CHECK(target_weights_attention(A, Ap, 1, make_mask({1, 1}, false)).t[0] == 1.0);
  CHECK(target_weights_attention(A, Ap, 1, make_mask({0, 0}, false)).t[0] == 0.0);

  const std::vector<double> zero(4, 0.0);
  auto fallback = target_weights_attention(zero, zero, 1, make_mask({1, 1, 0, 1}));
  CHECK(fallback.t[0] == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(target_weights_attention(A, Ap, 2, mask), ShapeError);
  const std::vector<double> negative{-0.1, 1.1};
  CHECK_THROWS_AS(target_weights_attention(negative, Ap, 1, mask), ValidationError);
}

TEST_CASE("attention weights include the tag at its soft weight") {
  // tag column carries attention; sentence weights are 1/3 vs 2/3
  const auto mask = make_mask({1, 1, 0, 0});
  const std::vector<double> A{0.5, 0.2, 0.2, 0.1}, Ap{0.3, 0.3, 0.2, 0.2};
  const double sa = 0.5 / 3.0 + 0.2, sb = 0.3 * 2.0 / 3.0 + 0.2 + 0.2;
  CHECK(target_weights_attention(A, Ap, 1, mask).t[0] == doctest::Approx(sa / (sa + sb)).epsilon(1e-14));
}

TEST_CASE("simplified target weights") {
  auto w = target_weights_simplified(make_mask({1, 1, 1, 0, 0}), 3);
  CHECK(w.t == std::vector<double>(3, 0.5));
  CHECK(target_weights_simplified(make_mask({1, 1, 1}), 2).t == std::vector<double>(2, 1.0));
  CHECK(target_weights_simplified(make_mask({1, 0, 0}), 2).t == std::vector<double>(2, 0.0));
}

TEST_CASE("hardening thresholds strictly above one half") {
  TargetWeights w{{0.5, 0.51, 0.3}, {0.5, 0.49, 0.7}, TargetWeightMode::Attention};
  auto h = harden(w, true);
  CHECK(h.t == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(h.complement == std::vector<double>{1.0, 0.0, 1.0});
  CHECK(h.mode == TargetWeightMode::Hardened);
  auto same = harden(w, false);
  CHECK(same.t == w.t);
  CHECK(same.mode == TargetWeightMode::Attention);
}

TEST_CASE("decoder input mixing uses the previous weight") {
  const Tensor u = rows(3, 2, 0.0), v = rows(3, 2, 10.0);
  TargetWeights ones{{1, 1, 1}, {0, 0, 0}, TargetWeightMode::Simplified};
  CHECK(bit_equal(mix_decoder_inputs(u, v, ones), u));
  TargetWeights half{{0.5, 0.25, 0.9}, {0.5, 0.75, 0.1}, TargetWeightMode::Attention};
  auto mixed = as_vector(mix_decoder_inputs(u, v, half));
  CHECK(mixed[0] == 0.0);  // start position belongs to parent A
  CHECK(mixed[2] == doctest::Approx((2.0 + 12.0) / 2.0));
  CHECK(mixed[4] == doctest::Approx(0.25 * 4.0 + 0.75 * 14.0));
  TargetWeights hard = harden(half, true);
  auto h = as_vector(mix_decoder_inputs(u, v, hard));
  CHECK(h[2] == 12.0);
  CHECK(h[4] == 14.0);
}

TEST_CASE("label mixing and co-refinement") {
  const std::size_t V = 6;
  std::vector<double> ya(V, 0.0), yb(V, 0.0);
  ya[2] = 1.0;
  yb[5] = 1.0;
  TargetWeights w{{0.3}, {0.7}, TargetWeightMode::Simplified};
  auto mixed = mix_labels(ya, yb, V, w, {}, {}, 1.0);
  CHECK(mixed == std::vector<double>{0, 0, 0.3, 0, 0, 0.7});

  std::vector<double> fa(V, 1.0 / 6.0), fb(V, 0.0);
  fb[0] = 1.0;
  auto refined = mix_labels(ya, yb, V, w, fa, fb, 0.5);
  CHECK(refined[0] == doctest::Approx(0.3 * 0.5 / 6.0 + 0.7 * 0.5));
  CHECK(refined[2] == doctest::Approx(0.3 * (0.5 + 0.5 / 6.0)));
  CHECK(refined[5] == doctest::Approx(0.3 * 0.5 / 6.0 + 0.7 * 0.5));
  double total = 0;
  for (double x : refined) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  TargetWeights a{{1.0}, {0.0}, TargetWeightMode::Simplified};
  CHECK(mix_labels(ya, yb, V, a, {}, {}, 1.0) == ya);
  CHECK_THROWS_AS(mix_labels(ya, yb, V, w, fa, fb, 1.5), ValidationError);
  CHECK_THROWS_AS(mix_labels(ya, yb, V, w, {}, {}, 0.5), ShapeError);
}

TEST_CASE("brute-force construction of a three-token pair") {
  // parents: "<2t> a b" and "<2t> c PAD" with hand-set attention
  Seq2SeqModel model(tiny_config(), 21);
  Vocabulary vocab({"en", "xx"}, 7);
  ParallelExample x{{vocab.tag(1), vocab.content_token(0, 1), vocab.content_token(0, 2)},
                    {vocab.content_token(1, 3), vocab.content_token(1, 4), kEos}, {0, 1}, 0};
  ParallelExample y{{vocab.tag(0), vocab.content_token(1, 5)}, {vocab.content_token(0, 6), kEos}, {1, 0}, 1};
  const std::vector<ParallelExample> ex{x, y};
  auto batch = make_batch(ex);
  ParentStats stats;
  stats.batch = 2;
  stats.target_len = 3;
  stats.source_len = 3;
  stats.vocab = 20;
  stats.attention = {0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.1, 0.8,   // example 0
                     0.5, 0.5, 0.0, 0.1, 0.9, 0.0, 0.0, 0.0, 0.0};  // example 1, last row fully padded
  stats.predictions.assign(2 * 3 * 20, 1.0 / 20.0);
  auto pair = pair_batch(batch, stats, {1, 0});
  const std::vector<CrossoverMask> masks{make_mask({1, 0, 1}), make_mask({1, 1, 0})};
  for (bool hard : {false, true}) {
    for (double beta : {1.0, 0.4}) {
      CrossoverConfig cfg;
      cfg.weighting = TargetWeighting::Attention;
      cfg.hard = hard;
      cfg.beta = beta;
      auto off = realize(plan_with(pair, masks, cfg), pair, model);
      CHECK(oracle_max_error(pair, off, model, cfg) <= 1e-12);
    }
  }
  CrossoverConfig cfg;
  cfg.weighting = TargetWeighting::Attention;
  auto plan = plan_with(pair, masks, cfg);
  // pair 0: A = x, B = y, m = [*,0,1]; tag weights (1/2, 1/2)
  const double sa = 0.6 * 0.5 + 0.1, sb = 0.5 * 0.5 + 0.5;
  CHECK(plan.weights[0].t[0] == doctest::Approx(sa / (sa + sb)).epsilon(1e-14));
  // y has no third target token: pair 1 keeps row 2 through parent B
  CHECK(plan.loss_weight == std::vector<double>{1, 1, 1, 1, 1, 1});
}

TEST_CASE("random pairs match the brute-force construction") {
  std::mt19937_64 rng(5);
  Seq2SeqModel model(tiny_config(), 3);
  Rng mask_rng(9);
  for (int round = 0; round < 20; ++round) {
    auto pair = random_pair(6, rng);
    for (auto weighting : {TargetWeighting::Attention, TargetWeighting::Simplified}) {
      CrossoverConfig cfg;
      cfg.weighting = weighting;
      cfg.hard = round % 2 == 0;
      cfg.beta = round % 3 == 0 ? 1.0 : 0.3;
      cfg.label_smoothing = round % 4 == 0 ? 0.0 : 0.1;
      auto off = realize(plan_with(pair, random_masks(pair, 0.4, mask_rng), cfg), pair, model);
      CHECK(oracle_max_error(pair, off, model, cfg) <= 1e-10);
    }
  }
}

TEST_CASE("mixed labels stay on the simplex") {
  std::mt19937_64 rng(8);
  Rng mask_rng(2);
  for (int round = 0; round < 12; ++round) {
    auto pair = random_pair(5, rng);
    CrossoverConfig cfg;
    cfg.weighting = round % 2 ? TargetWeighting::Attention : TargetWeighting::Simplified;
    cfg.hard = round % 3 == 0;
    cfg.beta = round / 12.0;
    cfg.label_smoothing = round % 4 * 0.1;
    auto plan = plan_with(pair, random_masks(pair, 0.5, mask_rng), cfg);
    for (std::size_t r = 0; r < plan.loss_weight.size(); ++r) {
      if (plan.loss_weight[r] == 0.0) continue;
      double total = 0;
      for (std::size_t k = 0; k < plan.vocab; ++k) total += plan.labels[r * plan.vocab + k];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
    std::vector<double> lambdas(pair.a.size(), 0.37);
    auto mix = plan_mixup(pair, lambdas, cfg, TagMode::SourceTag, 20);
    for (std::size_t r = 0; r < mix.loss_weight.size(); ++r) {
      double total = 0;
      for (std::size_t k = 0; k < mix.vocab; ++k) total += mix.labels[r * mix.vocab + k];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("swapping parents and complementing masks gives the same offspring") {
  std::mt19937_64 rng(13);
  Rng mask_rng(4);
  Seq2SeqModel model(tiny_config(), 2);
  for (auto weighting : {TargetWeighting::Attention, TargetWeighting::Simplified}) {
    auto pair = random_pair(8, rng);
    auto masks = random_masks(pair, 0.35, mask_rng);
    std::vector<CrossoverMask> complemented;
    for (const auto& m : masks) complemented.push_back(m.complement());
    CrossoverConfig cfg;
    cfg.weighting = weighting;
    cfg.beta = 0.6;
    auto one = realize(plan_with(pair, masks, cfg), pair, model);
    auto other = realize(plan_with(swapped(pair), complemented, cfg), swapped(pair), model);
    CHECK(bit_equal(one.source_embeddings, other.source_embeddings));
    CHECK(bit_equal(one.decoder_embeddings, other.decoder_embeddings));
    CHECK(one.plan.labels == other.plan.labels);
    CHECK(one.plan.loss_weight == other.plan.loss_weight);
    CHECK(one.plan.source_valid == other.plan.source_valid);
    for (std::size_t b = 0; b < one.plan.batch; ++b) CHECK(one.plan.weights[b].t == other.plan.weights[b].complement);
  }
}

TEST_CASE("hardening changes decoder inputs only") {
  std::mt19937_64 rng(17);
  Rng mask_rng(6);
  Seq2SeqModel model(tiny_config(), 7);
  auto pair = random_pair(8, rng);
  auto masks = random_masks(pair, 0.4, mask_rng);
  CrossoverConfig soft;
  soft.weighting = TargetWeighting::Attention;
  soft.beta = 0.5;
  CrossoverConfig hard = soft;
  hard.hard = true;
  auto s = realize(plan_with(pair, masks, soft), pair, model);
  auto h = realize(plan_with(pair, masks, hard), pair, model);
  CHECK(s.plan.labels == h.plan.labels);
  CHECK(bit_equal(s.source_embeddings, h.source_embeddings));
  bool any_differs = false;
  for (std::size_t b = 0; b < h.plan.batch; ++b) {
    const bool differ = pair.a.directions[b].target != pair.b.directions[b].target;
    for (std::size_t j = 0; j < h.plan.target_len; ++j) {
      const double w = h.plan.input_a[b * h.plan.target_len + j];
      if (differ) CHECK((w == 0.0 || w == 1.0));
      any_differs = any_differs || w != s.plan.input_a[b * s.plan.target_len + j];
    }
  }
  CHECK(any_differs);
}

TEST_CASE("self-pairing reproduces the original batch") {
  std::mt19937_64 rng(23);
  Rng mask_rng(1);
  Seq2SeqModel model(tiny_config(), 5);
  auto batch = make_batch(random_examples(5, rng));
  auto stats = random_stats(5, batch.target.cols, batch.source.cols, 20, rng);
  auto pair = pair_batch(batch, stats, {0, 1, 2, 3, 4});
  CrossoverConfig cfg;
  cfg.weighting = TargetWeighting::Attention;
  auto off = realize(plan_with(pair, random_masks(pair, 0.5, mask_rng), cfg), pair, model);
  NoGradGuard guard;
  const auto src = as_vector(model.token_embeddings(batch.source));
  const auto dec = as_vector(model.embed_tokens(batch.decoder_input));
  const auto got_src = as_vector(off.source_embeddings), got_dec = as_vector(off.decoder_embeddings);
  for (std::size_t k = 0; k < src.size(); ++k) CHECK(got_src[k] == doctest::Approx(src[k]).epsilon(1e-14));
  for (std::size_t k = 0; k < dec.size(); ++k) CHECK(got_dec[k] == doctest::Approx(dec[k]).epsilon(1e-14));
  const auto labels = label_distributions(batch.target, 20, cfg.label_smoothing);
  for (std::size_t k = 0; k < labels.size(); ++k) CHECK(off.plan.labels[k] == doctest::Approx(labels[k]).epsilon(1e-14));
  CHECK(off.plan.source_valid == batch.source.valid_mask());
}

TEST_CASE("an all-ones mask reproduces parent A exactly") {
  std::mt19937_64 rng(29);
  Seq2SeqModel model(tiny_config(), 6);
  auto pair = random_pair(6, rng);
  std::vector<CrossoverMask> masks;
  for (std::size_t b = 0; b < 6; ++b) masks.push_back(make_mask(std::vector<std::uint8_t>(pair.a.source.cols, 1)));
  CrossoverConfig cfg;
  cfg.weighting = TargetWeighting::Attention;
  cfg.hard = true;
  auto off = realize(plan_with(pair, masks, cfg), pair, model);
  NoGradGuard guard;
  CHECK(bit_equal(off.source_embeddings, model.token_embeddings(pair.a.source)));
  CHECK(bit_equal(off.decoder_embeddings, model.embed_tokens(pair.a.decoder_input)));
  CHECK(off.plan.labels == label_distributions(pair.a.target, 20, cfg.label_smoothing));
  const auto valid = pair.a.target.valid_mask();
  for (std::size_t r = 0; r < valid.size(); ++r) CHECK(off.plan.loss_weight[r] == valid[r]);
}

TEST_CASE("language embedding mode mixes language vectors by sentence weight") {
  std::mt19937_64 rng(31);
  Seq2SeqModel model(tiny_config(TagMode::LanguageEmbedding), 8);
  auto ex = random_examples(4, rng, 5, false);
  auto batch = make_batch(ex);
  auto pair = pair_batch(batch, random_stats(4, batch.target.cols, batch.source.cols, 20, rng), {1, 0, 3, 2});
  std::vector<CrossoverMask> masks;
  for (std::size_t b = 0; b < 4; ++b) masks.push_back(make_mask(std::vector<std::uint8_t>(batch.source.cols, 1), false));
  CrossoverConfig cfg;
  auto plan = plan_crossover(pair, masks, std::vector<double>(4, 0.0), cfg, TagMode::LanguageEmbedding, 20);
  auto off = realize(plan, pair, model);
  NoGradGuard guard;
  CHECK(bit_equal(off.source_embeddings, model.embed_tokens(pair.a.source, pair.a.source_languages())));
  CHECK(bit_equal(off.decoder_embeddings, model.embed_tokens(pair.a.decoder_input, pair.a.target_languages())));
  CHECK_THROWS_AS(realize(plan, pair, Seq2SeqModel(tiny_config(), 1)), ValidationError);
}

TEST_CASE("plan validation") {
  std::mt19937_64 rng(37);
  auto pair = random_pair(3, rng);
  Rng mask_rng(3);
  auto masks = random_masks(pair, 0.2, mask_rng);
  CrossoverConfig cfg;
  masks.pop_back();
  CHECK_THROWS_AS(plan_with(pair, masks, cfg), ValidationError);
  masks = random_masks(pair, 0.2, mask_rng);
  auto no_stats = pair;
  no_stats.stats_a.attention.clear();
  cfg.weighting = TargetWeighting::Attention;
  CHECK_THROWS_AS(plan_with(no_stats, masks, cfg), ValidationError);
  cfg.weighting = TargetWeighting::Simplified;
  cfg.beta = 0.5;
  no_stats.stats_b.predictions.clear();
  CHECK_THROWS_AS(plan_with(no_stats, masks, cfg), ValidationError);
  cfg.beta = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("sampled batches and the debug dump") {
  std::mt19937_64 rng(41);
  Seq2SeqModel model(tiny_config(), 9);
  auto pair = random_pair(4, rng);
  LangPairStats stats;
  stats.sizes[{0, 1}] = 100;
  stats.sizes[{1, 0}] = 100;
  SamplerConfig sampler;
  Rng r1(5), r2(5);
  CrossoverConfig cfg;
  auto one = build_crossover_batch(pair, cfg, stats, sampler, model, r1);
  auto two = build_crossover_batch(pair, cfg, stats, sampler, model, r2);
  CHECK(bit_equal(one.source_embeddings, two.source_embeddings));
  for (double p : one.plan.ratios) CHECK((p == 0.15 || p == 0.85));
  const double forced = 0.0;
  auto zero = build_crossover_batch(pair, cfg, stats, sampler, model, r1, &forced);
  for (const auto& m : zero.plan.masks) CHECK(m.zeros() == 0);
  std::ostringstream out;
  dump_crossover(out, one.plan);
  CHECK(out.str().find("pair=3") != std::string::npos);
  CHECK(out.str().find(" m=*") != std::string::npos);
}
