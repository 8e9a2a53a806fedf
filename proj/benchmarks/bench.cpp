#include <benchmark/benchmark.h>

#include <random>

#include "xencdec/experiment.hpp"

using namespace xencdec;

namespace {

struct Toy {
  ExperimentConfig config = ExperimentConfig::preset("toy-m2m-xencdec-s-hard");
  SyntheticLanguages langs = config.languages();
  Corpus corpus = scenario_corpus(config, langs);
  MultiwayEval eval = generate_multiway_eval(langs, 64, config.data.lengths, 1);
};

const Toy& toy() {
  static const Toy t;
  return t;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor({rows, cols}, v);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  const auto& t = toy();
  TrainConfig cfg = t.config.train;
  cfg.objective = state.range(0) ? Objective::XEncDecSimplified : Objective::MLE;
  Seq2SeqModel model(t.config.resolved_model(), 1);
  Adam adam(model.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  BatchSource source(t.corpus, cfg.sampler, streams::kData);
  StepRandom random{make_stream(1, streams::kPairing), make_stream(1, streams::kRatio), make_stream(1, streams::kMixup)};
  for (auto _ : state) {
    const auto batch = source.next(cfg.batch_size);
    Tape tape;
    const auto loss = cfg.objective == Objective::MLE ? mle_loss(batch, model)
                                                      : xencdec_loss(batch, model, cfg, source.stats(), 0.7, random);
    tape.backward(loss.total_tensor);
    adam.step(1e-4);
  }
  state.SetLabel(state.range(0) ? "xencdec-s+hard" : "mle");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CrossoverBuild(benchmark::State& state) {
  const auto& t = toy();
  Seq2SeqModel model(t.config.resolved_model(), 1);
  BatchSource source(t.corpus, t.config.train.sampler, streams::kData);
  const auto batch = source.next(t.config.train.batch_size);
  ParentStats stats;
  {
    NoGradGuard guard;
    stats = collect_parent_stats(model.forward(batch), true, true);
  }
  Rng rng = make_stream(1, streams::kPairing);
  const auto pair = pair_batch(batch, stats, shuffle_for_pairing(batch.size(), rng));
  CrossoverConfig cfg;
  cfg.weighting = state.range(0) ? TargetWeighting::Attention : TargetWeighting::Simplified;
  cfg.hard = true;
  cfg.beta = 0.7;
  NoGradGuard guard;
  for (auto _ : state)
    benchmark::DoNotOptimize(build_crossover_batch(pair, cfg, source.stats(), t.config.train.sampler, model, rng));
  state.SetLabel(state.range(0) ? "attention" : "simplified");
}
BENCHMARK(BM_CrossoverBuild)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Decode(benchmark::State& state) {
  const auto& t = toy();
  Seq2SeqModel model(t.config.resolved_model(), 1);
  const auto examples = t.eval.examples(t.langs, {1, 0}, t.config.model.tag_mode);
  DecodeConfig cfg;
  cfg.beam_size = static_cast<std::size_t>(state.range(0));
  cfg.strategy = cfg.beam_size == 1 ? DecodeStrategy::Greedy : DecodeStrategy::Beam;
  cfg.max_length = 20;
  for (auto _ : state) benchmark::DoNotOptimize(decode(model, examples, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(examples.size()));
}
BENCHMARK(BM_Decode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Bleu(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<TokenId> tok(10, 60);
  std::uniform_int_distribution<std::size_t> len(4, 30);
  TokenSequences hyps, refs;
  for (std::int64_t s = 0; s < state.range(0); ++s) {
    std::vector<TokenId> h(len(rng)), r(len(rng));
    for (auto& x : h) x = tok(rng);
    for (auto& x : r) x = tok(rng);
    hyps.push_back(h);
    refs.push_back(r);
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(hyps, refs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bleu)->Arg(200)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
