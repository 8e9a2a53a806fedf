#include "xencdec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xencdec/tensor.hpp"

namespace xencdec {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

std::size_t LangPairStats::size(Direction pair) const {
  auto it = sizes.find(pair);
  if (it == sizes.end()) {
    throw ValidationError("no corpus statistics for pair " + std::to_string(pair.source) + "->" +
                          std::to_string(pair.target));
  }
  return it->second;
}

void LangPairStats::validate() const {
  if (sizes.empty()) throw ValidationError("empty language-pair statistics");
  for (const auto& [pair, n] : sizes)
    if (n == 0) throw ValidationError("corpus size must be at least 1");
}

void SamplerConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p must lie in [0, 1]");
  if (!std::isfinite(tau)) throw ValidationError("tau must be finite");
  if (!(data_temperature > 0.0)) throw ValidationError("data temperature must be positive");
}

double bernoulli_probability(double tau, double d) { return 1.0 / (1.0 + std::exp(-tau * d)); }

double size_ratio(Direction li, Direction lj, const LangPairStats& stats) {
  return static_cast<double>(stats.size(li)) / static_cast<double>(stats.size(lj));
}

PairRatio sample_pair_ratio(Direction li, Direction lj, const LangPairStats& stats, const SamplerConfig& config,
                            Rng& rng) {
  const double prob = bernoulli_probability(config.tau, size_ratio(li, lj, stats));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PairRatio out;
  out.g = u(rng) < prob;
  out.ratio = out.g ? config.p : 1.0 - config.p;
  return out;
}

CorpusSampler::CorpusSampler(const LangPairStats& stats, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("data temperature must be positive");
  stats.validate();
  std::vector<double> w;
  for (const auto& [pair, n] : stats.sizes) {
    pairs_.push_back(pair);
    w.push_back(std::pow(static_cast<double>(n), 1.0 / temperature));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double x : w) probabilities_.push_back(x / total);
  dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

Direction CorpusSampler::next(Rng& rng) { return pairs_[dist_(rng)]; }

std::vector<std::size_t> shuffle_for_pairing(std::size_t n, Rng& rng) {
  if (n == 0) throw ValidationError("cannot pair an empty batch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

ParallelBatch shuffle_for_pairing(const ParallelBatch& batch, Rng& rng, std::vector<std::size_t>* order) {
  auto perm = shuffle_for_pairing(batch.size(), rng);
  auto out = permute_batch(batch, perm);
  if (order) *order = std::move(perm);
  return out;
}

double sample_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("Beta parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng), y = gb(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

}  // namespace xencdec
