#pragma once

// Stochastic policies: seeded streams, pairwise shuffle ratios,
// temperature-based corpus sampling and batch pairing.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "xencdec/data.hpp"

namespace xencdec {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream id); new ids never perturb old ones.
Rng make_stream(std::uint64_t seed, std::uint64_t stream_id);

// Well-known stream ids.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kEvalData = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kCorpus = 4;
inline constexpr std::uint64_t kPairing = 5;
inline constexpr std::uint64_t kRatio = 6;
inline constexpr std::uint64_t kMask = 7;
inline constexpr std::uint64_t kNoise = 8;
inline constexpr std::uint64_t kMixup = 9;
}  // namespace streams

struct LangPairStats {
  std::map<Direction, std::size_t> sizes;

  std::size_t size(Direction pair) const;  // throws ValidationError if absent
  void validate() const;
};

struct SamplerConfig {
  double p = 0.15;
  double tau = 0.8;
  double data_temperature = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// sigma(tau * d)
double bernoulli_probability(double tau, double d);

// d(l_i, l_j) = |D^{l_i}| / |D^{l_j}|
double size_ratio(Direction li, Direction lj, const LangPairStats& stats);

struct PairRatio {
  double ratio = 0.0;  // fraction of mask zeros: weight of parent B's tokens
  bool g = false;
};

// g ~ Bernoulli(sigma(tau d)); ratio = p if g else 1 - p.
PairRatio sample_pair_ratio(Direction li, Direction lj, const LangPairStats& stats,
                            const SamplerConfig& config, Rng& rng);

// Draws language pairs with probability proportional to |D^l|^(1/T).
class CorpusSampler {
 public:
  CorpusSampler(const LangPairStats& stats, double temperature);

  Direction next(Rng& rng);
  std::span<const Direction> pairs() const { return pairs_; }
  std::span<const double> probabilities() const { return probabilities_; }

 private:
  std::vector<Direction> pairs_;
  std::vector<double> probabilities_;
  std::discrete_distribution<std::size_t> dist_;
};

// Random permutation of 0..n-1; pairing is (batch[i], batch[order[i]]).
// Self-pairs are allowed.
std::vector<std::size_t> shuffle_for_pairing(std::size_t n, Rng& rng);
ParallelBatch shuffle_for_pairing(const ParallelBatch& batch, Rng& rng, std::vector<std::size_t>* order = nullptr);

// Beta(a, b) through two gamma draws.
double sample_beta(double a, double b, Rng& rng);

}  // namespace xencdec
