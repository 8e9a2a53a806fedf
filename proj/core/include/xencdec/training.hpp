#pragma once

// Objectives (MLE, mixup, crossover), the optimizer and the training loop.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "xencdec/crossover.hpp"
#include "xencdec/model.hpp"
#include "xencdec/sampling.hpp"
#include "xencdec/synthdata.hpp"

namespace xencdec {

enum class Objective { MLE, Mixup, XEncDecAttention, XEncDecSimplified };

std::string to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct TrainConfig {
  Objective objective = Objective::MLE;
  bool hard = false;
  SamplerConfig sampler;
  double beta_end = 0.7;
  double beta_anneal_fraction = 0.1;
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  std::size_t warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-9;
  double mixup_alpha = 0.2;
  double mle_loss_weight = 1.0;
  // Negative: sample per pair from the pairwise policy.
  double forced_ratio = -1.0;
  bool self_pairing = false;
  // Draw the L_X batch independently of the L_M batch.
  bool independent_cross_batch = false;
  bool exact_count_mask = false;
  std::size_t log_every = 100;
  std::set<Direction> held_out;  // must never appear in a training batch

  void validate() const;
  bool crossover() const {
    return objective == Objective::XEncDecAttention || objective == Objective::XEncDecSimplified;
  }
};

struct LossBreakdown {
  Tensor total_tensor;
  double mle = 0.0;    // L_M
  double cross = 0.0;  // L_X (or the mixup term)
  double total = 0.0;
  std::map<Direction, double> per_pair;  // mean per-position L_M by direction
};

// sum_r w_r KL(labels_r || exp(log_probs_r)) / sum_r w_r over [B, J, V].
Tensor label_loss(const Tensor& log_probs, std::span<const double> labels, std::span<const double> weights);

// Mean KL to the smoothed labels over non-PAD target positions. The forward
// output is returned through `out` when given.
LossBreakdown mle_loss(const ParallelBatch& batch, const Seq2SeqModel& model, ForwardOutput* out = nullptr);

// L_X for realized offspring: same normalisation, mixed labels.
Tensor crossover_loss(const CrossoverBatch& offspring, const Seq2SeqModel& model);

struct StepRandom {
  Rng pairing, ratio, mixup;
};

// L_M on the batch plus L_X on its shuffled crossover (same batch unless
// `cross_batch` is given). Parent statistics come from the L_M pass.
LossBreakdown xencdec_loss(const ParallelBatch& batch, const Seq2SeqModel& model, const TrainConfig& config,
                           const LangPairStats& stats, double beta, StepRandom& random,
                           const ParallelBatch* cross_batch = nullptr);

// L_M plus the mixup term with lambda ~ Beta(alpha, alpha) per pair.
LossBreakdown mixup_loss(const ParallelBatch& batch, const Seq2SeqModel& model, const TrainConfig& config,
                         double beta, StepRandom& random, const ParallelBatch* cross_batch = nullptr);

double beta_at(std::size_t step, const TrainConfig& config);
double learning_rate_at(std::size_t step, const TrainConfig& config);  // step counts from 1

class Adam {
 public:
  Adam(std::vector<NamedTensor> parameters, double beta1, double beta2, double epsilon);
  void step(double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsRecord {
  std::size_t step = 0;
  double mle = 0.0, cross = 0.0, total = 0.0, beta = 0.0, lr = 0.0;
  std::map<Direction, double> per_pair;
};

struct TrainResult {
  std::vector<MetricsRecord> log;       // every log_every steps and the last step
  std::vector<double> step_losses;      // total loss of every step
};

// Draws batch_size examples: pair by temperature sampling, example uniformly.
class BatchSource {
 public:
  BatchSource(const Corpus& corpus, const SamplerConfig& sampler, std::uint64_t stream);
  ParallelBatch next(std::size_t batch_size);
  const LangPairStats& stats() const { return stats_; }

 private:
  const Corpus* corpus_;
  LangPairStats stats_;
  CorpusSampler sampler_;
  Rng rng_;
};

using StepCallback = std::function<void(const MetricsRecord&)>;

// Metrics are also written as JSON lines to `metrics` when given.
TrainResult train(const TrainConfig& config, const Corpus& corpus, Seq2SeqModel& model,
                  std::ostream* metrics = nullptr, const Vocabulary* vocab = nullptr,
                  const StepCallback& on_log = {});

}  // namespace xencdec
