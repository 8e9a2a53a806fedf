#include "xencdec/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace xencdec {

namespace {

std::vector<double> target_weights(const TokenMatrix& target) {
  std::vector<double> w(target.ids.size());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = target.ids[r] == kPad ? 0.0 : 1.0;
  return w;
}

// Mean per-position KL by direction, from values only.
std::map<Direction, double> per_pair_losses(const ForwardOutput& out, const ParallelBatch& batch,
                                            std::span<const double> labels) {
  const std::size_t J = out.target_len, V = out.log_probs.dim(2);
  const auto lp = out.log_probs.values();
  std::map<Direction, std::pair<double, double>> acc;
  for (std::size_t b = 0; b < out.batch; ++b) {
    auto& [sum, count] = acc[batch.directions[b]];
    for (std::size_t j = 0; j < J; ++j) {
      if (batch.target.at(b, j) == kPad) continue;
      const std::size_t row = (b * J + j) * V;
      double kl = 0.0;
      for (std::size_t k = 0; k < V; ++k) {
        const double t = labels[row + k];
        if (t > 0.0) kl += t * (std::log(t) - lp[row + k]);
      }
      sum += kl;
      count += 1.0;
    }
  }
  std::map<Direction, double> res;
  for (const auto& [d, v] : acc) res[d] = v.second > 0 ? v.first / v.second : 0.0;
  return res;
}

void check_held_out(const ParallelBatch& batch, const TrainConfig& config) {
  for (const auto& d : batch.directions)
    if (config.held_out.count(d)) {
      throw std::logic_error("held-out direction " + std::to_string(d.source) + "->" + std::to_string(d.target) +
                             " reached a training batch");
    }
}

std::vector<std::size_t> pairing_order(std::size_t n, const TrainConfig& config, Rng& rng) {
  if (config.self_pairing) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
  }
  return shuffle_for_pairing(n, rng);
}

CrossoverConfig crossover_config(const TrainConfig& config, const Seq2SeqModel& model, double beta) {
  CrossoverConfig c;
  c.weighting = config.objective == Objective::XEncDecAttention ? TargetWeighting::Attention : TargetWeighting::Simplified;
  c.hard = config.hard;
  c.beta = beta;
  c.label_smoothing = model.config().label_smoothing;
  c.exact_count_mask = config.exact_count_mask;
  return c;
}

// Parent statistics for the L_X pairs, either from the L_M pass or from a
// detached pass over an independent batch.
ParentStats parent_stats(const ForwardOutput& lm_out, const ParallelBatch* cross_batch, const Seq2SeqModel& model,
                         bool attention, bool predictions) {
  if (!cross_batch) return collect_parent_stats(lm_out, attention, predictions);
  NoGradGuard guard;
  return collect_parent_stats(model.forward(*cross_batch), attention, predictions);
}

LossBreakdown combine(const LossBreakdown& lm, const Tensor& lx, double mle_weight) {
  LossBreakdown out = lm;
  out.cross = lx.item();
  out.total_tensor = mle_weight == 1.0 ? add(lm.total_tensor, lx) : add(scale(lm.total_tensor, mle_weight), lx);
  out.total = out.total_tensor.item();
  return out;
}

}  // namespace

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::MLE: return "mle";
    case Objective::Mixup: return "mixup";
    case Objective::XEncDecAttention: return "xencdec-a";
    case Objective::XEncDecSimplified: return "xencdec-s";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  if (text == "mle") return Objective::MLE;
  if (text == "mixup") return Objective::Mixup;
  if (text == "xencdec-a") return Objective::XEncDecAttention;
  if (text == "xencdec-s") return Objective::XEncDecSimplified;
  throw ValidationError("unknown objective '" + std::string(text) + "' (mle, mixup, xencdec-a, xencdec-s)");
}

void TrainConfig::validate() const {
  sampler.validate();
  if (!(beta_end >= 0.0 && beta_end <= 1.0)) throw ValidationError("beta_end must lie in [0, 1]");
  if (!(beta_anneal_fraction >= 0.0 && beta_anneal_fraction <= 1.0)) {
    throw ValidationError("beta_anneal_fraction must lie in [0, 1]");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(mixup_alpha > 0.0)) throw ValidationError("mixup_alpha must be positive");
  if (forced_ratio > 1.0) throw ValidationError("forced_ratio must lie in [0, 1] (or be negative for sampling)");
  if (!(mle_loss_weight >= 0.0)) throw ValidationError("mle_loss_weight must be nonnegative");
  if (log_every == 0) throw ValidationError("log_every must be positive");
}

Tensor label_loss(const Tensor& log_probs, std::span<const double> labels, std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("loss over an empty set of positions");
  return scale(weighted_kl_rows(labels, log_probs, weights), 1.0 / total);
}

LossBreakdown mle_loss(const ParallelBatch& batch, const Seq2SeqModel& model, ForwardOutput* out) {
  if (batch.size() == 0) throw ValidationError("empty batch");
  ForwardOutput fwd = model.forward(batch);
  const auto labels = label_distributions(batch.target, model.config().vocab_size, model.config().label_smoothing);
  LossBreakdown res;
  res.total_tensor = label_loss(fwd.log_probs, labels, target_weights(batch.target));
  res.mle = res.total = res.total_tensor.item();
  res.per_pair = per_pair_losses(fwd, batch, labels);
  if (out) *out = std::move(fwd);
  return res;
}

Tensor crossover_loss(const CrossoverBatch& offspring, const Seq2SeqModel& model) {
  const auto& plan = offspring.plan;
  Tensor enc = model.encode(offspring.source_embeddings, plan.source_valid);
  ForwardOutput out = model.decode(offspring.decoder_embeddings, enc, plan.source_valid);
  return label_loss(out.log_probs, plan.labels, plan.loss_weight);
}

LossBreakdown xencdec_loss(const ParallelBatch& batch, const Seq2SeqModel& model, const TrainConfig& config,
                           const LangPairStats& stats, double beta, StepRandom& random,
                           const ParallelBatch* cross_batch) {
  if (!config.crossover()) throw ValidationError("xencdec_loss needs a crossover objective");
  ForwardOutput lm_out;
  LossBreakdown lm = mle_loss(batch, model, &lm_out);
  const ParallelBatch& parents = cross_batch ? *cross_batch : batch;
  const bool attention = config.objective == Objective::XEncDecAttention;
  ParentStats ps = parent_stats(lm_out, cross_batch, model, attention, beta < 1.0);
  PairedBatch pair = pair_batch(parents, ps, pairing_order(parents.size(), config, random.pairing));
  const double forced = config.forced_ratio;
  CrossoverBatch offspring = build_crossover_batch(pair, crossover_config(config, model, beta), stats, config.sampler,
                                                   model, random.ratio, forced >= 0.0 ? &forced : nullptr);
  return combine(lm, crossover_loss(offspring, model), config.mle_loss_weight);
}

LossBreakdown mixup_loss(const ParallelBatch& batch, const Seq2SeqModel& model, const TrainConfig& config,
                         double beta, StepRandom& random, const ParallelBatch* cross_batch) {
  if (!(config.mixup_alpha > 0.0)) throw ValidationError("mixup alpha must be positive");
  ForwardOutput lm_out;
  LossBreakdown lm = mle_loss(batch, model, &lm_out);
  const ParallelBatch& parents = cross_batch ? *cross_batch : batch;
  ParentStats ps = parent_stats(lm_out, cross_batch, model, false, beta < 1.0);
  PairedBatch pair = pair_batch(parents, ps, pairing_order(parents.size(), config, random.pairing));
  std::vector<double> lambdas(parents.size());
  for (auto& l : lambdas) l = sample_beta(config.mixup_alpha, config.mixup_alpha, random.mixup);
  CrossoverPlan plan =
      plan_mixup(pair, lambdas, crossover_config(config, model, beta), model.config().tag_mode, model.config().vocab_size);
  return combine(lm, crossover_loss(realize(std::move(plan), pair, model), model), config.mle_loss_weight);
}

double beta_at(std::size_t step, const TrainConfig& config) {
  const double horizon = config.beta_anneal_fraction * static_cast<double>(config.steps);
  if (horizon <= 0.0) return config.beta_end;
  return config.beta_end * std::min(1.0, static_cast<double>(step) / horizon);
}

double learning_rate_at(std::size_t step, const TrainConfig& config) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(std::max<std::size_t>(config.warmup_steps, 1));
  return config.learning_rate * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(std::vector<NamedTensor> parameters, double beta1, double beta2, double epsilon)
    : params_(std::move(parameters)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& tensor = params_[p].tensor;
    if (!tensor.has_grad()) continue;
    const auto g = tensor.grad();
    auto x = tensor.mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      x[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
    }
  }
}

BatchSource::BatchSource(const Corpus& corpus, const SamplerConfig& sampler, std::uint64_t stream)
    : corpus_(&corpus),
      stats_(corpus_stats(corpus)),
      sampler_(stats_, sampler.data_temperature),
      rng_(make_stream(sampler.seed, stream)) {}

ParallelBatch BatchSource::next(std::size_t batch_size) {
  std::vector<ParallelExample> examples;
  examples.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto& pool = corpus_->at(sampler_.next(rng_));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    examples.push_back(pool[pick(rng_)]);
  }
  return make_batch(examples);
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, Seq2SeqModel& model, std::ostream* metrics,
                  const Vocabulary* vocab, const StepCallback& on_log) {
  config.validate();
  BatchSource source(corpus, config.sampler, streams::kCorpus);
  BatchSource cross_source(corpus, config.sampler, streams::kCorpus + 100);
  StepRandom random{make_stream(config.sampler.seed, streams::kPairing), make_stream(config.sampler.seed, streams::kRatio),
                    make_stream(config.sampler.seed, streams::kMixup)};
  Adam adam(model.parameters(), config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  TrainResult result;
  result.step_losses.reserve(config.steps);
  auto dir_name = [&](Direction d) {
    return vocab ? vocab->direction_name(d) : std::to_string(d.source) + "-" + std::to_string(d.target);
  };

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const double beta = beta_at(step - 1, config);
    const double lr = learning_rate_at(step, config);
    ParallelBatch batch = source.next(config.batch_size);
    check_held_out(batch, config);
    ParallelBatch cross;
    if (config.independent_cross_batch && config.objective != Objective::MLE) {
      cross = cross_source.next(config.batch_size);
      check_held_out(cross, config);
    }
    const ParallelBatch* cross_ptr = config.independent_cross_batch && config.objective != Objective::MLE ? &cross : nullptr;

    model.zero_grad();
    LossBreakdown loss;
    {
      Tape tape;
      auto diverged = [&](const std::string& why) {
        std::ostringstream diag;
        diag << "non-finite loss at step " << step << " (" << why << "): L_M=" << loss.mle << " L_X=" << loss.cross
             << " beta=" << beta << " lr=" << lr << "\nbatch:\n";
        for (std::size_t b = 0; b < batch.size(); ++b) {
          diag << dir_name(batch.directions[b]) << " src=";
          for (auto t : batch.source.row(b)) diag << t << ' ';
          diag << "tgt=";
          for (auto t : batch.target.row(b)) diag << t << ' ';
          diag << '\n';
        }
        return TrainingDivergence(diag.str());
      };
      try {
        switch (config.objective) {
          case Objective::MLE:
            loss = mle_loss(batch, model);
            if (config.mle_loss_weight != 1.0) {
              loss.total_tensor = scale(loss.total_tensor, config.mle_loss_weight);
              loss.total = loss.total_tensor.item();
            }
            break;
          case Objective::Mixup:
            loss = mixup_loss(batch, model, config, beta, random, cross_ptr);
            break;
          default:
            loss = xencdec_loss(batch, model, config, source.stats(), beta, random, cross_ptr);
            break;
        }
      } catch (const NumericError& e) {
        throw diverged(e.what());
      }
      if (!std::isfinite(loss.total)) throw diverged("total");
      tape.backward(loss.total_tensor);
    }
    adam.step(lr);
    result.step_losses.push_back(loss.total);

    if (step % config.log_every == 0 || step == config.steps) {
      MetricsRecord rec{step, loss.mle, loss.cross, loss.total, beta, lr, loss.per_pair};
      if (metrics) {
        nlohmann::ordered_json j;
        j["step"] = rec.step;
        j["L_M"] = rec.mle;
        j["L_X"] = rec.cross;
        j["total"] = rec.total;
        j["beta"] = rec.beta;
        j["lr"] = rec.lr;
        nlohmann::ordered_json pp = nlohmann::ordered_json::object();
        for (const auto& [d, v] : rec.per_pair) pp[dir_name(d)] = v;
        j["per_pair"] = pp;
        *metrics << j.dump() << '\n';
      }
      if (on_log) on_log(rec);
      result.log.push_back(std::move(rec));
    }
  }
  return result;
}

}  // namespace xencdec
