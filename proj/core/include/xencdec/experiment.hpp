#pragma once

// Experiment configuration, presets and the end-to-end runner: data
// generation, training, evaluation and artifact emission.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "xencdec/evaluation.hpp"
#include "xencdec/model.hpp"
#include "xencdec/synthdata.hpp"
#include "xencdec/training.hpp"

namespace xencdec {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class Scenario { ManyToOne, OneToMany, ManyToMany };

std::string_view to_string(Scenario scenario);  // "many-to-one", ...
Scenario parse_scenario(std::string_view text);

struct DataConfig {
  std::vector<SyntheticLanguageSpec> languages = default_language_specs();
  std::size_t concept_vocab = 200;
  LengthRange lengths{4, 16};
  std::size_t eval_sentences = 200;
  std::size_t cluster_sentences = 100;
  // Direction names such as "h1-h2"; unset means {h1-h2, h2-m1} under
  // ManyToMany and none otherwise.
  std::optional<std::vector<std::string>> zero_shot;
};

struct EvalConfig {
  DecodeConfig decode;
  std::vector<double> noise_fractions{0.0, 0.05, 0.1, 0.15, 0.2};
  bool robustness = true;
  bool clustering = true;
  std::size_t threads = 1;
};

struct ExperimentConfig {
  std::string name = "custom";
  Scenario scenario = Scenario::ManyToMany;
  TrainConfig train;
  ModelConfig model;
  DataConfig data;
  EvalConfig eval;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";

  ExperimentConfig();

  // Assigns one flat key, e.g. "train.steps" = "3000". Throws ConfigError
  // on unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  // Every key with its resolved value. Keys that cannot change results
  // (output_dir, eval.threads) are left out unless `all` is set.
  std::map<std::string, std::string> to_map(bool all = true) const;

  void validate() const;

  std::vector<Direction> trained_directions() const;
  std::set<Direction> zero_shot_directions() const;
  std::vector<Direction> evaluated_directions() const;
  SyntheticLanguages languages() const;
  // ModelConfig with the vocabulary and language count filled in.
  ModelConfig resolved_model() const;

  static ExperimentConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();
};

struct ConfigKey {
  std::string name;
  std::string description;
  std::string default_value;
};

std::vector<ConfigKey> config_keys();

// Key descriptions and defaults, one "key = default  # description" per line.
void write_config_reference(std::ostream& out);

// "key = value" lines; '#' starts a comment. Later lines override earlier
// ones. A "preset" key, if present, must come first and seeds the defaults.
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& config);

// output_dir, joined under $XENCDEC_OUTPUT_ROOT when it is relative and the
// variable is set.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

// English-centric corpus restricted to the scenario's trained directions.
Corpus scenario_corpus(const ExperimentConfig& config, const SyntheticLanguages& languages);

Seq2SeqModel initial_model(const ExperimentConfig& config);

struct TrainedModel {
  Seq2SeqModel model;
  TrainResult result;
};

TrainedModel train_model(const ExperimentConfig& config, const SyntheticLanguages& languages,
                         std::ostream* metrics = nullptr);

// Clean, zero-shot, robustness and clustering evaluation of a trained model.
ExperimentReport evaluate_model(const ExperimentConfig& config, const Seq2SeqModel& model,
                                const SyntheticLanguages& languages);

std::vector<RobustnessPoint> noise_sweep(const ExperimentConfig& config, const Seq2SeqModel& model,
                                         const SyntheticLanguages& languages);
RepresentationSet representations(const ExperimentConfig& config, const Seq2SeqModel& model,
                                  const SyntheticLanguages& languages);

struct ExperimentArtifacts {
  std::filesystem::path directory;
  std::filesystem::path report, metrics, checkpoint, representations, config;
};

ExperimentArtifacts artifact_paths(const std::filesystem::path& directory);

// Trains, evaluates and writes config.txt, metrics.jsonl, model.ckpt,
// report.json and representations.tsv under the resolved output directory.
ExperimentReport run_experiment(const ExperimentConfig& config);

void write_report(const std::filesystem::path& path, const ExperimentReport& report);
ExperimentReport read_report(const std::filesystem::path& path);

}  // namespace xencdec
