#pragma once

// Decoding, token-level BLEU, winning ratio, code-switching robustness and
// encoder representation analysis.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xencdec/data.hpp"
#include "xencdec/model.hpp"
#include "xencdec/synthdata.hpp"

namespace xencdec {

enum class DecodeStrategy { Greedy, Beam };

std::string_view to_string(DecodeStrategy strategy);
DecodeStrategy parse_decode_strategy(std::string_view text);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::Beam;
  std::size_t beam_size = 4;
  double length_penalty = 0.6;
  // Generated tokens including EOS; 0 means the model's max_len - 1.
  std::size_t max_length = 0;
  std::size_t batch_size = 50;

  void validate() const;
  std::size_t beams() const { return strategy == DecodeStrategy::Greedy ? 1 : beam_size; }
};

// ((5 + length) / 6)^alpha
double length_penalty(std::size_t length, double alpha);

// Translates each example's source toward its direction's target language.
// Outputs end in EOS unless truncated at the maximum length. Rows are
// decoded in fixed chunks of batch_size, so results do not depend on how
// callers split work across threads.
std::vector<std::vector<TokenId>> decode(const Seq2SeqModel& model, std::span<const ParallelExample> examples,
                                         const DecodeConfig& config);

// Tokens before the first EOS, with PAD, BOS and EOS removed.
std::vector<TokenId> strip_special(std::span<const TokenId> tokens);

using TokenSequences = std::vector<std::vector<TokenId>>;

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

BleuStats bleu_stats(const TokenSequences& hypotheses, const TokenSequences& references);
double bleu_from_stats(const BleuStats& stats);
// Corpus BLEU-4 in [0, 100]: clipped n-gram precision, add-one smoothing for
// n >= 2, brevity penalty exp(1 - r/h) when h < r.
double bleu(const TokenSequences& hypotheses, const TokenSequences& references);

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

// Mean of the encoder outputs over each source's content positions (the
// language tag and padding are excluded). Sentences are rendered in
// `language` and tagged toward `target_language`.
Matrix encoder_representations(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                               std::span<const ConceptSentence> sentences, int language, int target_language,
                               std::size_t batch_size = 50);

// Mean over the unpadded content positions of already encoded sources.
Matrix mean_pool(const Tensor& encoder_out, const TokenMatrix& source, const Vocabulary& vocab);

struct ClusteringMetrics {
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
};

// Euclidean SC, CH and DB; needs at least two clusters of two or more points.
ClusteringMetrics clustering_metrics(const Matrix& points, std::span<const std::int64_t> labels);

enum class DirectionKind { ToPivot, FromPivot, ZeroShot };

std::string_view to_string(DirectionKind kind);  // "xx-en", "en-xx", "zero-shot"
DirectionKind direction_kind(Direction direction, const std::set<Direction>& zero_shot);

struct DirectionScore {
  std::string direction;  // e.g. "h1-en"
  std::string group;      // resource group of the non-pivot side, or "zero-shot"
  std::string kind;
  double bleu = 0.0;
};

struct RobustnessPoint {
  double fraction = 0.0;
  std::string kind;
  double bleu = 0.0;
};

struct ExperimentReport {
  std::string scenario;
  std::string objective;
  std::map<std::string, std::string> config;  // resolved key=value echo
  std::vector<DirectionScore> directions;     // sorted by direction name
  std::vector<RobustnessPoint> robustness;    // by fraction, then kind
  std::optional<ClusteringMetrics> clustering;
  double final_mle_loss = 0.0;
  double final_cross_loss = 0.0;

  // Averages by group, by kind, over supervised directions ("supervised")
  // and over all directions ("all").
  std::map<std::string, double> averages() const;
  nlohmann::ordered_json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& json);
};

// Fraction of directions where a's BLEU strictly exceeds b's.
double winning_ratio(const std::vector<DirectionScore>& a, const std::vector<DirectionScore>& b);

struct ComparisonRow {
  std::string name;
  std::string kind;  // "direction", "group" or "zero-shot"
  double bleu_a = 0.0, bleu_b = 0.0, delta = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  double winning_ratio = 0.0;  // over supervised directions
  double zero_shot_winning_ratio = 0.0;
  std::vector<RobustnessPoint> robustness_delta;  // a - b at each point
  std::optional<ClusteringMetrics> clustering_delta;

  nlohmann::ordered_json to_json() const;
  // Low/Med/High/Avg/WR table in the layout of a results table.
  void write_table(std::ostream& out) const;
};

// Throws ValidationError unless both reports cover the same directions.
Comparison compare_reports(const ExperimentReport& a, const ExperimentReport& b);

// Resource group of a language from its pivot corpus size.
std::string resource_group(const SyntheticLanguageSpec& spec);

struct EvalSet {
  Direction direction;
  std::vector<ParallelExample> examples;
};

// One example set per direction from the multiway set.
std::vector<EvalSet> make_eval_sets(const SyntheticLanguages& languages, const MultiwayEval& eval,
                                    std::span<const Direction> directions, TagMode mode);

// BLEU per direction, evaluated on up to `threads` threads and merged in
// direction order.
std::vector<DirectionScore> evaluate_directions(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                                std::span<const EvalSet> sets, const std::set<Direction>& zero_shot,
                                                const DecodeConfig& decode_config, std::size_t threads = 1);

// Mean direction BLEU per (fraction, kind) under code-switching noise.
// Noise for fraction index f and set index s comes from its own stream of
// `seed`, so each fraction sees fresh noise and results do not depend on
// threads. Fractions must ascend from 0.
std::vector<RobustnessPoint> robustness_sweep(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                              std::span<const EvalSet> sets, const std::set<Direction>& zero_shot,
                                              std::span<const double> fractions,
                                              const NoiseDictionary& dictionary, const DecodeConfig& decode_config,
                                              std::uint64_t seed, std::size_t threads = 1);

// Representations of the multiway sentences in every language, stacked by
// language; labels are the sentence ids.
struct RepresentationSet {
  Matrix points;
  std::vector<int> languages;
  std::vector<std::int64_t> labels;
};

RepresentationSet multiway_representations(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                           const MultiwayEval& eval, std::size_t sentences);

// language<TAB>sentence_id<TAB>d0 d1 ... d_{dim-1}
void write_representations(std::ostream& out, const RepresentationSet& set, const Vocabulary& vocab);

}  // namespace xencdec
