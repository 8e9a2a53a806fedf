#pragma once

// Synthetic multilingual corpora: each language renders a sentence of
// concept ids through a word bijection and a reordering rule.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xencdec/data.hpp"
#include "xencdec/sampling.hpp"

namespace xencdec {

enum class ReorderRule { Identity, Reverse, Rotate, SwapAdjacentPairs };

std::string to_string(ReorderRule rule);

struct SyntheticLanguageSpec {
  std::string name;
  std::uint64_t permutation_seed = 0;
  ReorderRule rule = ReorderRule::Identity;
  std::size_t rotate_by = 0;  // Rotate only
  std::size_t corpus_size = 0;  // pairs with the pivot, per direction; unused for the pivot
};

// Pivot "en" plus two High (Identity, Rotate(1)), one Med (Reverse) and one
// Low (SwapAdjacentPairs) language of sizes 50000/20000/5000/1000.
std::vector<SyntheticLanguageSpec> default_language_specs();

using ConceptSentence = std::vector<int>;

class SyntheticLanguages {
 public:
  // specs[0] is the pivot; its word map is the identity.
  SyntheticLanguages(std::vector<SyntheticLanguageSpec> specs, std::size_t concept_vocab = 200);

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<SyntheticLanguageSpec>& specs() const { return specs_; }
  std::size_t num_languages() const { return specs_.size(); }

  TokenId word_token(int language, int concept_id) const;
  int token_concept(TokenId token) const;

  std::vector<TokenId> render(int language, const ConceptSentence& sentence) const;
  ConceptSentence parse(int language, std::span<const TokenId> tokens) const;

  // Source gets the target-language tag in SourceTag mode; target ends in EOS.
  ParallelExample make_example(Direction direction, const ConceptSentence& sentence, std::int64_t sentence_id,
                               TagMode mode) const;

 private:
  std::vector<SyntheticLanguageSpec> specs_;
  Vocabulary vocab_;
  std::vector<std::vector<int>> word_of_concept_;
  std::vector<std::vector<int>> concept_of_word_;
};

// Concept sentences reserved for evaluation; training never draws them.
bool is_eval_sentence(const ConceptSentence& sentence);
std::int64_t sentence_hash(const ConceptSentence& sentence);

struct LengthRange {
  std::size_t min = 4;
  std::size_t max = 16;
};

using Corpus = std::map<Direction, std::vector<ParallelExample>>;

// English-centric training corpora, both directions, spec.corpus_size each.
Corpus generate_corpus(const SyntheticLanguages& languages, LengthRange lengths, std::uint64_t seed, TagMode mode);
LangPairStats corpus_stats(const Corpus& corpus);

// The same n concept sentences rendered in every language.
struct MultiwayEval {
  std::vector<ConceptSentence> sentences;
  std::vector<std::int64_t> ids;

  std::vector<ParallelExample> examples(const SyntheticLanguages& languages, Direction direction,
                                        TagMode mode) const;
};

MultiwayEval generate_multiway_eval(const SyntheticLanguages& languages, std::size_t n, LengthRange lengths,
                                    std::uint64_t seed);

// Pivot-centric word dictionary between each language and language 0.
class NoiseDictionary {
 public:
  NoiseDictionary() = default;
  explicit NoiseDictionary(const SyntheticLanguages& languages);

  std::optional<TokenId> to_pivot(TokenId token) const;
  std::optional<TokenId> from_pivot(TokenId pivot_token, int language) const;
  void insert(int language, TokenId token, TokenId pivot_token);
  std::size_t size() const { return to_pivot_.size(); }

  // lang<TAB>token<TAB>english_token
  void write(std::ostream& out, const Vocabulary& vocab) const;
  static NoiseDictionary read(std::istream& in, const Vocabulary& vocab);

 private:
  std::map<TokenId, TokenId> to_pivot_;
  std::map<std::pair<int, TokenId>, TokenId> from_pivot_;
};

// Replaces floor(fraction * content length) source content tokens: pivot
// tokens go to the pair's other language, all others go to the pivot.
ParallelExample inject_code_switching(const ParallelExample& example, double fraction,
                                      const NoiseDictionary& dictionary, const Vocabulary& vocab, Rng& rng);

// pair_id<TAB>src_tokens<TAB>tgt_tokens, tokens space separated.
void write_corpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab);
Corpus read_corpus(std::istream& in, const Vocabulary& vocab);

}  // namespace xencdec
