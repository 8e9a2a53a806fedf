#include "xencdec/synthdata.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "xencdec/tensor.hpp"

namespace xencdec {

namespace {

std::vector<int> reorder(const std::vector<int>& words, const SyntheticLanguageSpec& spec) {
  std::vector<int> out = words;
  switch (spec.rule) {
    case ReorderRule::Identity:
      break;
    case ReorderRule::Reverse:
      std::reverse(out.begin(), out.end());
      break;
    case ReorderRule::Rotate:
      if (!out.empty()) std::rotate(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(spec.rotate_by % out.size()), out.end());
      break;
    case ReorderRule::SwapAdjacentPairs:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

std::vector<int> unorder(const std::vector<int>& words, const SyntheticLanguageSpec& spec) {
  std::vector<int> out = words;
  switch (spec.rule) {
    case ReorderRule::Identity:
      break;
    case ReorderRule::Reverse:
      std::reverse(out.begin(), out.end());
      break;
    case ReorderRule::Rotate:
      if (!out.empty()) std::rotate(out.rbegin(), out.rbegin() + static_cast<std::ptrdiff_t>(spec.rotate_by % out.size()), out.rend());
      break;
    case ReorderRule::SwapAdjacentPairs:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

ConceptSentence draw_sentence(std::size_t concept_vocab, LengthRange lengths, Rng& rng) {
  std::uniform_int_distribution<std::size_t> len(lengths.min, lengths.max);
  std::uniform_int_distribution<int> word(0, static_cast<int>(concept_vocab) - 1);
  ConceptSentence s(len(rng));
  for (auto& w : s) w = word(rng);
  return s;
}

std::vector<TokenId> parse_tokens(const std::string& text) {
  std::vector<TokenId> out;
  std::istringstream in(text);
  long long v;
  while (in >> v) out.push_back(static_cast<TokenId>(v));
  return out;
}

void write_tokens(std::ostream& out, const std::vector<TokenId>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
}

}  // namespace

std::string to_string(ReorderRule rule) {
  switch (rule) {
    case ReorderRule::Identity: return "identity";
    case ReorderRule::Reverse: return "reverse";
    case ReorderRule::Rotate: return "rotate";
    case ReorderRule::SwapAdjacentPairs: return "swap-adjacent-pairs";
  }
  return "?";
}

std::vector<SyntheticLanguageSpec> default_language_specs() {
  return {
      {"en", 0, ReorderRule::Identity, 0, 0},
      {"h1", 101, ReorderRule::Identity, 0, 50000},
      {"h2", 202, ReorderRule::Rotate, 1, 20000},
      {"m1", 303, ReorderRule::Reverse, 0, 5000},
      {"l1", 404, ReorderRule::SwapAdjacentPairs, 0, 1000},
  };
}

SyntheticLanguages::SyntheticLanguages(std::vector<SyntheticLanguageSpec> specs, std::size_t concept_vocab)
    : specs_(std::move(specs)) {
  if (specs_.size() < 3) throw ValidationError("need the pivot plus at least two languages");
  if (concept_vocab == 0) throw ValidationError("concept vocabulary must be nonempty");
  std::vector<std::string> names;
  for (const auto& s : specs_) names.push_back(s.name);
  vocab_ = Vocabulary(names, concept_vocab);
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    std::vector<int> perm(concept_vocab);
    std::iota(perm.begin(), perm.end(), 0);
    if (l > 0) {
      Rng rng = make_stream(specs_[l].permutation_seed, 0);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    std::vector<int> inv(concept_vocab);
    for (std::size_t c = 0; c < concept_vocab; ++c) inv[static_cast<std::size_t>(perm[c])] = static_cast<int>(c);
    word_of_concept_.push_back(std::move(perm));
    concept_of_word_.push_back(std::move(inv));
  }
}

TokenId SyntheticLanguages::word_token(int language, int concept_id) const {
  return vocab_.content_token(language, static_cast<std::size_t>(word_of_concept_.at(static_cast<std::size_t>(language)).at(static_cast<std::size_t>(concept_id))));
}

int SyntheticLanguages::token_concept(TokenId token) const {
  const int lang = vocab_.content_language(token);
  return concept_of_word_[static_cast<std::size_t>(lang)][vocab_.content_word(token)];
}

std::vector<TokenId> SyntheticLanguages::render(int language, const ConceptSentence& sentence) const {
  const auto ordered = reorder(sentence, specs_.at(static_cast<std::size_t>(language)));
  std::vector<TokenId> out;
  out.reserve(ordered.size());
  for (int c : ordered) out.push_back(word_token(language, c));
  return out;
}

ConceptSentence SyntheticLanguages::parse(int language, std::span<const TokenId> tokens) const {
  std::vector<int> words;
  for (TokenId t : tokens) {
    if (!vocab_.is_content(t)) continue;
    if (vocab_.content_language(t) != language) throw ValidationError("token from another language");
    words.push_back(token_concept(t));
  }
  return unorder(words, specs_.at(static_cast<std::size_t>(language)));
}

ParallelExample SyntheticLanguages::make_example(Direction direction, const ConceptSentence& sentence,
                                                 std::int64_t sentence_id, TagMode mode) const {
  ParallelExample ex;
  ex.direction = direction;
  ex.sentence_id = sentence_id;
  if (mode == TagMode::SourceTag) ex.source.push_back(vocab_.tag(direction.target));
  const auto src = render(direction.source, sentence);
  ex.source.insert(ex.source.end(), src.begin(), src.end());
  ex.target = render(direction.target, sentence);
  ex.target.push_back(kEos);
  return ex;
}

std::int64_t sentence_hash(const ConceptSentence& sentence) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int c : sentence) {
    h ^= static_cast<std::uint64_t>(c) + 1;
    h *= 1099511628211ULL;
  }
  h ^= sentence.size();
  h *= 1099511628211ULL;
  return static_cast<std::int64_t>(h >> 1);
}

bool is_eval_sentence(const ConceptSentence& sentence) { return sentence_hash(sentence) % 16 == 0; }

Corpus generate_corpus(const SyntheticLanguages& languages, LengthRange lengths, std::uint64_t seed, TagMode mode) {
  if (lengths.min < 1 || lengths.max < lengths.min) throw ValidationError("invalid sentence length range");
  Corpus corpus;
  const auto& specs = languages.specs();
  for (std::size_t l = 1; l < specs.size(); ++l) {
    if (specs[l].corpus_size == 0) throw ValidationError("corpus size of " + specs[l].name + " is 0");
    Rng rng = make_stream(seed, 1000 + l);
    const int lang = static_cast<int>(l);
    auto& out = corpus[{lang, 0}];
    auto& back = corpus[{0, lang}];
    for (std::size_t k = 0; k < specs[l].corpus_size; ++k) {
      ConceptSentence s;
      do s = draw_sentence(languages.vocab().concept_vocab(), lengths, rng);
      while (is_eval_sentence(s));
      const auto id = sentence_hash(s);
      out.push_back(languages.make_example({lang, 0}, s, id, mode));
      back.push_back(languages.make_example({0, lang}, s, id, mode));
    }
  }
  return corpus;
}

LangPairStats corpus_stats(const Corpus& corpus) {
  LangPairStats stats;
  for (const auto& [pair, examples] : corpus) stats.sizes[pair] = examples.size();
  return stats;
}

std::vector<ParallelExample> MultiwayEval::examples(const SyntheticLanguages& languages, Direction direction,
                                                    TagMode mode) const {
  std::vector<ParallelExample> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i)
    out.push_back(languages.make_example(direction, sentences[i], static_cast<std::int64_t>(i), mode));
  return out;
}

MultiwayEval generate_multiway_eval(const SyntheticLanguages& languages, std::size_t n, LengthRange lengths,
                                    std::uint64_t seed) {
  if (n == 0) throw ValidationError("multiway evaluation needs at least one sentence");
  Rng rng = make_stream(seed, streams::kEvalData);
  MultiwayEval eval;
  std::set<std::int64_t> seen;
  while (eval.sentences.size() < n) {
    auto s = draw_sentence(languages.vocab().concept_vocab(), lengths, rng);
    if (!is_eval_sentence(s)) continue;
    const auto id = sentence_hash(s);
    if (!seen.insert(id).second) continue;
    eval.sentences.push_back(std::move(s));
    eval.ids.push_back(id);
  }
  return eval;
}

NoiseDictionary::NoiseDictionary(const SyntheticLanguages& languages) {
  const auto cv = static_cast<int>(languages.vocab().concept_vocab());
  for (std::size_t l = 1; l < languages.num_languages(); ++l)
    for (int c = 0; c < cv; ++c) insert(static_cast<int>(l), languages.word_token(static_cast<int>(l), c), languages.word_token(0, c));
}

void NoiseDictionary::insert(int language, TokenId token, TokenId pivot_token) {
  to_pivot_[token] = pivot_token;
  from_pivot_[{language, pivot_token}] = token;
}

std::optional<TokenId> NoiseDictionary::to_pivot(TokenId token) const {
  auto it = to_pivot_.find(token);
  if (it == to_pivot_.end()) return std::nullopt;
  return it->second;
}

std::optional<TokenId> NoiseDictionary::from_pivot(TokenId pivot_token, int language) const {
  auto it = from_pivot_.find({language, pivot_token});
  if (it == from_pivot_.end()) return std::nullopt;
  return it->second;
}

void NoiseDictionary::write(std::ostream& out, const Vocabulary& vocab) const {
  for (const auto& [key, token] : from_pivot_)
    out << vocab.language_name(key.first) << '\t' << token << '\t' << key.second << '\n';
}

NoiseDictionary NoiseDictionary::read(std::istream& in, const Vocabulary& vocab) {
  NoiseDictionary dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string lang;
    long long token = 0, pivot = 0;
    if (!std::getline(fields, lang, '\t') || !(fields >> token >> pivot)) {
      throw ValidationError("malformed dictionary line " + std::to_string(lineno));
    }
    dict.insert(vocab.language_id(lang), static_cast<TokenId>(token), static_cast<TokenId>(pivot));
  }
  return dict;
}

ParallelExample inject_code_switching(const ParallelExample& example, double fraction,
                                      const NoiseDictionary& dictionary, const Vocabulary& vocab, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("noise fraction must lie in [0, 1]");
  ParallelExample out = example;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < out.source.size(); ++i)
    if (vocab.is_content(out.source[i])) positions.push_back(i);
  const auto quota = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(positions.size())));
  if (quota == 0) return out;
  std::shuffle(positions.begin(), positions.end(), rng);
  const int other = example.direction.source == 0 ? example.direction.target : example.direction.source;
  std::size_t replaced = 0;
  for (std::size_t i : positions) {
    if (replaced == quota) break;
    const TokenId tok = out.source[i];
    const auto swapped = vocab.content_language(tok) == 0 ? dictionary.from_pivot(tok, other) : dictionary.to_pivot(tok);
    if (!swapped) continue;
    out.source[i] = *swapped;
    ++replaced;
  }
  return out;
}

void write_corpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab) {
  for (const auto& [pair, examples] : corpus)
    for (const auto& ex : examples) {
      out << vocab.direction_name(pair) << '\t';
      write_tokens(out, ex.source);
      out << '\t';
      write_tokens(out, ex.target);
      out << '\n';
    }
}

Corpus read_corpus(std::istream& in, const Vocabulary& vocab) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ValidationError("malformed corpus line " + std::to_string(lineno));
    ParallelExample ex;
    ex.direction = vocab.parse_direction(line.substr(0, t1));
    ex.source = parse_tokens(line.substr(t1 + 1, t2 - t1 - 1));
    ex.target = parse_tokens(line.substr(t2 + 1));
    ex.sentence_id = static_cast<std::int64_t>(corpus[ex.direction].size());
    for (TokenId t : ex.source)
      if (t < 0 || static_cast<std::size_t>(t) >= vocab.size()) throw ValidationError("token out of range on line " + std::to_string(lineno));
    corpus[ex.direction].push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace xencdec
