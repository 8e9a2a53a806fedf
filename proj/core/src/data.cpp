#include "xencdec/data.hpp"

#include <algorithm>
#include <stdexcept>

#include "xencdec/tensor.hpp"

namespace xencdec {

std::string_view to_string(TagMode mode) {
  return mode == TagMode::SourceTag ? "source-tag" : "language-embedding";
}

TagMode parse_tag_mode(std::string_view text) {
  if (text == "source-tag") return TagMode::SourceTag;
  if (text == "language-embedding") return TagMode::LanguageEmbedding;
  throw ValidationError("unknown tag mode '" + std::string(text) + "'");
}

Vocabulary::Vocabulary(std::vector<std::string> language_names, std::size_t concept_vocab)
    : languages_(std::move(language_names)), concept_vocab_(concept_vocab) {
  if (languages_.empty()) throw ValidationError("vocabulary needs at least one language");
  if (concept_vocab_ == 0) throw ValidationError("concept vocabulary must be nonempty");
}

const std::string& Vocabulary::language_name(int language) const {
  if (language < 0 || static_cast<std::size_t>(language) >= languages_.size()) {
    throw ValidationError("unknown language id " + std::to_string(language));
  }
  return languages_[static_cast<std::size_t>(language)];
}

int Vocabulary::language_id(std::string_view name) const {
  auto it = std::find(languages_.begin(), languages_.end(), name);
  if (it == languages_.end()) throw ValidationError("unknown language '" + std::string(name) + "'");
  return static_cast<int>(it - languages_.begin());
}

TokenId Vocabulary::tag(int language) const {
  language_name(language);
  return static_cast<TokenId>(3 + language);
}

TokenId Vocabulary::content_token(int language, std::size_t word) const {
  language_name(language);
  if (word >= concept_vocab_) throw ValidationError("word index " + std::to_string(word) + " out of range");
  return static_cast<TokenId>(first_content() + static_cast<std::size_t>(language) * concept_vocab_ + word);
}

bool Vocabulary::is_tag(TokenId token) const {
  return token >= 3 && static_cast<std::size_t>(token) < first_content();
}

bool Vocabulary::is_content(TokenId token) const {
  return token >= 0 && static_cast<std::size_t>(token) >= first_content() &&
         static_cast<std::size_t>(token) < size();
}

int Vocabulary::tag_language(TokenId token) const {
  if (!is_tag(token)) throw ValidationError("token " + std::to_string(token) + " is not a tag");
  return token - 3;
}

int Vocabulary::content_language(TokenId token) const {
  if (!is_content(token)) throw ValidationError("token " + std::to_string(token) + " is not content");
  return static_cast<int>((static_cast<std::size_t>(token) - first_content()) / concept_vocab_);
}

std::size_t Vocabulary::content_word(TokenId token) const {
  if (!is_content(token)) throw ValidationError("token " + std::to_string(token) + " is not content");
  return (static_cast<std::size_t>(token) - first_content()) % concept_vocab_;
}

std::string Vocabulary::direction_name(Direction direction) const {
  return language_name(direction.source) + "-" + language_name(direction.target);
}

Direction Vocabulary::parse_direction(std::string_view name) const {
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) throw ValidationError("direction '" + std::string(name) + "' lacks '-'");
  return {language_id(name.substr(0, dash)), language_id(name.substr(dash + 1))};
}

std::vector<std::uint8_t> TokenMatrix::valid_mask() const {
  std::vector<std::uint8_t> mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] != kPad ? 1 : 0;
  return mask;
}

std::vector<int> ParallelBatch::source_languages() const {
  std::vector<int> out;
  out.reserve(directions.size());
  for (const auto& d : directions) out.push_back(d.source);
  return out;
}

std::vector<int> ParallelBatch::target_languages() const {
  std::vector<int> out;
  out.reserve(directions.size());
  for (const auto& d : directions) out.push_back(d.target);
  return out;
}

ParallelBatch make_batch(std::span<const ParallelExample> examples, std::size_t min_source_len,
                         std::size_t min_target_len) {
  if (examples.empty()) throw ValidationError("cannot build an empty batch");
  std::size_t src_len = min_source_len, tgt_len = min_target_len;
  for (const auto& ex : examples) {
    if (ex.target.empty()) throw ValidationError("example with empty target");
    src_len = std::max(src_len, ex.source.size());
    tgt_len = std::max(tgt_len, ex.target.size());
  }
  ParallelBatch batch;
  const std::size_t b = examples.size();
  batch.source = {b, src_len, std::vector<TokenId>(b * src_len, kPad)};
  batch.decoder_input = {b, tgt_len, std::vector<TokenId>(b * tgt_len, kPad)};
  batch.target = {b, tgt_len, std::vector<TokenId>(b * tgt_len, kPad)};
  for (std::size_t r = 0; r < b; ++r) {
    const auto& ex = examples[r];
    std::copy(ex.source.begin(), ex.source.end(), batch.source.ids.begin() + static_cast<std::ptrdiff_t>(r * src_len));
    std::copy(ex.target.begin(), ex.target.end(), batch.target.ids.begin() + static_cast<std::ptrdiff_t>(r * tgt_len));
    batch.decoder_input.ids[r * tgt_len] = kBos;
    for (std::size_t j = 1; j < ex.target.size(); ++j) batch.decoder_input.ids[r * tgt_len + j] = ex.target[j - 1];
    batch.directions.push_back(ex.direction);
    batch.sentence_ids.push_back(ex.sentence_id);
  }
  return batch;
}

namespace {

TokenMatrix permute_rows(const TokenMatrix& m, std::span<const std::size_t> order) {
  TokenMatrix out{order.size(), m.cols, {}};
  out.ids.reserve(order.size() * m.cols);
  for (auto r : order) {
    if (r >= m.rows) throw ValidationError("permutation index out of range");
    auto row = m.row(r);
    out.ids.insert(out.ids.end(), row.begin(), row.end());
  }
  return out;
}

TokenMatrix pad_cols(const TokenMatrix& m, std::size_t cols) {
  if (cols == m.cols) return m;
  TokenMatrix out{m.rows, cols, std::vector<TokenId>(m.rows * cols, kPad)};
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    std::copy(row.begin(), row.end(), out.ids.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

}  // namespace

ParallelBatch permute_batch(const ParallelBatch& batch, std::span<const std::size_t> order) {
  ParallelBatch out;
  out.source = permute_rows(batch.source, order);
  out.decoder_input = permute_rows(batch.decoder_input, order);
  out.target = permute_rows(batch.target, order);
  for (auto r : order) {
    out.directions.push_back(batch.directions[r]);
    out.sentence_ids.push_back(batch.sentence_ids[r]);
  }
  return out;
}

void pad_to_common_length(ParallelBatch& a, ParallelBatch& b) {
  const std::size_t src = std::max(a.source.cols, b.source.cols);
  const std::size_t tgt = std::max(a.target.cols, b.target.cols);
  for (ParallelBatch* batch : {&a, &b}) {
    batch->source = pad_cols(batch->source, src);
    batch->decoder_input = pad_cols(batch->decoder_input, tgt);
    batch->target = pad_cols(batch->target, tgt);
  }
}

}  // namespace xencdec
