#pragma once

// Shared token space, parallel examples and padded batches.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xencdec {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;

// How the model learns which language to produce.
enum class TagMode {
  SourceTag,          // "<2xx>" token at source position 0
  LanguageEmbedding,  // learned per-language vectors added to the inputs
};

std::string_view to_string(TagMode mode);
TagMode parse_tag_mode(std::string_view text);

// Translation direction between two language ids.
struct Direction {
  int source = 0;
  int target = 0;
  auto operator<=>(const Direction&) const = default;
};

// Layout: PAD, BOS, EOS, one tag per language, then one block of
// `concept_vocab` content tokens per language. Language 0 is the pivot
// (English analog).
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> language_names, std::size_t concept_vocab);

  std::size_t size() const { return first_content() + languages_.size() * concept_vocab_; }
  std::size_t num_languages() const { return languages_.size(); }
  std::size_t concept_vocab() const { return concept_vocab_; }

  const std::string& language_name(int language) const;
  int language_id(std::string_view name) const;

  TokenId tag(int language) const;
  TokenId content_token(int language, std::size_t word) const;

  bool is_tag(TokenId token) const;
  bool is_content(TokenId token) const;
  int tag_language(TokenId token) const;
  int content_language(TokenId token) const;
  std::size_t content_word(TokenId token) const;

  std::string direction_name(Direction direction) const;  // e.g. "h1-en"
  Direction parse_direction(std::string_view name) const;

 private:
  std::size_t first_content() const { return 3 + languages_.size(); }

  std::vector<std::string> languages_;
  std::size_t concept_vocab_ = 0;
};

struct ParallelExample {
  std::vector<TokenId> source;  // tag-prefixed in SourceTag mode
  std::vector<TokenId> target;  // EOS-terminated
  Direction direction;
  std::int64_t sentence_id = -1;
};

// Row-major token ids.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> ids;

  TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  std::span<const TokenId> row(std::size_t r) const { return {ids.data() + r * cols, cols}; }
  // 1 where the token is not PAD.
  std::vector<std::uint8_t> valid_mask() const;
};

struct ParallelBatch {
  TokenMatrix source;         // [B x I]
  TokenMatrix decoder_input;  // [B x J]: BOS, y_1, ..., y_{J-1}
  TokenMatrix target;         // [B x J]: y_1, ..., y_J (EOS included)
  std::vector<Direction> directions;
  std::vector<std::int64_t> sentence_ids;

  std::size_t size() const { return directions.size(); }
  std::vector<int> source_languages() const;
  std::vector<int> target_languages() const;
};

// Pads to the longest example, or to the given minimum lengths when larger.
ParallelBatch make_batch(std::span<const ParallelExample> examples, std::size_t min_source_len = 0,
                         std::size_t min_target_len = 0);

// Row r of the result is row order[r] of the input.
ParallelBatch permute_batch(const ParallelBatch& batch, std::span<const std::size_t> order);

// Right-pads both batches' token matrices to common source/target lengths.
void pad_to_common_length(ParallelBatch& a, ParallelBatch& b);

}  // namespace xencdec
