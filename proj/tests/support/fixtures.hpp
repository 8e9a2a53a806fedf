#pragma once

#include <random>
#include <vector>

#include "xencdec/data.hpp"
#include "xencdec/model.hpp"

namespace xencdec::testing {

inline ModelConfig tiny_config(TagMode mode = TagMode::SourceTag) {
  ModelConfig c;
  c.num_layers = 1;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.num_languages = 2;
  c.vocab_size = 20;
  c.max_len = 12;
  c.tag_mode = mode;
  return c;
}

// Random tag-prefixed examples over a 2-language, 7-word vocabulary (size 20).
inline std::vector<ParallelExample> random_examples(std::size_t n, std::mt19937_64& rng,
                                                    std::size_t max_content = 5, bool with_tag = true) {
  Vocabulary vocab({"en", "xx"}, 7);
  std::uniform_int_distribution<std::size_t> len(1, max_content), word(0, 6);
  std::uniform_int_distribution<int> lang(0, 1);
  std::vector<ParallelExample> out;
  for (std::size_t k = 0; k < n; ++k) {
    ParallelExample ex;
    const int s = lang(rng), t = 1 - s;
    ex.direction = {s, t};
    ex.sentence_id = static_cast<std::int64_t>(k);
    if (with_tag) ex.source.push_back(vocab.tag(t));
    for (std::size_t i = len(rng); i > 0; --i) ex.source.push_back(vocab.content_token(s, word(rng)));
    for (std::size_t i = len(rng); i > 0; --i) ex.target.push_back(vocab.content_token(t, word(rng)));
    ex.target.push_back(kEos);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace xencdec::testing
