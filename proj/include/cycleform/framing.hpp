#pragma once
// Sequence framing for translation pairs. A prompt is BOS src SEP; a full
// training pair is BOS src SEP tgt EOS with the loss mask covering the
// completion side (tgt plus its EOS) only, so the model is never trained to
// reproduce the prompt.

#include <string>
#include <vector>

#include "cycleform/common.hpp"
#include "cycleform/tokenizer.hpp"

namespace cycleform::framing {

// Character ids only: no BOS/EOS/SEP, unknown codepoints -> UNK.
inline std::vector<int> encode_text(const tokenizer::Vocab& vocab,
                                    const std::string& text) {
  std::vector<int> out;
  for (char32_t cp : utf8_decode(text)) out.push_back(vocab.id_of(cp));
  return out;
}

inline std::vector<int> make_prompt(const tokenizer::Vocab& vocab,
                                    const std::string& src) {
  std::vector<int> out;
  out.push_back(tokenizer::kBos);
  auto body = encode_text(vocab, src);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(tokenizer::kSep);
  return out;
}

struct FramedPair {
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;  // true at tgt positions and the final EOS
};

inline FramedPair encode_pair(const tokenizer::Vocab& vocab,
                              const std::string& src, const std::string& tgt,
                              int max_len) {
  FramedPair fp;
  fp.tokens = make_prompt(vocab, src);
  std::size_t prompt_len = fp.tokens.size();
  auto body = encode_text(vocab, tgt);
  fp.tokens.insert(fp.tokens.end(), body.begin(), body.end());
  fp.tokens.push_back(tokenizer::kEos);
  if (static_cast<int>(fp.tokens.size()) > max_len)
    throw DataError("framed pair of length " + std::to_string(fp.tokens.size()) +
                    " exceeds limit " + std::to_string(max_len));
  fp.mask.assign(fp.tokens.size(), 0);
  for (std::size_t i = prompt_len; i < fp.tokens.size(); ++i) fp.mask[i] = 1;
  return fp;
}

inline FramedPair encode_pair(const tokenizer::Vocab& vocab,
                              const std::string& src, const std::string& tgt) {
  return encode_pair(vocab, src, tgt, vocab.max_len);
}

}  // namespace cycleform::framing
