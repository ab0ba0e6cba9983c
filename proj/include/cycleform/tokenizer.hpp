#pragma once
// Character-level tokenizer shared by both translation directions. Characters
// are Unicode codepoints; ids 0..4 are reserved specials and the remaining
// ids follow codepoint-sorted order, so a vocabulary is fully determined by
// the set of characters it covers.

#include <string>
#include <unordered_map>
#include <vector>

#include "cycleform/corpus.hpp"

namespace cycleform::tokenizer {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kUnk = 4;
inline constexpr int kNumSpecials = 5;

struct Vocab {
  std::vector<std::uint32_t> chars;  // sorted codepoints; id = 5 + index
  int max_len = 512;

  int size() const { return kNumSpecials + static_cast<int>(chars.size()); }
  int id_of(std::uint32_t cp) const;        // kUnk when absent
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  void rebuild_index();  // called by build/load; id_of is O(1) afterwards

 private:
  std::unordered_map<std::uint32_t, int> index_;
};

// Vocabulary over every character of every nl and formal field.
Vocab build_vocab(const std::vector<corpus::Example>& corpus, int max_len = 512);

// BOS + chars + EOS, hard-truncated to max_len with EOS forced last whenever
// truncation occurred. Unknown characters encode to UNK.
std::vector<int> encode(const std::string& text, const Vocab& vocab,
                        int max_len);
std::vector<int> encode(const std::string& text, const Vocab& vocab);

// Drops all special ids (UNK included; it has no character to render).
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

// JSON persistence: {"chars": [...], "max_len": n}.
void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

}  // namespace cycleform::tokenizer
