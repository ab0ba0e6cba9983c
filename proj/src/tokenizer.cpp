#include "cycleform/tokenizer.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace cycleform::tokenizer {

int Vocab::id_of(std::uint32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? kUnk : it->second;
}

void Vocab::rebuild_index() {
  index_.clear();
  index_.reserve(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i)
    index_.emplace(chars[i], kNumSpecials + static_cast<int>(i));
}

Vocab build_vocab(const std::vector<corpus::Example>& corpus, int max_len) {
  if (corpus.empty()) throw ConfigError("build_vocab requires a non-empty corpus");
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  std::set<std::uint32_t> seen;
  for (const auto& ex : corpus) {
    for (std::uint32_t cp : utf8_decode(ex.nl)) seen.insert(cp);
    for (std::uint32_t cp : utf8_decode(ex.formal)) seen.insert(cp);
  }
  Vocab v;
  v.chars.assign(seen.begin(), seen.end());
  v.max_len = max_len;
  v.rebuild_index();
  return v;
}

std::vector<int> encode(const std::string& text, const Vocab& vocab,
                        int max_len) {
  auto cps = utf8_decode(text);
  std::vector<int> ids;
  ids.reserve(cps.size() + 2);
  ids.push_back(kBos);
  for (std::uint32_t cp : cps) ids.push_back(vocab.id_of(cp));
  ids.push_back(kEos);
  if (static_cast<int>(ids.size()) > max_len) {
    ids.resize(static_cast<std::size_t>(max_len));
    ids.back() = kEos;
  }
  return ids;
}

std::vector<int> encode(const std::string& text, const Vocab& vocab) {
  return encode(text, vocab, vocab.max_len);
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (vocab.is_special(id)) continue;
    std::size_t k = static_cast<std::size_t>(id - kNumSpecials);
    if (k >= vocab.chars.size()) continue;  // out-of-range ids render nothing
    utf8_append(out, vocab.chars[k]);
  }
  return out;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
  nlohmann::json j;
  std::vector<std::string> chars;
  chars.reserve(vocab.chars.size());
  for (std::uint32_t cp : vocab.chars) {
    std::string s;
    utf8_append(s, cp);
    chars.push_back(std::move(s));
  }
  j["chars"] = chars;
  j["max_len"] = vocab.max_len;
  write_text_file(path, j.dump(2) + "\n");
}

Vocab load_vocab(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("chars") ||
      !j.contains("max_len")) {
    throw DataError("invalid vocab file: " + path);
  }
  Vocab v;
  v.max_len = j["max_len"].get<int>();
  if (v.max_len < 2) throw DataError("vocab max_len must be >= 2: " + path);
  for (const auto& entry : j["chars"]) {
    auto cps = utf8_decode(entry.get<std::string>());
    if (cps.size() != 1)
      throw DataError("vocab entries must be single characters: " + path);
    v.chars.push_back(cps[0]);
  }
  if (!std::is_sorted(v.chars.begin(), v.chars.end()) ||
      std::adjacent_find(v.chars.begin(), v.chars.end()) != v.chars.end()) {
    throw DataError("vocab characters must be sorted and unique: " + path);
  }
  v.rebuild_index();
  return v;
}

}  // namespace cycleform::tokenizer
