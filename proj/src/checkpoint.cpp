#include "cycleform/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace cycleform::checkpoint {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_container(const std::string& path, const Container& c) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  std::string meta = c.meta.dump();
  put_u64(out, meta.size());
  out += meta;
  put_u64(out, c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u64(out, static_cast<std::uint64_t>(t.rows()));
    put_u64(out, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index col = 0; col < t.cols(); ++col) put_f64(out, t(r, col));
  }
  write_text_file(path, out);
}

Container load_container(const std::string& path) {
  std::string buf = read_text_file(path);
  Reader rd{buf};
  std::string magic = rd.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: bad magic");
  std::uint32_t version = rd.u32();
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Container c;
  std::uint64_t meta_len = rd.u64();
  std::string meta = rd.bytes(meta_len);
  c.meta = nlohmann::json::parse(meta, nullptr, false);
  if (c.meta.is_discarded()) throw DataError("checkpoint metadata is not valid JSON");
  std::uint64_t n = rd.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t name_len = rd.u32();
    std::string name = rd.bytes(name_len);
    std::uint64_t rows = rd.u64();
    std::uint64_t cols = rd.u64();
    if (rows > (1u << 24) || cols > (1u << 24))
      throw DataError("checkpoint tensor dimensions out of range");
    Eigen::MatrixXd t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index col = 0; col < t.cols(); ++col) t(r, col) = rd.f64();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (rd.pos != buf.size()) throw DataError("checkpoint has trailing bytes");
  return c;
}

nlohmann::json vocab_to_json(const tokenizer::Vocab& vocab) {
  return {{"chars", vocab.chars}, {"max_len", vocab.max_len}};
}

tokenizer::Vocab vocab_from_json(const nlohmann::json& j) {
  tokenizer::Vocab v;
  v.chars = j.at("chars").get<std::vector<std::uint32_t>>();
  v.max_len = j.at("max_len").get<int>();
  for (std::size_t i = 1; i < v.chars.size(); ++i)
    if (v.chars[i - 1] >= v.chars[i])
      throw DataError("checkpoint vocabulary is not sorted and unique");
  v.rebuild_index();
  return v;
}

}  // namespace cycleform::checkpoint
