#pragma once
// Shared plumbing: error types, deterministic hashing and RNG, UTF-8 codec,
// and small string/number helpers. Everything here is platform-independent:
// given the same inputs and seeds, every function returns the same bits on
// any conforming compiler. Randomized components (shuffle, uniform draws)
// are hand-rolled on top of std::mt19937_64 because the distributions and
// std::shuffle are implementation-defined and would break run reproducibility
// across standard libraries.

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cycleform {

// ---------------------------------------------------------------------------
// Errors. The CLI maps each family to a distinct exit code.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data files (corpus lines, schema violations).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint/resume mismatches and other invalid-state transitions.
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing. splitmix64 is the single mixing primitive used everywhere a stable
// 64-bit hash is needed (feature hashing, content hashes, seed derivation).
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kHashSeed = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Order-sensitive combination of two 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Hash of a byte string, folding one byte at a time into the state.
inline std::uint64_t byte_hash(std::string_view bytes,
                               std::uint64_t seed = kHashSeed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) h = splitmix64(h ^ c);
  return h;
}

std::string to_hex(std::uint64_t v);

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 has a standard-mandated sequence; the
// distribution transforms below are fixed here so the stream of samples is
// identical on every platform.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n); n must be > 0. Rejection sampling keeps the
  // result unbiased and the draw count deterministic for a given stream.
  std::uint64_t below(std::uint64_t n);

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Fisher-Yates; consumes exactly v.size()-1 draws for non-empty v.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(below(v.size()))];
  }

  // Serializable engine state (space-separated integers, std-defined format).
  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw StateError("invalid RNG state string");
  }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// UTF-8. Decoding is total: ill-formed bytes decode to their own byte value
// (so arbitrary binary survives a decode/encode round trip only when valid;
// invalid sequences degrade deterministically instead of throwing).
// ---------------------------------------------------------------------------

std::vector<std::uint32_t> utf8_decode(std::string_view s);
std::string utf8_encode(const std::vector<std::uint32_t>& cps);
void utf8_append(std::string& out, std::uint32_t cp);

// ---------------------------------------------------------------------------
// Small helpers.
// ---------------------------------------------------------------------------

// ASCII case-fold and collapse runs of whitespace to single spaces, trimming
// the ends. Used for near-duplicate keys and term extraction.
std::string fold_whitespace_lower(std::string_view s);

// Shortest decimal that round-trips a double (printf %.17g trimmed).
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace cycleform
