#pragma once
// Synthetic NL/formal pair corpus. The formal language is a tiny theorem
// grammar over Nat:
//
//   statement  := "thm" binder* ":" conclusion
//   binder     := "(" ident ":" "Nat" ")"
//   conclusion := quant* relation
//   quant      := ("forall" | "exists") ident ","
//   relation   := arith relop arith            relop in {"=", "<"}
//   arith      := prim | prim op prim          op    in {"+", "*"}
//   prim       := ident | nat | "(" arith ")"
//
// Statements are rendered canonically with single spaces between tokens and
// parentheses around every compound that is nested inside another operator.
// The natural-language side is produced by one of six deterministic template
// families; the family doubles as the example's domain label.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycleform/common.hpp"

namespace cycleform::corpus {

enum class Op { Add, Mul };
enum class Rel { Eq, Lt };

struct Expr {
  enum class Kind { Var, Const, Binary };
  Kind kind = Kind::Const;
  std::string var;   // Kind::Var
  int value = 0;     // Kind::Const
  Op op = Op::Add;   // Kind::Binary
  std::unique_ptr<Expr> lhs, rhs;

  static Expr make_var(std::string name);
  static Expr make_const(int v);
  static Expr make_binary(Op op, Expr l, Expr r);
  Expr clone() const;
};

struct Quant {
  bool is_forall = true;
  std::string var;
};

struct Statement {
  std::vector<std::string> binders;  // all typed ": Nat"
  std::vector<Quant> quants;
  Rel rel = Rel::Eq;
  Expr lhs, rhs;
};

// Binary operator count including the relation itself.
int count_ops(const Statement& s);

// clamp(1, 10, quantifiers + operators - 1); buckets grow with structure.
int difficulty_of(const Statement& s);

std::string render_formal(const Statement& s);

struct ParseOutcome {
  bool ok = false;
  Statement stmt;           // valid iff ok
  std::size_t error_offset = 0;  // byte offset into the input
  std::string error;
};

// Total parser: never throws; failures carry the byte offset of the first
// offending token ("" fails at 0, truncated input fails at end of input).
ParseOutcome parse_formal(std::string_view text);

inline constexpr int kNumDomains = 6;
extern const char* const kDomains[kNumDomains];

bool is_known_domain(const std::string& d);

// Template family for a formal string: a stable hash keeps the NL wording a
// function of the statement alone, so formal -> NL is learnable exactly.
int domain_family_of(const std::string& formal);

// Deterministic NL rendering under template family `family` in [0, 6).
std::string render_nl(const Statement& s, int family);

struct Example {
  std::string id;
  std::string nl;
  std::string formal;
  int difficulty = 1;
  std::string domain;
};

struct GenPlan {
  int min_difficulty = 1;
  int max_difficulty = 10;
  int per_difficulty = 100;
  std::string id_prefix = "ex";
};

inline constexpr const char* kGeneratorVersion = "grammar-nat-v1";

// Draws `per_difficulty` distinct statements per bucket. Each bucket uses an
// independent RNG stream derived from (seed, difficulty) so buckets do not
// perturb one another. Formal strings are unique across the whole result.
std::vector<Example> generate_corpus(const GenPlan& plan, std::uint64_t seed);

// JSONL with exactly the keys {id, nl, formal, difficulty, domain} per line.
// Violations raise DataError naming the 1-based line number.
std::vector<Example> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<Example>& examples);

struct CorpusManifest {
  std::map<std::string, std::vector<std::string>> splits;
  std::map<int, int> counts_per_difficulty;
  std::uint64_t seed = 0;
  std::string generator_version;
  std::vector<std::string> warnings;
  nlohmann::json plan;  // echo of the generating/splitting configuration

  // Splits must never share an id.
  void validate_disjoint() const;

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

}  // namespace cycleform::corpus
