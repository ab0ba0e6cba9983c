#include "cycleform/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace cycleform::corpus {

const char* const kDomains[kNumDomains] = {
    "algebra", "number_theory", "combinatorics",
    "analysis", "geometry",     "logic",
};

bool is_known_domain(const std::string& d) {
  for (const char* k : kDomains)
    if (d == k) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Expression tree.
// ---------------------------------------------------------------------------

Expr Expr::make_var(std::string name) {
  Expr e;
  e.kind = Kind::Var;
  e.var = std::move(name);
  return e;
}

Expr Expr::make_const(int v) {
  Expr e;
  e.kind = Kind::Const;
  e.value = v;
  return e;
}

Expr Expr::make_binary(Op op, Expr l, Expr r) {
  Expr e;
  e.kind = Kind::Binary;
  e.op = op;
  e.lhs = std::make_unique<Expr>(std::move(l));
  e.rhs = std::make_unique<Expr>(std::move(r));
  return e;
}

Expr Expr::clone() const {
  Expr e;
  e.kind = kind;
  e.var = var;
  e.value = value;
  e.op = op;
  if (lhs) e.lhs = std::make_unique<Expr>(lhs->clone());
  if (rhs) e.rhs = std::make_unique<Expr>(rhs->clone());
  return e;
}

static int count_expr_ops(const Expr& e) {
  if (e.kind != Expr::Kind::Binary) return 0;
  return 1 + count_expr_ops(*e.lhs) + count_expr_ops(*e.rhs);
}

int count_ops(const Statement& s) {
  return 1 + count_expr_ops(s.lhs) + count_expr_ops(s.rhs);
}

int difficulty_of(const Statement& s) {
  int units = static_cast<int>(s.quants.size()) + count_ops(s) - 1;
  return std::clamp(units, 1, 10);
}

// ---------------------------------------------------------------------------
// Canonical formal rendering.
// ---------------------------------------------------------------------------

static void render_expr(const Expr& e, bool nested, std::string& out) {
  switch (e.kind) {
    case Expr::Kind::Var:
      out += e.var;
      return;
    case Expr::Kind::Const:
      out += std::to_string(e.value);
      return;
    case Expr::Kind::Binary: {
      if (nested) out += "(";
      render_expr(*e.lhs, true, out);
      out += (e.op == Op::Add) ? " + " : " * ";
      render_expr(*e.rhs, true, out);
      if (nested) out += ")";
      return;
    }
  }
}

std::string render_formal(const Statement& s) {
  std::string out = "thm";
  for (const auto& b : s.binders) {
    out += " (" + b + " : Nat)";
  }
  out += " :";
  for (const auto& q : s.quants) {
    out += q.is_forall ? " forall " : " exists ";
    out += q.var;
    out += ",";
  }
  out += " ";
  render_expr(s.lhs, false, out);
  out += (s.rel == Rel::Eq) ? " = " : " < ";
  render_expr(s.rhs, false, out);
  return out;
}

// ---------------------------------------------------------------------------
// Lexer + recursive-descent parser.
// ---------------------------------------------------------------------------

namespace {

enum class Tok {
  KwThm, KwNat, KwForall, KwExists,
  LParen, RParen, Colon, Comma, Eq, Lt, Plus, Star,
  Ident, Number, End,
};

struct Token {
  Tok kind;
  std::string text;
  std::size_t offset;  // byte offset of the first character
};

struct LexOutcome {
  bool ok = true;
  std::vector<Token> tokens;
  std::size_t error_offset = 0;
  std::string error;
};

LexOutcome lex(std::string_view s) {
  LexOutcome out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (std::isalpha(c) || c == '_') {
      while (i < s.size() &&
             (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
        ++i;
      std::string word(s.substr(start, i - start));
      Tok k = Tok::Ident;
      if (word == "thm") k = Tok::KwThm;
      else if (word == "Nat") k = Tok::KwNat;
      else if (word == "forall") k = Tok::KwForall;
      else if (word == "exists") k = Tok::KwExists;
      out.tokens.push_back({k, std::move(word), start});
      continue;
    }
    if (std::isdigit(c)) {
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
        ++i;
      out.tokens.push_back({Tok::Number, std::string(s.substr(start, i - start)),
                            start});
      continue;
    }
    Tok k;
    switch (c) {
      case '(': k = Tok::LParen; break;
      case ')': k = Tok::RParen; break;
      case ':': k = Tok::Colon; break;
      case ',': k = Tok::Comma; break;
      case '=': k = Tok::Eq; break;
      case '<': k = Tok::Lt; break;
      case '+': k = Tok::Plus; break;
      case '*': k = Tok::Star; break;
      default:
        out.ok = false;
        out.error_offset = start;
        out.error = "unexpected character '" + std::string(1, s[i]) + "'";
        return out;
    }
    out.tokens.push_back({k, std::string(1, s[i]), start});
    ++i;
  }
  out.tokens.push_back({Tok::End, "", s.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ParseOutcome run() {
    ParseOutcome out;
    Statement stmt;
    if (!expect(Tok::KwThm, "expected 'thm'")) return fail();
    while (at(Tok::LParen)) {
      advance();
      if (!at(Tok::Ident)) return fail_here("expected binder name");
      stmt.binders.push_back(cur().text);
      advance();
      if (!expect(Tok::Colon, "expected ':' in binder")) return fail();
      if (!expect(Tok::KwNat, "expected 'Nat' in binder")) return fail();
      if (!expect(Tok::RParen, "expected ')' after binder")) return fail();
    }
    if (!expect(Tok::Colon, "expected ':' before conclusion")) return fail();
    while (at(Tok::KwForall) || at(Tok::KwExists)) {
      Quant q;
      q.is_forall = at(Tok::KwForall);
      advance();
      if (!at(Tok::Ident)) return fail_here("expected quantified variable");
      q.var = cur().text;
      advance();
      if (!expect(Tok::Comma, "expected ',' after quantifier")) return fail();
      stmt.quants.push_back(std::move(q));
    }
    auto lhs = parse_arith();
    if (!lhs) return fail();
    if (at(Tok::Eq)) stmt.rel = Rel::Eq;
    else if (at(Tok::Lt)) stmt.rel = Rel::Lt;
    else return fail_here("expected '=' or '<'");
    advance();
    auto rhs = parse_arith();
    if (!rhs) return fail();
    if (!at(Tok::End)) return fail_here("trailing input after statement");
    stmt.lhs = std::move(*lhs);
    stmt.rhs = std::move(*rhs);
    out.ok = true;
    out.stmt = std::move(stmt);
    return out;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }
  void advance() { ++pos_; }

  bool expect(Tok k, const char* msg) {
    if (!at(k)) {
      err_offset_ = cur().offset;
      err_ = msg;
      return false;
    }
    advance();
    return true;
  }

  void set_error(const char* msg) {
    err_offset_ = cur().offset;
    err_ = msg;
  }

  ParseOutcome fail() const {
    ParseOutcome out;
    out.ok = false;
    out.error_offset = err_offset_;
    out.error = err_;
    return out;
  }

  ParseOutcome fail_here(const char* msg) {
    set_error(msg);
    return fail();
  }

  // prim, optionally followed by a single binary operator and another prim.
  std::optional<Expr> parse_arith() {
    auto left = parse_prim();
    if (!left) return std::nullopt;
    if (at(Tok::Plus) || at(Tok::Star)) {
      Op op = at(Tok::Plus) ? Op::Add : Op::Mul;
      advance();
      auto right = parse_prim();
      if (!right) return std::nullopt;
      return Expr::make_binary(op, std::move(*left), std::move(*right));
    }
    return left;
  }

  std::optional<Expr> parse_prim() {
    if (at(Tok::Ident)) {
      Expr e = Expr::make_var(cur().text);
      advance();
      return e;
    }
    if (at(Tok::Number)) {
      // Bounded so ingested data cannot overflow int.
      if (cur().text.size() > 9) {
        set_error("numeral too large");
        return std::nullopt;
      }
      Expr e = Expr::make_const(std::stoi(cur().text));
      advance();
      return e;
    }
    if (at(Tok::LParen)) {
      advance();
      auto inner = parse_arith();
      if (!inner) return std::nullopt;
      if (!expect(Tok::RParen, "expected ')'")) return std::nullopt;
      return inner;
    }
    set_error("expected identifier, numeral, or '('");
    return std::nullopt;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t err_offset_ = 0;
  std::string err_;
};

}  // namespace

ParseOutcome parse_formal(std::string_view text) {
  LexOutcome lx = lex(text);
  if (!lx.ok) {
    ParseOutcome out;
    out.ok = false;
    out.error_offset = lx.error_offset;
    out.error = lx.error;
    return out;
  }
  return Parser(std::move(lx.tokens)).run();
}

// ---------------------------------------------------------------------------
// NL template families (one per domain label).
// ---------------------------------------------------------------------------

namespace {

struct Family {
  const char* header_prefix;  // before the binder list
  const char* header_suffix;  // after the binder list
  const char* forall_pre;     // before the variable
  const char* forall_post;    // after the variable
  const char* exists_pre;
  const char* exists_post;
  const char* eq;
  const char* lt;
  const char* add;
  const char* mul;
};

const Family kFamilies[kNumDomains] = {
    // algebra
    {"for naturals ", ": ", "for all ", ", ", "for some ", ", ",
     " equals ", " is less than ", " plus ", " times "},
    // number_theory
    {"let ", " be naturals; ", "every ", " gives ", "some ", " gives ",
     " is exactly ", " stays below ", " added to ", " multiplied by "},
    // combinatorics
    {"count with ", " natural: ", "across all ", ", ", "at some ", ", ",
     " matches ", " comes under ", " joined with ", " times "},
    // analysis
    {"fix naturals ", "; ", "at every ", ", ", "at a certain ", ", ",
     " agrees with ", " lies under ", " plus ", " scaled by "},
    // geometry
    {"given lengths ", ": ", "for each ", ", ", "for a point ", ", ",
     " measures ", " falls short of ", " extended by ", " stretched by "},
    // logic
    {"assume ", " natural; ", "whenever ", ", ", "witness ", " where ",
     " amounts to ", " precedes ", " with ", " crossed with "},
};

void render_expr_nl(const Expr& e, const Family& f, bool nested,
                    std::string& out) {
  switch (e.kind) {
    case Expr::Kind::Var:
      out += e.var;
      return;
    case Expr::Kind::Const:
      out += std::to_string(e.value);
      return;
    case Expr::Kind::Binary: {
      if (nested) out += "(";
      render_expr_nl(*e.lhs, f, true, out);
      out += (e.op == Op::Add) ? f.add : f.mul;
      render_expr_nl(*e.rhs, f, true, out);
      if (nested) out += ")";
      return;
    }
  }
}

}  // namespace

int domain_family_of(const std::string& formal) {
  return static_cast<int>(byte_hash(formal) % kNumDomains);
}

std::string render_nl(const Statement& s, int family) {
  const Family& f = kFamilies[family % kNumDomains];
  std::string out = f.header_prefix;
  for (std::size_t i = 0; i < s.binders.size(); ++i) {
    if (i) out += ", ";
    out += s.binders[i];
  }
  out += f.header_suffix;
  for (const auto& q : s.quants) {
    out += q.is_forall ? f.forall_pre : f.exists_pre;
    out += q.var;
    out += q.is_forall ? f.forall_post : f.exists_post;
  }
  render_expr_nl(s.lhs, f, false, out);
  out += (s.rel == Rel::Eq) ? f.eq : f.lt;
  render_expr_nl(s.rhs, f, false, out);
  out += ".";
  return out;
}

// ---------------------------------------------------------------------------
// Generator.
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kVarPool = {"x", "y", "z", "n", "m", "k",
                                           "a", "b", "c", "p", "q", "r"};

Expr gen_expr(int ops, const std::vector<std::string>& scope, Rng& rng) {
  if (ops == 0) {
    if (rng.uniform01() < 0.7) {
      return Expr::make_var(rng.pick(scope));
    }
    return Expr::make_const(static_cast<int>(rng.uniform_int(0, 9)));
  }
  int left_ops = static_cast<int>(rng.uniform_int(0, ops - 1));
  Op op = rng.uniform01() < 0.6 ? Op::Add : Op::Mul;
  Expr l = gen_expr(left_ops, scope, rng);
  Expr r = gen_expr(ops - 1 - left_ops, scope, rng);
  return Expr::make_binary(op, std::move(l), std::move(r));
}

Statement gen_statement(int difficulty, Rng& rng) {
  // quantifiers + operators (relation included) land exactly on the target.
  int units = difficulty + 1;
  Statement s;
  std::vector<std::string> pool = kVarPool;
  rng.shuffle(pool);
  int n_binders = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<std::string> scope;
  for (int i = 0; i < n_binders; ++i) {
    s.binders.push_back(pool[static_cast<std::size_t>(i)]);
    scope.push_back(pool[static_cast<std::size_t>(i)]);
  }
  int max_q = std::min(3, units - 1);
  int n_quants = static_cast<int>(rng.uniform_int(0, max_q));
  for (int i = 0; i < n_quants; ++i) {
    Quant q;
    q.is_forall = rng.uniform01() < 0.6;
    q.var = pool[static_cast<std::size_t>(n_binders + i)];
    s.quants.push_back(q);
    scope.push_back(q.var);
  }
  int arith_ops = units - 1 - n_quants;
  int lhs_ops = static_cast<int>(rng.uniform_int(0, arith_ops));
  s.rel = rng.uniform01() < 0.6 ? Rel::Eq : Rel::Lt;
  s.lhs = gen_expr(lhs_ops, scope, rng);
  s.rhs = gen_expr(arith_ops - lhs_ops, scope, rng);
  return s;
}

}  // namespace

std::vector<Example> generate_corpus(const GenPlan& plan, std::uint64_t seed) {
  if (plan.min_difficulty < 1 || plan.max_difficulty > 10 ||
      plan.min_difficulty > plan.max_difficulty) {
    throw ConfigError("difficulty range must satisfy 1 <= min <= max <= 10");
  }
  if (plan.per_difficulty < 0) {
    throw ConfigError("per_difficulty must be >= 0");
  }
  std::vector<Example> out;
  std::set<std::string> seen_formal;
  for (int d = plan.min_difficulty; d <= plan.max_difficulty; ++d) {
    Rng rng(mix64(seed, static_cast<std::uint64_t>(d)));
    int produced = 0;
    int attempts = 0;
    const int max_attempts = plan.per_difficulty * 200 + 1000;
    while (produced < plan.per_difficulty) {
      if (++attempts > max_attempts) {
        throw DataError("generator exhausted distinct statements at difficulty " +
                        std::to_string(d));
      }
      Statement stmt = gen_statement(d, rng);
      std::string formal = render_formal(stmt);
      if (!seen_formal.insert(formal).second) continue;
      Example ex;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "-d%02d-%05d", d, produced);
      ex.id = plan.id_prefix + idbuf;
      int family = domain_family_of(formal);
      ex.domain = kDomains[family];
      ex.nl = render_nl(stmt, family);
      ex.formal = std::move(formal);
      ex.difficulty = d;
      out.push_back(std::move(ex));
      ++produced;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL i/o.
// ---------------------------------------------------------------------------

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<Example> out;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) fail("invalid JSON");
    if (!j.is_object()) fail("line is not a JSON object");
    static const std::set<std::string> kKeys = {"id", "nl", "formal",
                                                "difficulty", "domain"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!kKeys.count(it.key())) fail("unexpected key '" + it.key() + "'");
    }
    for (const auto& k : kKeys) {
      if (!j.contains(k)) fail("missing key '" + k + "'");
    }
    Example ex;
    if (!j["id"].is_string() || j["id"].get<std::string>().empty())
      fail("'id' must be a non-empty string");
    if (!j["nl"].is_string() || !j["formal"].is_string())
      fail("'nl' and 'formal' must be strings");
    if (!j["difficulty"].is_number_integer())
      fail("'difficulty' must be an integer");
    if (!j["domain"].is_string())
      fail("'domain' must be a string");
    ex.id = j["id"].get<std::string>();
    ex.nl = j["nl"].get<std::string>();
    ex.formal = j["formal"].get<std::string>();
    ex.difficulty = j["difficulty"].get<int>();
    ex.domain = j["domain"].get<std::string>();
    if (ex.difficulty < 1 || ex.difficulty > 10)
      fail("'difficulty' out of range [1, 10] (got " +
           std::to_string(ex.difficulty) + ")");
    if (!is_known_domain(ex.domain)) fail("unknown domain '" + ex.domain + "'");
    if (!ids.insert(ex.id).second) fail("duplicate id '" + ex.id + "'");
    out.push_back(std::move(ex));
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return out;
}

void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ostringstream ss;
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["nl"] = ex.nl;
    j["formal"] = ex.formal;
    j["difficulty"] = ex.difficulty;
    j["domain"] = ex.domain;
    ss << j.dump() << "\n";
  }
  write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

void CorpusManifest::validate_disjoint() const {
  std::set<std::string> seen;
  for (const auto& [name, ids] : splits) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second) {
        throw DataError("manifest splits overlap on id '" + id +
                        "' (split '" + name + "')");
      }
    }
  }
}

nlohmann::json CorpusManifest::to_json() const {
  nlohmann::json j;
  j["splits"] = splits;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [d, n] : counts_per_difficulty)
    counts[std::to_string(d)] = n;
  j["counts_per_difficulty"] = counts;
  j["seed"] = seed;
  j["generator_version"] = generator_version;
  j["warnings"] = warnings;
  j["plan"] = plan;
  return j;
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
  for (auto it = j.at("counts_per_difficulty").begin();
       it != j.at("counts_per_difficulty").end(); ++it) {
    m.counts_per_difficulty[std::stoi(it.key())] = it.value().get<int>();
  }
  m.seed = j.at("seed").get<std::uint64_t>();
  m.generator_version = j.at("generator_version").get<std::string>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  m.plan = j.value("plan", nlohmann::json::object());
  return m;
}

}  // namespace cycleform::corpus
