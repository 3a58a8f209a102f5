#pragma once
// Model-facing encodings. The sequence model consumes a prefix token walk,
// the tree model consumes the unfolded expression tree; both share one
// frozen vocabulary with arity-tagged operator heads so the prefix walk is
// a prefix code (no delimiter tokens needed).

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "intsel/expr.hpp"

namespace intsel {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kReservedTokens = 2;

// head token for one node; children are not included
inline std::string node_token(const ExprStore& st, NodeId id) {
  const Node& n = st.node(id);
  switch (n.kind) {
    case Kind::Integer: return n.ival.str();
    case Kind::ConstSym:
      return n.clevel == 1 ? "CONST" : (n.clevel == 2 ? "CONST2" : "CONST3");
    case Kind::Variable: return n.var;
    case Kind::Func: {
      std::string s = func_token(n.func);
      for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return s;
    }
    case Kind::Pow: return "POW";
    case Kind::Add: return "ADD" + std::to_string(n.kids.size());
    case Kind::Mul: return "MUL" + std::to_string(n.kids.size());
  }
  throw std::logic_error("node_token: unhandled kind");
}

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> sorted_tokens) : tokens_(std::move(sorted_tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i)
      ids_[tokens_[i]] = static_cast<int>(i) + kReservedTokens;
    if (ids_.size() != tokens_.size())
      throw std::invalid_argument("Vocabulary: duplicate token");
  }

  int size() const { return static_cast<int>(tokens_.size()) + kReservedTokens; }

  // unseen tokens map to UNK
  int id_of(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnkId : it->second;
  }

  const std::string& token_of(int id) const {
    static const std::string pad = "PAD", unk = "UNK";
    if (id == kPadId) return pad;
    if (id == kUnkId) return unk;
    int i = id - kReservedTokens;
    if (i < 0 || i >= static_cast<int>(tokens_.size()))
      throw std::out_of_range("Vocabulary: bad token id");
    return tokens_[static_cast<size_t>(i)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

using TokenSequence = std::vector<int>;

struct TreeNode {
  int token = kPadId;
  std::vector<int> kids;  // indices into TreeEncoding::nodes
};

// pre-order node list; root at index 0; dag sharing is expanded
struct TreeEncoding {
  std::vector<TreeNode> nodes;
};

inline TokenSequence encode_sequence(Expr e, const Vocabulary& v) {
  if (!e.valid()) throw std::invalid_argument("encode_sequence: empty expression");
  TokenSequence out;
  auto rec = [&](auto&& self, NodeId id) -> void {
    out.push_back(v.id_of(node_token(*e.store, id)));
    for (NodeId k : e.store->node(id).kids) self(self, k);
  };
  rec(rec, e.id);
  return out;
}

inline TreeEncoding encode_tree(Expr e, const Vocabulary& v) {
  if (!e.valid()) throw std::invalid_argument("encode_tree: empty expression");
  TreeEncoding out;
  auto rec = [&](auto&& self, NodeId id) -> int {
    int me = static_cast<int>(out.nodes.size());
    out.nodes.push_back({v.id_of(node_token(*e.store, id)), {}});
    for (NodeId k : e.store->node(id).kids) {
      int ci = self(self, k);
      out.nodes[static_cast<size_t>(me)].kids.push_back(ci);
    }
    return me;
  };
  rec(rec, e.id);
  return out;
}

inline int count_unk(const TokenSequence& seq) {
  int n = 0;
  for (int t : seq)
    if (t == kUnkId) ++n;
  return n;
}

namespace detail {

inline bool is_int_literal(const std::string& s) {
  if (s.empty()) return false;
  size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

inline std::string upper_func_token(int i) {
  std::string f = func_token(static_cast<FuncSym>(i));
  for (auto& c : f) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return f;
}

// function tokens like ARCSIN also start with letters of ADD/MUL prefixes,
// so resolve the function alphabet before the arity-tagged heads
inline std::optional<FuncSym> func_of_token(const std::string& tok) {
  for (int i = 0; i < kFuncCount; ++i)
    if (tok == upper_func_token(i)) return static_cast<FuncSym>(i);
  return std::nullopt;
}

inline int vararg_arity(const std::string& tok, const char* head) {
  if (tok.rfind(head, 0) != 0) return 0;
  std::string digits = tok.substr(3);
  if (digits.empty() || !is_int_literal(digits) || digits[0] == '-') return 0;
  return std::stoi(digits);
}

// arity encoded in the token; leaves return 0
inline int token_arity(const std::string& tok) {
  if (func_of_token(tok)) return 1;
  if (tok == "POW") return 2;
  if (int a = vararg_arity(tok, "ADD")) return a;
  if (int a = vararg_arity(tok, "MUL")) return a;
  return 0;
}

inline Expr decode_at(ExprStore& st, const TokenSequence& seq, const Vocabulary& v, size_t& pos) {
  if (pos >= seq.size()) throw std::invalid_argument("decode_sequence: truncated input");
  int id = seq[pos++];
  if (id == kPadId || id == kUnkId)
    throw std::invalid_argument("decode_sequence: PAD/UNK is not decodable");
  const std::string& tok = v.token_of(id);
  int arity = token_arity(tok);
  if (arity == 0) {
    if (tok == "CONST") return st.constsym(1);
    if (tok == "CONST2") return st.constsym(2);
    if (tok == "CONST3") return st.constsym(3);
    if (is_int_literal(tok)) return st.integer(BigInt(tok));
    return st.variable(tok);
  }
  std::vector<NodeId> kids;
  kids.reserve(static_cast<size_t>(arity));
  for (int i = 0; i < arity; ++i) kids.push_back(decode_at(st, seq, v, pos).id);
  if (auto f = func_of_token(tok)) return st.raw(Kind::Func, std::move(kids), *f);
  if (tok == "POW") return st.raw(Kind::Pow, std::move(kids));
  if (tok[0] == 'A') return st.raw(Kind::Add, std::move(kids));
  return st.raw(Kind::Mul, std::move(kids));
}

}  // namespace detail

// inverse of encode_sequence; rebuilds the exact stored shape
inline Expr decode_sequence(ExprStore& st, const TokenSequence& seq, const Vocabulary& v) {
  size_t pos = 0;
  Expr e = detail::decode_at(st, seq, v, pos);
  if (pos != seq.size()) throw std::invalid_argument("decode_sequence: trailing tokens");
  return e;
}

inline Vocabulary build_vocabulary(const std::vector<Expr>& corpus) {
  std::set<std::string> seen;
  for (Expr e : corpus) {
    if (!e.valid()) throw std::invalid_argument("build_vocabulary: empty expression");
    for (NodeId id : subexpressions(e)) seen.insert(node_token(*e.store, id));
  }
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

inline void save_vocabulary(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocabulary: cannot open " + path);
  for (const auto& t : v.tokens()) out << t << '\n';
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocabulary: cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

// stable fingerprint so checkpoints can refuse a mismatched vocabulary
inline std::uint64_t vocabulary_hash(const Vocabulary& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : v.tokens()) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace intsel
