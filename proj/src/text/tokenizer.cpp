// Penn Treebank word tokenization (the rule list of NLTK's
// TreebankWordTokenizer), applied to a string whose characters remember
// their source offset. Rules only insert spaces or rewrite quote characters
// in place, so every output token maps back to a contiguous source slice.

#include <cstdint>
#include <regex>
#include <string>
#include <variant>
#include <vector>

#include "cicle/text.hpp"

namespace cicle {
namespace {

constexpr std::int64_t kInserted = -1;

struct Tracked {
  std::string text;
  std::vector<std::int64_t> origin;

  void append_source(const Tracked& src, std::size_t from, std::size_t to) {
    text.append(src.text, from, to - from);
    origin.insert(origin.end(), src.origin.begin() + static_cast<std::ptrdiff_t>(from),
                  src.origin.begin() + static_cast<std::ptrdiff_t>(to));
  }
  void append_space() {
    text.push_back(' ');
    origin.push_back(kInserted);
  }
};

struct Group {
  int index;
};
struct Space {};
// Writes `literal` in place of group `index`, inheriting its offsets.
struct Rewrite {
  const char* literal;
  int index;
};
using Piece = std::variant<Group, Space, Rewrite>;

struct Rule {
  std::regex pattern;
  std::vector<Piece> pieces;
};

Rule rule(const char* pattern, std::vector<Piece> pieces, bool icase = false) {
  auto flags = std::regex::ECMAScript | std::regex::optimize;
  if (icase) flags |= std::regex::icase;
  return Rule{std::regex(pattern, flags), std::move(pieces)};
}

// "\1 \2 " style templates.
std::vector<Piece> padded(std::initializer_list<int> groups, bool lead, bool trail) {
  std::vector<Piece> out;
  if (lead) out.push_back(Space{});
  bool first = true;
  for (int g : groups) {
    if (!first) out.push_back(Space{});
    out.push_back(Group{g});
    first = false;
  }
  if (trail) out.push_back(Space{});
  return out;
}

const std::vector<Rule>& opening_rules() {
  static const std::vector<Rule> rules = [] {
    std::vector<Rule> r;
    // starting quotes
    r.push_back(rule(R"(^")", {Rewrite{"``", 0}}));
    r.push_back(rule(R"((``))", padded({1}, true, true)));
    r.push_back(rule(R"(([ (\[{<])("|''))", {Group{1}, Space{}, Rewrite{"``", 2}, Space{}}));
    // punctuation; `$` also matches before a final newline, as in Python
    r.push_back(rule(R"(([:,])([^\d]))", {Space{}, Group{1}, Space{}, Group{2}}));
    r.push_back(rule(R"(([:,])(?=\n?$))", padded({1}, true, true)));
    r.push_back(rule(R"(\.\.\.)", padded({0}, true, true)));
    r.push_back(rule(R"([;@#$%&])", padded({0}, true, true)));
    r.push_back(rule(R"(([^\.])(\.)([\]\)}>"']*)\s*(?=\n?$))", {Group{1}, Space{}, Group{2}, Group{3}, Space{}}));
    r.push_back(rule(R"([?!])", padded({0}, true, true)));
    r.push_back(rule(R"(([^'])(') )", padded({1, 2}, false, true)));
    // brackets, double dashes
    r.push_back(rule(R"([\]\[\(\)\{\}<>])", padded({0}, true, true)));
    r.push_back(rule(R"(--)", padded({0}, true, true)));
    return r;
  }();
  return rules;
}

const std::vector<Rule>& closing_rules() {
  static const std::vector<Rule> rules = [] {
    std::vector<Rule> r;
    // ending quotes
    r.push_back(rule(R"('')", {Space{}, Rewrite{"''", 0}, Space{}}));
    r.push_back(rule(R"(")", {Space{}, Rewrite{"''", 0}, Space{}}));
    r.push_back(rule(R"(([^' ])('[sS]|'[mM]|'[dD]|') )", padded({1, 2}, false, true)));
    r.push_back(rule(R"(([^' ])('ll|'LL|'re|'RE|'ve|'VE|n't|N'T) )", padded({1, 2}, false, true)));
    // contractions
    for (const char* p : {R"(\b(can)(not)\b)", R"(\b(d)('ye)\b)", R"(\b(gim)(me)\b)", R"(\b(gon)(na)\b)",
                          R"(\b(got)(ta)\b)", R"(\b(lem)(me)\b)", R"(\b(more)('n)\b)", R"(\b(wan)(na)(?=\s))"}) {
      r.push_back(rule(p, padded({1, 2}, true, true), true));
    }
    for (const char* p : {R"( ('t)(is)\b)", R"( ('t)(was)\b)"}) {
      r.push_back(rule(p, padded({1, 2}, true, true), true));
    }
    return r;
  }();
  return rules;
}

Tracked apply(const Rule& r, const Tracked& in) {
  Tracked out;
  out.text.reserve(in.text.size() + 8);
  out.origin.reserve(in.text.size() + 8);
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(in.text.begin(), in.text.end(), r.pattern); it != std::sregex_iterator(); ++it) {
    const std::smatch& m = *it;
    auto pos = static_cast<std::size_t>(m.position(0));
    out.append_source(in, last, pos);
    for (const Piece& piece : r.pieces) {
      if (const auto* g = std::get_if<Group>(&piece)) {
        if (!m[g->index].matched) continue;
        auto from = static_cast<std::size_t>(m.position(g->index));
        out.append_source(in, from, from + static_cast<std::size_t>(m.length(g->index)));
      } else if (std::holds_alternative<Space>(piece)) {
        out.append_space();
      } else {
        const auto& rw = std::get<Rewrite>(piece);
        auto from = static_cast<std::size_t>(m.position(rw.index));
        auto len = static_cast<std::size_t>(m.length(rw.index));
        std::string_view lit(rw.literal);
        for (std::size_t i = 0; i < lit.size(); ++i) {
          out.text.push_back(lit[i]);
          out.origin.push_back(in.origin[from + std::min(i, len - 1)]);
        }
      }
    }
    last = pos + static_cast<std::size_t>(m.length(0));
  }
  out.append_source(in, last, in.text.size());
  return out;
}

// Length of a whitespace character starting at text[i], 0 if none. Covers
// ASCII whitespace and the UTF-8 encoded Unicode spaces str.split() knows.
std::size_t whitespace_length(const std::string& t, std::size_t i) {
  auto u = [&](std::size_t k) { return static_cast<unsigned char>(t[k]); };
  unsigned char c = u(i);
  if (c == ' ' || (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x1F)) return 1;
  if (c == 0xC2 && i + 1 < t.size() && (u(i + 1) == 0x85 || u(i + 1) == 0xA0)) return 2;
  if (c == 0xE1 && i + 2 < t.size() && u(i + 1) == 0x9A && u(i + 2) == 0x80) return 3;
  if (c == 0xE2 && i + 2 < t.size()) {
    unsigned char b1 = u(i + 1);
    unsigned char b2 = u(i + 2);
    if (b1 == 0x80 && ((b2 >= 0x80 && b2 <= 0x8A) || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF)) return 3;
    if (b1 == 0x81 && b2 == 0x9F) return 3;
  }
  if (c == 0xE3 && i + 2 < t.size() && u(i + 1) == 0x80 && u(i + 2) == 0x80) return 3;
  return 0;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

}  // namespace

std::vector<ByteRange> treebank_segments(std::string_view text) {
  Tracked t;
  t.text.assign(text);
  t.origin.resize(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) t.origin[i] = static_cast<std::int64_t>(i);

  for (const Rule& r : opening_rules()) t = apply(r, t);
  Tracked framed;
  framed.append_space();
  framed.append_source(t, 0, t.text.size());
  framed.append_space();
  t = std::move(framed);
  for (const Rule& r : closing_rules()) t = apply(r, t);

  std::vector<ByteRange> out;
  std::size_t i = 0;
  while (i < t.text.size()) {
    if (std::size_t w = whitespace_length(t.text, i)) {
      i += w;
      continue;
    }
    std::size_t j = i;
    while (j < t.text.size() && whitespace_length(t.text, j) == 0) ++j;
    auto first = static_cast<std::size_t>(t.origin[i]);
    auto last = static_cast<std::size_t>(t.origin[j - 1]);
    out.push_back({first, last + 1});
    i = j;
  }
  return out;
}

std::vector<TokenSpan> tokenize(std::string_view text) {
  std::vector<TokenSpan> tokens;
  for (const ByteRange& r : treebank_segments(text)) {
    TokenSpan tok;
    tok.start = r.start;
    tok.end = r.end;
    tok.surface = ascii_lower(text.substr(r.start, r.end - r.start));
    tok.stem = porter_stem(tok.surface);
    // A lone "s" stems to nothing.
    if (tok.stem.empty()) tok.stem = tok.surface;
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

}  // namespace cicle
