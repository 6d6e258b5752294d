// Porter, "An algorithm for suffix stripping" (1980), original rule set.
//
// Within a step the rules are tried in order and the first suffix that
// matches decides: if its condition fails the step leaves the word alone.
// Listing longer suffixes before their tails makes this the same as the
// longest-match rule of the original description.

#include <algorithm>
#include <string>
#include <string_view>

#include "cicle/text.hpp"

namespace cicle {
namespace {

bool is_vowel_letter(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// y is a consonant at the start of a word or after a vowel.
bool is_consonant(std::string_view w, std::size_t i) {
  if (is_vowel_letter(w[i])) return false;
  if (w[i] != 'y') return true;
  bool negate = false;
  while (i > 0 && w[i] == 'y') {
    negate = !negate;
    --i;
  }
  return (!is_vowel_letter(w[i])) != negate;
}

// m in [C](VC){m}[V]
int measure(std::string_view stem) {
  int m = 0;
  bool prev_vowel = false;
  bool prev_consonant_flag = false;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    bool consonant;
    char c = stem[i];
    if (is_vowel_letter(c)) {
      consonant = false;
    } else if (c == 'y') {
      consonant = (i == 0) ? true : !prev_consonant_flag;
    } else {
      consonant = true;
    }
    if (consonant && prev_vowel) ++m;
    prev_vowel = !consonant;
    prev_consonant_flag = consonant;
  }
  return m;
}

bool contains_vowel(std::string_view stem) {
  for (std::size_t i = 0; i < stem.size(); ++i) {
    if (!is_consonant(stem, i)) return true;
  }
  return false;
}

bool ends_double_consonant(std::string_view w) {
  return w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] && is_consonant(w, w.size() - 1);
}

// *o: ends consonant-vowel-consonant, last letter not w, x or y.
bool ends_cvc(std::string_view w) {
  const std::size_t n = w.size();
  return n >= 3 && is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) && w[n - 1] != 'w' &&
         w[n - 1] != 'x' && w[n - 1] != 'y';
}

enum class Cond { None, MeasurePositive, MeasureAbove1, MeasureAbove1AndSOrT };

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
  Cond cond;
};

bool holds(Cond cond, std::string_view stem) {
  switch (cond) {
    case Cond::None: return true;
    case Cond::MeasurePositive: return measure(stem) > 0;
    case Cond::MeasureAbove1: return measure(stem) > 1;
    case Cond::MeasureAbove1AndSOrT:
      return measure(stem) > 1 && !stem.empty() && (stem.back() == 's' || stem.back() == 't');
  }
  return false;
}

std::string apply_rules(const std::string& word, std::initializer_list<Rule> rules) {
  for (const Rule& r : rules) {
    if (word.size() >= r.suffix.size() && std::string_view(word).ends_with(r.suffix)) {
      std::string_view stem(word.data(), word.size() - r.suffix.size());
      if (holds(r.cond, stem)) return std::string(stem) + std::string(r.replacement);
      return word;
    }
  }
  return word;
}

std::string step1a(const std::string& w) {
  return apply_rules(w, {{"sses", "ss", Cond::None}, {"ies", "i", Cond::None}, {"ss", "ss", Cond::None},
                         {"s", "", Cond::None}});
}

std::string step1b(const std::string& w) {
  std::string_view view(w);
  if (view.ends_with("eed")) {
    std::string_view stem = view.substr(0, view.size() - 3);
    return measure(stem) > 0 ? std::string(stem) + "ee" : w;
  }
  std::string stem;
  bool removed = false;
  for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
    if (view.ends_with(suffix)) {
      std::string_view candidate = view.substr(0, view.size() - suffix.size());
      if (contains_vowel(candidate)) {
        stem = std::string(candidate);
        removed = true;
        break;
      }
    }
  }
  if (!removed) return w;

  std::string_view s(stem);
  if (s.ends_with("at") || s.ends_with("bl") || s.ends_with("iz")) return stem + "e";
  if (ends_double_consonant(s)) {
    char last = s.back();
    if (last != 'l' && last != 's' && last != 'z') return stem.substr(0, stem.size() - 1);
    return stem;
  }
  if (measure(s) == 1 && ends_cvc(s)) return stem + "e";
  return stem;
}

std::string step1c(const std::string& w) {
  if (!w.empty() && w.back() == 'y') {
    std::string_view stem(w.data(), w.size() - 1);
    if (contains_vowel(stem)) return std::string(stem) + "i";
  }
  return w;
}

std::string step2(const std::string& w) {
  constexpr Cond P = Cond::MeasurePositive;
  return apply_rules(w, {{"ational", "ate", P}, {"tional", "tion", P}, {"enci", "ence", P},  {"anci", "ance", P},
                         {"izer", "ize", P},    {"abli", "able", P},   {"alli", "al", P},     {"entli", "ent", P},
                         {"eli", "e", P},       {"ousli", "ous", P},   {"ization", "ize", P}, {"ation", "ate", P},
                         {"ator", "ate", P},    {"alism", "al", P},    {"iveness", "ive", P}, {"fulness", "ful", P},
                         {"ousness", "ous", P}, {"aliti", "al", P},    {"iviti", "ive", P},   {"biliti", "ble", P}});
}

std::string step3(const std::string& w) {
  constexpr Cond P = Cond::MeasurePositive;
  return apply_rules(w, {{"icate", "ic", P}, {"ative", "", P}, {"alize", "al", P}, {"iciti", "ic", P},
                         {"ical", "ic", P},  {"ful", "", P},   {"ness", "", P}});
}

std::string step4(const std::string& w) {
  constexpr Cond G = Cond::MeasureAbove1;
  return apply_rules(w, {{"al", "", G},   {"ance", "", G}, {"ence", "", G},  {"er", "", G},
                         {"ic", "", G},   {"able", "", G}, {"ible", "", G},  {"ant", "", G},
                         {"ement", "", G}, {"ment", "", G}, {"ent", "", G},   {"ion", "", Cond::MeasureAbove1AndSOrT},
                         {"ou", "", G},   {"ism", "", G},  {"ate", "", G},   {"iti", "", G},
                         {"ous", "", G},  {"ive", "", G},  {"ize", "", G}});
}

std::string step5a(const std::string& w) {
  if (w.empty() || w.back() != 'e') return w;
  std::string_view stem(w.data(), w.size() - 1);
  int m = measure(stem);
  if (m > 1 || (m == 1 && !ends_cvc(stem))) return std::string(stem);
  return w;
}

std::string step5b(const std::string& w) {
  std::string_view view(w);
  if (view.ends_with("ll") && measure(view.substr(0, view.size() - 1)) > 1) return w.substr(0, w.size() - 1);
  return w;
}

}  // namespace

std::string porter_stem(std::string_view word) {
  if (word.empty() || !std::all_of(word.begin(), word.end(), [](char c) { return c >= 'a' && c <= 'z'; })) {
    return std::string(word);
  }
  std::string s(word);
  s = step1a(s);
  s = step1b(s);
  s = step1c(s);
  s = step2(s);
  s = step3(s);
  s = step4(s);
  s = step5a(s);
  s = step5b(s);
  return s;
}

}  // namespace cicle
