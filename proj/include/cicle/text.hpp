#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cicle/json.hpp"

namespace cicle {

// One token of a source text. `surface` is the lowercased source slice
// [start, end); `stem` is its Porter stem.
struct TokenSpan {
  std::string surface;
  std::string stem;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct ByteRange {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

// Penn Treebank word segmentation. Returns source ranges in order; quote
// rewriting is not applied, so each range is a verbatim slice of `text`.
std::vector<ByteRange> treebank_segments(std::string_view text);

// Treebank segmentation, lowercasing and Porter stemming.
std::vector<TokenSpan> tokenize(std::string_view text);

// Porter's stemmer with the original rule set. Tokens that are not entirely
// ASCII lowercase letters are returned unchanged.
std::string porter_stem(std::string_view word);

struct FeatureEntry {
  std::uint32_t index = 0;
  double weight = 0.0;
  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

// Sparse vector with strictly increasing indices and positive weights,
// L2-normalized unless empty.
class FeatureVector {
 public:
  FeatureVector() = default;

  // Sorts, merges duplicates, drops non-positive weights and normalizes.
  static FeatureVector from_weights(std::vector<FeatureEntry> entries);
  // Takes entries as they are; used by tests to build non-normalized inputs.
  static FeatureVector from_raw(std::vector<FeatureEntry> entries);

  std::span<const FeatureEntry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  double norm() const;
  double weight_of(std::uint32_t index) const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<FeatureEntry> entries_;
};

// Dot product of two unit vectors; 0 when either is empty.
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

enum class VectorizerMode { Bow, TfIdf };

std::string_view mode_name(VectorizerMode mode);
VectorizerMode parse_mode(std::string_view name);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> stems, std::vector<std::uint32_t> doc_freq, std::size_t n_docs);

  std::size_t size() const noexcept { return stems_.size(); }
  std::size_t n_docs() const noexcept { return n_docs_; }
  const std::string& stem(std::uint32_t index) const { return stems_.at(index); }
  std::uint32_t doc_freq(std::uint32_t index) const { return doc_freq_.at(index); }
  const std::vector<std::string>& stems() const noexcept { return stems_; }
  // -1 when the stem is out of vocabulary.
  std::int64_t find(std::string_view stem) const;

 private:
  std::vector<std::string> stems_;
  std::vector<std::uint32_t> doc_freq_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t n_docs_ = 0;
};

struct VectorizerModel {
  VectorizerMode mode = VectorizerMode::TfIdf;
  Vocabulary vocabulary;
  std::vector<double> idf;  // ln(N / n_v); filled in both modes

  std::size_t dimension() const noexcept { return vocabulary.size(); }
};

// Vocabulary is every stem of the corpus, indexed in lexicographic order.
VectorizerModel fit_vectorizer(std::span<const std::string> corpus, VectorizerMode mode);

FeatureVector transform(const VectorizerModel& model, std::string_view text);
FeatureVector transform_tokens(const VectorizerModel& model, std::span<const TokenSpan> tokens);
std::vector<FeatureVector> transform_all(const VectorizerModel& model, std::span<const std::string> texts);

Json to_json(const VectorizerModel& model);
VectorizerModel vectorizer_from_json(const Json& j);

}  // namespace cicle
