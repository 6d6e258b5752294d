#include <algorithm>
#include <cmath>
#include <map>

#include "cicle/error.hpp"
#include "cicle/text.hpp"

namespace cicle {

FeatureVector FeatureVector::from_weights(std::vector<FeatureEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  std::vector<FeatureEntry> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (!merged.empty() && merged.back().index == e.index) {
      merged.back().weight += e.weight;
    } else {
      merged.push_back(e);
    }
  }
  std::erase_if(merged, [](const FeatureEntry& e) { return !(e.weight > 0.0); });
  double sq = 0.0;
  for (const auto& e : merged) sq += e.weight * e.weight;
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& e : merged) e.weight *= inv;
  }
  FeatureVector v;
  v.entries_ = std::move(merged);
  return v;
}

FeatureVector FeatureVector::from_raw(std::vector<FeatureEntry> entries) {
  FeatureVector v;
  v.entries_ = std::move(entries);
  return v;
}

double FeatureVector::norm() const {
  double sq = 0.0;
  for (const auto& e : entries_) sq += e.weight * e.weight;
  return std::sqrt(sq);
}

double FeatureVector::weight_of(std::uint32_t index) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                             [](const FeatureEntry& e, std::uint32_t i) { return e.index < i; });
  return (it != entries_.end() && it->index == index) ? it->weight : 0.0;
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  auto ea = a.entries();
  auto eb = b.entries();
  std::size_t i = 0;
  std::size_t j = 0;
  double dot = 0.0;
  while (i < ea.size() && j < eb.size()) {
    if (ea[i].index < eb[j].index) {
      ++i;
    } else if (eb[j].index < ea[i].index) {
      ++j;
    } else {
      dot += ea[i++].weight * eb[j++].weight;
    }
  }
  return dot;
}

std::string_view mode_name(VectorizerMode mode) { return mode == VectorizerMode::Bow ? "bow" : "tfidf"; }

VectorizerMode parse_mode(std::string_view name) {
  if (name == "bow") return VectorizerMode::Bow;
  if (name == "tfidf" || name == "tf-idf") return VectorizerMode::TfIdf;
  throw InvalidArgument("unknown vectorizer mode '" + std::string(name) + "' (expected bow or tfidf)");
}

Vocabulary::Vocabulary(std::vector<std::string> stems, std::vector<std::uint32_t> doc_freq, std::size_t n_docs)
    : stems_(std::move(stems)), doc_freq_(std::move(doc_freq)), n_docs_(n_docs) {
  if (stems_.size() != doc_freq_.size()) throw InvalidArgument("vocabulary and document frequencies differ in length");
  for (std::size_t i = 0; i < stems_.size(); ++i) {
    if (!index_.emplace(stems_[i], static_cast<std::uint32_t>(i)).second) {
      throw InvalidArgument("duplicate stem '" + stems_[i] + "' in vocabulary");
    }
  }
}

std::int64_t Vocabulary::find(std::string_view stem) const {
  auto it = index_.find(std::string(stem));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

VectorizerModel fit_vectorizer(std::span<const std::string> corpus, VectorizerMode mode) {
  if (corpus.empty()) throw InvalidArgument("cannot fit a vectorizer on an empty corpus");
  std::map<std::string, std::uint32_t> df;
  for (const auto& doc : corpus) {
    std::vector<std::string> stems;
    for (auto& tok : tokenize(doc)) stems.push_back(std::move(tok.stem));
    std::sort(stems.begin(), stems.end());
    stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
    for (auto& s : stems) ++df[s];
  }
  if (df.empty()) throw InvalidArgument("corpus contains no tokens");

  std::vector<std::string> stems;
  std::vector<std::uint32_t> freq;
  for (auto& [s, n] : df) {
    stems.push_back(s);
    freq.push_back(n);
  }
  VectorizerModel model;
  model.mode = mode;
  model.idf.reserve(freq.size());
  const double n_docs = static_cast<double>(corpus.size());
  for (auto n : freq) model.idf.push_back(std::log(n_docs / static_cast<double>(n)));
  model.vocabulary = Vocabulary(std::move(stems), std::move(freq), corpus.size());
  return model;
}

FeatureVector transform_tokens(const VectorizerModel& model, std::span<const TokenSpan> tokens) {
  std::vector<FeatureEntry> entries;
  entries.reserve(tokens.size());
  for (const auto& tok : tokens) {
    std::int64_t v = model.vocabulary.find(tok.stem);
    if (v >= 0) entries.push_back({static_cast<std::uint32_t>(v), 1.0});
  }
  // Collapse to raw counts before weighting so tf * idf is applied once per stem.
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  std::vector<FeatureEntry> counts;
  for (const auto& e : entries) {
    if (!counts.empty() && counts.back().index == e.index) {
      counts.back().weight += 1.0;
    } else {
      counts.push_back(e);
    }
  }
  if (model.mode == VectorizerMode::TfIdf) {
    for (auto& e : counts) e.weight *= model.idf.at(e.index);
  }
  return FeatureVector::from_weights(std::move(counts));
}

FeatureVector transform(const VectorizerModel& model, std::string_view text) {
  auto tokens = tokenize(text);
  return transform_tokens(model, tokens);
}

std::vector<FeatureVector> transform_all(const VectorizerModel& model, std::span<const std::string> texts) {
  std::vector<FeatureVector> out(texts.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(texts.size()); ++i) {
    out[static_cast<std::size_t>(i)] = transform(model, texts[static_cast<std::size_t>(i)]);
  }
  return out;
}

Json to_json(const VectorizerModel& model) {
  Json j;
  j["format"] = "cicle-vectorizer";
  j["version"] = 1;
  j["mode"] = std::string(mode_name(model.mode));
  j["n_docs"] = model.vocabulary.n_docs();
  Json vocab = Json::array();
  for (std::uint32_t i = 0; i < model.vocabulary.size(); ++i) {
    vocab.push_back({{"stem", model.vocabulary.stem(i)}, {"df", model.vocabulary.doc_freq(i)}, {"idf", model.idf[i]}});
  }
  j["vocabulary"] = std::move(vocab);
  return j;
}

VectorizerModel vectorizer_from_json(const Json& j) {
  if (j.value("format", "") != "cicle-vectorizer" || j.value("version", 0) != 1) {
    throw SchemaError("not a version-1 cicle-vectorizer document");
  }
  VectorizerModel model;
  model.mode = parse_mode(j.at("mode").get<std::string>());
  std::vector<std::string> stems;
  std::vector<std::uint32_t> df;
  for (const auto& e : j.at("vocabulary")) {
    stems.push_back(e.at("stem").get<std::string>());
    df.push_back(e.at("df").get<std::uint32_t>());
    model.idf.push_back(e.at("idf").get<double>());
  }
  model.vocabulary = Vocabulary(std::move(stems), std::move(df), j.at("n_docs").get<std::size_t>());
  return model;
}

}  // namespace cicle
