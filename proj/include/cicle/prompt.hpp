#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cicle/classify.hpp"
#include "cicle/conformal.hpp"
#include "cicle/corpus.hpp"
#include "cicle/json.hpp"
#include "cicle/text.hpp"

namespace cicle {

enum class Strategy { All, SimK, MaxK, Cicle };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Per-task instruction line. Only the hazard wording appears in published
// prompts; the product wording mirrors it.
std::string default_description(Task task);

struct FewShot {
  std::string text;
  std::string label;
  ClassIndex cls = 0;
  std::size_t train_index = 0;  // position in the exemplar pool
  double similarity = 0.0;
  std::optional<double> class_probability;
};

struct PromptSpec {
  Strategy strategy = Strategy::All;
  std::size_t k = 0;  // SIM-k / MAX-k parameter, 0 otherwise
  std::string description;
  std::vector<FewShot> shots;
  std::string query;
  std::size_t rendered_bytes = 0;

  // Distinct classes among the shots, in first-appearance order.
  std::vector<ClassIndex> classes() const;
};

struct PromptOutcome {
  bool bypass = false;
  ClassIndex bypass_class = 0;  // valid when bypass
  std::string bypass_label;
  PromptSpec spec;  // valid when !bypass
  std::optional<PredictionSet> set;  // CICLe only
};

// Labeled training texts a prompt may draw its shots from.
class ExemplarPool {
 public:
  ExemplarPool(std::vector<std::string> texts, std::vector<FeatureVector> vectors, std::vector<ClassIndex> labels,
               LabelSpace space);
  // Records `indices` of `ds`, vectorized with `vectorizer`.
  static ExemplarPool from_dataset(const LabeledDataset& ds, std::span<const std::size_t> indices, Task task,
                                   const VectorizerModel& vectorizer);

  std::size_t size() const noexcept { return texts_.size(); }
  const LabelSpace& space() const noexcept { return space_; }
  const std::string& text(std::size_t i) const { return texts_.at(i); }
  ClassIndex label(std::size_t i) const { return labels_.at(i); }
  std::span<const FeatureVector> vectors() const noexcept { return vectors_; }
  std::span<const ClassIndex> labels() const noexcept { return labels_; }
  std::span<const std::size_t> members(ClassIndex c) const { return members_.at(c); }

  std::vector<double> similarities(const FeatureVector& query) const;
  // Up to `per_class` members of `cls`, most similar first, ties by index.
  std::vector<FewShot> nearest_of_class(ClassIndex cls, std::span<const double> sims, std::size_t per_class) const;

 private:
  std::vector<std::string> texts_;
  std::vector<FeatureVector> vectors_;
  std::vector<ClassIndex> labels_;
  LabelSpace space_;
  std::vector<std::vector<std::size_t>> members_;
};

struct Query {
  std::string text;
  FeatureVector vector;
};

// Two most similar shots per class, then one global sort by descending
// similarity (ties by pool index).
PromptSpec build_all(const ExemplarPool& pool, const Query& q, std::string description);
// The k first shots of build_all.
PromptSpec build_sim_k(const ExemplarPool& pool, const Query& q, std::size_t k, std::string description);
// Top-k classes by probability, two shots each, grouped by class in
// descending probability, within a class by similarity.
PromptSpec build_max_k(const ClassDistribution& probs, const ExemplarPool& pool, const Query& q, std::size_t k,
                       std::string description);
// Conformal set of size one bypasses the model; otherwise a MAX-style prompt
// over exactly the set's classes.
PromptOutcome build_cicle(const CalibrationModel& cal, const ClassDistribution& probs, const ExemplarPool& pool,
                          const Query& q, std::string description);

// Description line, one `"<text>" => <label>` line per shot, then
// `"<query>" => ` with a trailing space. Lines are joined by '\n'.
std::string render(const PromptSpec& spec);
// Fills spec.rendered_bytes and returns the text.
std::string render_and_measure(PromptSpec& spec);

struct ParsedPrompt {
  std::string description;
  std::vector<std::pair<std::string, std::string>> shots;  // (text, label)
  std::string query;
};

// Inverse of render for texts and labels that contain no line breaks and no
// `" => ` sequence.
ParsedPrompt parse_rendered(std::string_view prompt);

// One JSON-lines record per query: strategy, bypass flag, prompt bytes,
// classes and shots.
Json telemetry_json(const PromptOutcome& outcome, const LabelSpace& space);

}  // namespace cicle
