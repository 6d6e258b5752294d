#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cicle/classify.hpp"
#include "cicle/conformal.hpp"
#include "cicle/corpus.hpp"
#include "cicle/eval.hpp"
#include "cicle/llm.hpp"
#include "cicle/prompt.hpp"
#include "cicle/text.hpp"

namespace cicle {

// Train/val/test material of one fold, vectorized with a vectorizer fitted on
// the fold's training texts.
struct FoldData {
  VectorizerModel vectorizer;
  std::vector<FeatureVector> train_X, val_X, test_X;
  std::vector<ClassIndex> train_y, val_y, test_y;
};

FoldData prepare_fold(const LabeledDataset& ds, const Fold& fold, Task task, VectorizerMode mode);

// Classes scored in one fold: the "all" set and the two support tiers.
struct EvalSubsets {
  std::set<ClassIndex> all;
  std::set<ClassIndex> high;
  std::set<ClassIndex> low;
  bool well_supported_only = false;
};

// Fine-grained tasks score only well-supported classes of the fold; the
// category tasks score every class that occurs as gold or prediction.
EvalSubsets eval_subsets(const LabeledDataset& ds, const SplitPlan& plan, std::size_t fold, Task task,
                         const ConfusionMatrix& cm, std::size_t min_train = 4);

struct FoldScores {
  MetricsReport all, high, low;
};

FoldScores score_fold(const ConfusionMatrix& cm, const EvalSubsets& subsets, TierMode mode);

struct Aggregates {
  AggregateReport all, high, low;
};

Aggregates aggregate(const std::vector<FoldScores>& folds);

struct ClassicalOptions {
  Task task = Task::HazardCategory;
  VectorizerMode mode = VectorizerMode::TfIdf;
  ClassifierKind classifier = ClassifierKind::LogReg;
  std::vector<GridCandidate> grid;  // empty: the default grid
  TierMode tier_mode = TierMode::CountAsErrors;
  std::size_t min_train = 4;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;  // folds run concurrently up to this cap
};

struct ClassicalFold {
  VectorizerModel vectorizer;
  std::optional<LinearModel> model;  // LR and SVM
  GridSearchReport grid;
  FoldScores scores;
  ConfusionMatrix confusion;
};

struct ClassicalResult {
  std::vector<ClassicalFold> folds;
  Aggregates summary;
};

ClassicalResult run_classical(const LabeledDataset& ds, const SplitPlan& plan, const ClassicalOptions& options);

enum class BackendKind { Http, Perfect, RandomShot, Scripted };

std::string_view backend_name(BackendKind kind);
BackendKind parse_backend(std::string_view name);

struct PromptRunOptions {
  Task task = Task::HazardCategory;
  Strategy strategy = Strategy::Cicle;
  VectorizerMode vectorizer_mode = VectorizerMode::TfIdf;
  std::size_t k = 5;
  double alpha = 0.05;
  std::optional<std::string> description;  // default_description(task) when absent
  // Base classifier for MAX-k and CICLe; empty grid = default LR grid.
  std::vector<GridCandidate> base_grid;
  TierMode tier_mode = TierMode::CountAsErrors;
  LabelMatching matching = LabelMatching::Lenient;
  CompletionRequest request;
  std::size_t concurrency = 4;
  std::size_t min_train = 4;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
};

struct PromptFold {
  std::vector<SampleTelemetry> telemetry;
  TelemetryReport telemetry_summary;
  FoldScores scores;
  ConfusionMatrix confusion;
  std::vector<Json> prompt_records;  // telemetry_json per test sample
  std::optional<CalibrationModel> calibration;
  std::optional<double> set_coverage;        // conformal coverage on test
  std::optional<double> base_accuracy;       // top-1 accuracy of the base
  std::optional<double> accuracy;            // final accuracy incl. failures
};

struct PromptRunResult {
  std::vector<PromptFold> folds;
  Aggregates summary;
  TelemetryReport telemetry;  // over all folds
};

PromptRunResult run_prompting(const LabeledDataset& ds, const SplitPlan& plan, const PromptRunOptions& options,
                              CompletionBackend& backend, TranscriptWriter* transcript = nullptr);

// Runs `body(f)` for every fold with at most `jobs` at a time.
void for_each_fold(std::size_t n_folds, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace cicle
