#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cicle/corpus.hpp"
#include "cicle/json.hpp"
#include "cicle/text.hpp"

namespace cicle {

enum class Regularization { L1, L2 };

// Sum: (1/(2C))|w|^2 + sum_i loss_i, the liblinear objective.
// Mean: the data term is averaged, which makes the fit invariant to
// duplicating every training point.
enum class LossScaling { Sum, Mean };

struct TrainConfig {
  Regularization regularization = Regularization::L2;
  double C = 1.0;
  int max_epochs = 500;
  // LR: gradient-mapping norm relative to the first epoch's.
  // SVM: absolute bound on the spread of the dual projected gradient.
  double tolerance = 1e-6;
  std::uint64_t seed = 42;
  LossScaling scaling = LossScaling::Sum;

  void validate() const;
};

std::string_view regularization_name(Regularization r);
Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

// Dense per-class probabilities summing to one.
struct ClassDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t c) const { return probs[c]; }
  // Lowest class index among ties.
  ClassIndex argmax() const;
};

enum class LinearKind { LogReg, Svm };

struct LinearModel {
  LinearKind kind = LinearKind::LogReg;
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // row-major n_classes x dim
  std::vector<double> bias;
  TrainConfig config;

  double weight(ClassIndex c, std::uint32_t v) const { return weights[c * dim + v]; }
  std::span<const double> row(ClassIndex c) const { return {weights.data() + c * dim, dim}; }
};

Json to_json(const LinearModel& model);
LinearModel linear_model_from_json(const Json& j);

// One binary problem of a one-vs-rest decomposition; targets are +1 / -1.
struct BinaryProblem {
  std::span<const FeatureVector> X;
  std::vector<int> targets;
  std::size_t dim = 0;
};

// Objective value and gradient of the smooth part of the logistic objective
// (the L2 penalty is included, the L1 penalty is not). `grad` has dim + 1
// entries, the last being d/db.
double logistic_smooth_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg);
void logistic_smooth_gradient(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg,
                              std::span<double> grad);
// Full objective including the L1 penalty when configured.
double logistic_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg);

// (1/(2C))(|w|^2 + b^2) + hinge data term; the bias is penalized because the
// solver treats it as a constant feature.
double hinge_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg);
void hinge_subgradient(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg,
                       std::span<double> grad);

struct BinaryFit {
  std::vector<double> w;
  double b = 0.0;
  int epochs = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each epoch
};

BinaryFit fit_logistic_binary(const BinaryProblem& p, const TrainConfig& cfg);
BinaryFit fit_hinge_binary(const BinaryProblem& p, const TrainConfig& cfg);

// `dim` is the vocabulary size. Per-class problems run in parallel.
LinearModel train_logreg_ovr(std::span<const FeatureVector> X, std::span<const ClassIndex> y, const TrainConfig& cfg,
                             std::size_t n_classes, std::size_t dim);
LinearModel train_svm_ovr(std::span<const FeatureVector> X, std::span<const ClassIndex> y, const TrainConfig& cfg,
                          std::size_t n_classes, std::size_t dim);

std::vector<double> linear_scores(const LinearModel& model, const FeatureVector& x);
// sigmoid(w_c . x + b_c) normalized over classes.
ClassDistribution predict_proba(const LinearModel& model, const FeatureVector& x);
std::vector<double> svm_decision(const LinearModel& model, const FeatureVector& x);
ClassIndex predict_linear(const LinearModel& model, const FeatureVector& x);

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;
};

struct KnnResult {
  ClassDistribution distribution;  // vote shares
  ClassIndex predicted = 0;
  std::vector<Neighbor> neighbors;  // most similar first
};

// Similarity ties go to the lower training index; vote ties to the class that
// appears first in neighbor order.
KnnResult knn_predict(std::span<const FeatureVector> train_X, std::span<const ClassIndex> train_y,
                      const FeatureVector& x, std::size_t k, std::size_t n_classes);

class RandomBaseline {
 public:
  RandomBaseline(std::size_t n_classes, std::uint64_t seed);
  ClassIndex predict();

 private:
  std::size_t n_classes_;
  std::mt19937_64 rng_;
};

// Most frequent training class; ties go to the lowest index, which is the
// lexicographically smallest label.
ClassIndex majority_class(std::span<const ClassIndex> train_y, std::size_t n_classes);

enum class ClassifierKind { Random, Majority, Knn, LogReg, Svm };

std::string_view classifier_name(ClassifierKind kind);
ClassifierKind parse_classifier(std::string_view name);

struct GridCandidate {
  ClassifierKind kind = ClassifierKind::LogReg;
  TrainConfig config;
  std::size_t k = 0;  // KNN only

  std::string describe() const;
};

// KNN k in {2,4,8}; LR C in {0.5,1,2} x {L1,L2}; SVM C in {0.5,1,2}.
// The baselines have a single candidate.
std::vector<GridCandidate> default_grid(ClassifierKind kind, std::uint64_t seed = 42);

// A trained classifier of any kind.
class FittedClassifier {
 public:
  static FittedClassifier fit(const GridCandidate& candidate, std::span<const FeatureVector> X,
                              std::span<const ClassIndex> y, std::size_t n_classes, std::size_t dim);

  const GridCandidate& candidate() const noexcept { return candidate_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  bool has_probabilities() const noexcept;
  const LinearModel* linear() const noexcept { return linear_ ? &*linear_ : nullptr; }

  // Random draws from one generator in sample order.
  std::vector<ClassIndex> predict_all(std::span<const FeatureVector> X) const;
  // LR and KNN only.
  ClassDistribution predict_proba(const FeatureVector& x) const;
  std::vector<ClassDistribution> predict_proba_all(std::span<const FeatureVector> X) const;

 private:
  GridCandidate candidate_;
  std::size_t n_classes_ = 0;
  std::optional<LinearModel> linear_;
  std::vector<FeatureVector> train_X_;
  std::vector<ClassIndex> train_y_;
  ClassIndex majority_ = 0;
};

struct GridEntry {
  GridCandidate candidate;
  double score = 0.0;
};

struct GridSearchReport {
  std::vector<GridEntry> entries;
  std::size_t chosen = 0;
  std::string metric = "macro-f1";

  const GridCandidate& best() const { return entries.at(chosen).candidate; }
};

// Fits every candidate on train and scores macro-F1 over the classes present
// in the validation labels. The first candidate reaching the maximum wins.
GridSearchReport grid_search(std::span<const GridCandidate> grid, std::span<const FeatureVector> train_X,
                             std::span<const ClassIndex> train_y, std::span<const FeatureVector> val_X,
                             std::span<const ClassIndex> val_y, std::size_t n_classes, std::size_t dim);

Json to_json(const GridSearchReport& report);

// Tokens of `title` whose stem has a strictly positive coefficient for
// `cls`; runs of consecutive selected tokens are merged into one span.
std::vector<CharSpan> extract_spans(const LinearModel& model, const VectorizerModel& vectorizer,
                                    std::string_view title, ClassIndex cls);

// Over stems with a positive coefficient for at least one class: the mean
// number of classes for which the coefficient is positive. nullopt if none.
std::optional<double> mean_classes_per_informative_token(const LinearModel& model);

}  // namespace cicle
