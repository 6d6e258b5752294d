#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cicle/corpus.hpp"
#include "cicle/json.hpp"

namespace cicle {

// nullopt marks an LLM reply that matched no label.
using Prediction = std::optional<ClassIndex>;

// Rows are gold classes, columns predictions plus a final failure column.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = 0);

  void add(ClassIndex gold, Prediction predicted);

  std::size_t n_classes() const noexcept { return m_; }
  std::size_t at(ClassIndex gold, ClassIndex predicted) const { return counts_.at(gold * (m_ + 1) + predicted); }
  std::size_t failures(ClassIndex gold) const { return counts_.at(gold * (m_ + 1) + m_); }
  std::size_t total_failures() const;
  std::size_t row_sum(ClassIndex gold) const;    // includes failures
  std::size_t column_sum(ClassIndex predicted) const;
  std::size_t total() const noexcept { return total_; }
  // Classes that occur as gold or as prediction.
  std::set<ClassIndex> present_classes() const;

 private:
  std::size_t m_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

ConfusionMatrix confusion(std::span<const Prediction> predicted, std::span<const ClassIndex> gold, std::size_t n_classes);
ConfusionMatrix confusion(std::span<const ClassIndex> predicted, std::span<const ClassIndex> gold, std::size_t n_classes);

// How samples whose gold class lies outside the scored subset are treated.
// CountAsErrors keeps them, so predicting a subset class for them is a false
// positive. DropOutside ignores them.
enum class TierMode { CountAsErrors, DropOutside };

struct ClassScore {
  ClassIndex cls = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  std::string subset = "all";
  std::size_t n_samples = 0;  // samples that entered the counts
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::vector<ClassScore> per_class;
};

// Macro scores average over `subset`; an empty subset yields zeros.
MetricsReport f1_report(const ConfusionMatrix& cm, const std::set<ClassIndex>& subset, std::string subset_name = "all",
                        TierMode mode = TierMode::CountAsErrors);
// Over present_classes().
MetricsReport f1_report(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);

struct Summary {
  double mean = 0.0;
  double max = 0.0;
  double mean_deviation = 0.0;  // mean absolute deviation from the mean
};

Summary summarize(std::span<const double> values);

struct AggregateReport {
  std::string subset;
  std::size_t n_folds = 0;
  Summary micro_f1;
  Summary macro_f1;
  Summary macro_precision;
  Summary macro_recall;
};

AggregateReport aggregate_folds(std::span<const MetricsReport> reports);

struct SampleTelemetry {
  bool bypassed = false;
  std::size_t prompt_bytes = 0;
  std::size_t classes_in_prompt = 0;
  std::size_t shots = 0;
  bool parse_failure = false;
  int retries = 0;
};

struct TelemetryReport {
  std::size_t n_samples = 0;
  std::size_t n_prompted = 0;
  double llm_usage = 0.0;
  // Means over prompted samples; absent when nothing was prompted.
  std::optional<double> mean_prompt_bytes;
  std::optional<double> mean_classes_per_prompt;
  std::optional<double> mean_samples_per_class;
  std::optional<double> failure_rate;
};

TelemetryReport telemetry_report(std::span<const SampleTelemetry> records);

// (po - pe) / (1 - pe); when pe = 1 the result is 1 if po = 1, else 0.
double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

Json to_json(const MetricsReport& r, const LabelSpace* space = nullptr);
Json to_json(const Summary& s);
Json to_json(const AggregateReport& r);
Json to_json(const TelemetryReport& r);
Json to_json(const ConfusionMatrix& cm);

// One row per (name, aggregate): name,subset,folds,then mean/max/mean-dev for
// macro F1, micro F1, macro precision and macro recall.
void write_metrics_csv(std::ostream& out, std::span<const std::pair<std::string, AggregateReport>> rows);
// name,samples,llm_usage,prompt_bytes,classes_per_prompt,samples_per_class,failure_rate
void write_telemetry_csv(std::ostream& out, std::span<const std::pair<std::string, TelemetryReport>> rows);

}  // namespace cicle
