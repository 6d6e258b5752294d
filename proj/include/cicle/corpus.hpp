#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cicle/json.hpp"

#include "cicle/task.hpp"

namespace cicle {

// Half-open [start, end) byte range into a title.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct IncidentRecord {
  std::string title;
  std::string hazard;
  std::string hazard_category;
  std::string product;
  std::string product_category;
  std::optional<int> year;
  std::optional<int> month;
  std::optional<int> day;
  std::optional<std::string> language;
  std::optional<std::string> country;
  std::optional<std::vector<CharSpan>> hazard_title_spans;
  std::optional<std::vector<CharSpan>> product_title_spans;

  const std::string& label(Task task) const;

  friend bool operator==(const IncidentRecord&, const IncidentRecord&) = default;
};

// Distinct labels of one task in lexicographic order, with their supports.
class LabelSpace {
 public:
  LabelSpace() = default;
  static LabelSpace from_labels(const std::vector<std::string>& observed);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::string& label(ClassIndex c) const { return labels_.at(c); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<ClassIndex> find(std::string_view label) const;
  // Throws InvalidArgument for unknown labels.
  ClassIndex index_of(std::string_view label) const;
  std::size_t support(ClassIndex c) const { return support_.at(c); }
  std::size_t total_support() const noexcept { return total_; }

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> support_;
  std::unordered_map<std::string, ClassIndex> index_;
  std::size_t total_ = 0;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<IncidentRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const IncidentRecord& record(std::size_t i) const { return records_.at(i); }
  const std::vector<IncidentRecord>& records() const noexcept { return records_; }
  const LabelSpace& label_space(Task task) const { return spaces_[static_cast<std::size_t>(task)]; }

  // Dense class index of every record for one task.
  std::vector<ClassIndex> labels(Task task) const;
  std::vector<std::string> titles() const;

 private:
  std::vector<IncidentRecord> records_;
  std::array<LabelSpace, 4> spaces_;
};

// Reads the food-recall CSV (RFC 4180, UTF-8, header row). Required columns:
// title and the four label columns; hyphen and underscore spellings are both
// accepted. Metadata columns are optional.
LabeledDataset load_csv(const std::filesystem::path& path);
LabeledDataset read_csv(std::istream& in);
void write_csv(std::ostream& out, const LabeledDataset& ds);
void save_csv(const std::filesystem::path& path, const LabeledDataset& ds);

// Span columns use the form "[(0, 5), (9, 14)]".
std::string format_spans(const std::vector<CharSpan>& spans);
std::optional<std::vector<CharSpan>> parse_spans(std::string_view text);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  std::vector<Fold> folds;
  std::uint64_t seed = 42;
  bool stratified = false;
  double val_fraction = 0.1;
  std::optional<Task> stratify_task;
};

struct SplitOptions {
  std::size_t k = 5;
  double val_fraction = 0.1;
  std::optional<Task> stratify_task;
  std::uint64_t seed = 42;
};

SplitPlan make_cv_splits(const LabeledDataset& ds, const SplitOptions& options);

Json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const Json& j);

struct SupportTiers {
  std::vector<ClassIndex> high;
  std::vector<ClassIndex> medium;
  std::vector<ClassIndex> low;
};

// Head and tail class groups each covering at least a third of the samples.
SupportTiers support_tiers(const LabeledDataset& ds, Task task);
SupportTiers support_tiers(const LabelSpace& space);

// Per fold: labels with at least `min_train` occurrences in the non-test part
// of the fold and at least one in its test set.
std::vector<std::set<ClassIndex>> filter_well_supported(const SplitPlan& plan, const LabeledDataset& ds,
                                                        Task task, std::size_t min_train = 4);

}  // namespace cicle
