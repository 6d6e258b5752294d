#include <algorithm>
#include <cmath>
#include <numeric>

#include "cicle/corpus.hpp"
#include "cicle/error.hpp"
#include "cicle/random.hpp"

namespace cicle {

const std::string& IncidentRecord::label(Task task) const {
  switch (task) {
    case Task::Hazard: return hazard;
    case Task::HazardCategory: return hazard_category;
    case Task::Product: return product;
    case Task::ProductCategory: return product_category;
  }
  return hazard;
}

LabelSpace LabelSpace::from_labels(const std::vector<std::string>& observed) {
  LabelSpace space;
  space.labels_ = observed;
  std::sort(space.labels_.begin(), space.labels_.end());
  space.labels_.erase(std::unique(space.labels_.begin(), space.labels_.end()), space.labels_.end());
  space.support_.assign(space.labels_.size(), 0);
  for (std::size_t i = 0; i < space.labels_.size(); ++i) {
    space.index_.emplace(space.labels_[i], static_cast<ClassIndex>(i));
  }
  for (const auto& l : observed) ++space.support_[space.index_.at(l)];
  space.total_ = observed.size();
  return space;
}

std::optional<ClassIndex> LabelSpace::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ClassIndex LabelSpace::index_of(std::string_view label) const {
  if (auto c = find(label)) return *c;
  throw InvalidArgument("unknown label '" + std::string(label) + "'");
}

LabeledDataset::LabeledDataset(std::vector<IncidentRecord> records) : records_(std::move(records)) {
  for (Task t : kAllTasks) {
    std::vector<std::string> observed;
    observed.reserve(records_.size());
    for (const auto& r : records_) observed.push_back(r.label(t));
    spaces_[static_cast<std::size_t>(t)] = LabelSpace::from_labels(observed);
  }
}

std::vector<ClassIndex> LabeledDataset::labels(Task task) const {
  const auto& space = label_space(task);
  std::vector<ClassIndex> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(space.index_of(r.label(task)));
  return out;
}

std::vector<std::string> LabeledDataset::titles() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.title);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation splits

namespace {

std::size_t holdout_size(std::size_t n_nontest, double fraction) {
  auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_nontest) + 1e-9));
  if (n == 0 && fraction > 0.0 && n_nontest >= 2) n = 1;
  return std::min(n, n_nontest == 0 ? 0 : n_nontest - 1);
}

// Largest-remainder allocation of `total` slots proportionally to `sizes`.
std::vector<std::size_t> proportional_quotas(const std::vector<std::size_t>& sizes, std::size_t total) {
  std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> quota(sizes.size(), 0);
  if (n == 0 || total == 0) return quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    double exact = static_cast<double>(total) * static_cast<double>(sizes[c]) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += quota[c];
    remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    std::size_t c = remainders[i].second;
    if (quota[c] < sizes[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

SplitPlan make_cv_splits(const LabeledDataset& ds, const SplitOptions& options) {
  const std::size_t n = ds.size();
  const std::size_t k = options.k;
  if (k < 2) throw InvalidArgument("k must be at least 2");
  if (k > n) throw InvalidArgument("k=" + std::to_string(k) + " exceeds the record count " + std::to_string(n));
  if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must lie in [0, 1)");
  }

  SplitPlan plan;
  plan.seed = options.seed;
  plan.stratified = options.stratify_task.has_value();
  plan.stratify_task = options.stratify_task;
  plan.val_fraction = options.val_fraction;

  std::vector<std::size_t> test_fold(n, 0);
  std::vector<ClassIndex> labels;
  std::size_t n_classes = 1;
  if (plan.stratified) {
    labels = ds.labels(*options.stratify_task);
    n_classes = ds.label_space(*options.stratify_task).size();
  } else {
    labels.assign(n, 0);
  }

  std::mt19937_64 rng(mix_seed(options.seed, 0));
  {
    // Deal each class's shuffled members round-robin; the cursor carries over
    // between classes so fold sizes stay within one of each other.
    std::vector<std::vector<std::size_t>> members(n_classes);
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    std::size_t cursor = 0;
    for (auto& m : members) {
      shuffle_in_place(std::span<std::size_t>(m), rng);
      for (std::size_t i : m) test_fold[i] = cursor++ % k;
    }
  }

  plan.folds.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    Fold& fold = plan.folds[f];
    std::vector<std::vector<std::size_t>> nontest(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      if (test_fold[i] == f) {
        fold.test.push_back(i);
      } else {
        nontest[labels[i]].push_back(i);
      }
    }
    std::size_t n_nontest = n - fold.test.size();
    std::size_t n_val = holdout_size(n_nontest, options.val_fraction);

    std::mt19937_64 fold_rng(mix_seed(options.seed, f + 1));
    std::vector<std::size_t> sizes;
    for (auto& m : nontest) {
      shuffle_in_place(std::span<std::size_t>(m), fold_rng);
      sizes.push_back(m.size());
    }
    std::vector<std::size_t> quota = proportional_quotas(sizes, n_val);
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (std::size_t j = 0; j < nontest[c].size(); ++j) {
        (j < quota[c] ? fold.val : fold.train).push_back(nontest[c][j]);
      }
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
  }
  return plan;
}

Json to_json(const SplitPlan& plan) {
  Json j;
  j["format"] = "cicle-splits";
  j["version"] = 1;
  j["seed"] = plan.seed;
  j["stratified"] = plan.stratified;
  j["stratify_task"] = plan.stratify_task ? Json(std::string(task_name(*plan.stratify_task))) : Json(nullptr);
  j["val_fraction"] = plan.val_fraction;
  j["folds"] = Json::array();
  for (const auto& f : plan.folds) {
    j["folds"].push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
  }
  return j;
}

SplitPlan split_plan_from_json(const Json& j) {
  if (j.value("format", "") != "cicle-splits" || j.value("version", 0) != 1) {
    throw SchemaError("not a version-1 cicle-splits document");
  }
  SplitPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.stratified = j.at("stratified").get<bool>();
  if (!j.at("stratify_task").is_null()) plan.stratify_task = parse_task(j.at("stratify_task").get<std::string>());
  plan.val_fraction = j.at("val_fraction").get<double>();
  for (const auto& f : j.at("folds")) {
    plan.folds.push_back({f.at("train").get<std::vector<std::size_t>>(), f.at("val").get<std::vector<std::size_t>>(),
                          f.at("test").get<std::vector<std::size_t>>()});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Support tiers

SupportTiers support_tiers(const LabelSpace& space) {
  SupportTiers tiers;
  const std::size_t m = space.size();
  const std::size_t total = space.total_support();
  if (m == 0) return tiers;

  std::vector<ClassIndex> order(m);
  std::iota(order.begin(), order.end(), ClassIndex{0});
  // Labels are stored sorted, so index order is lexicographic order.
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassIndex a, ClassIndex b) { return space.support(a) > space.support(b); });

  std::size_t head = 0;
  std::size_t cum = 0;
  while (head < m && 3 * cum < total) cum += space.support(order[head++]);

  std::size_t tail = m;
  cum = 0;
  while (tail > head && 3 * cum < total) cum += space.support(order[--tail]);

  tiers.high.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head));
  tiers.medium.assign(order.begin() + static_cast<std::ptrdiff_t>(head), order.begin() + static_cast<std::ptrdiff_t>(tail));
  tiers.low.assign(order.begin() + static_cast<std::ptrdiff_t>(tail), order.end());
  return tiers;
}

SupportTiers support_tiers(const LabeledDataset& ds, Task task) { return support_tiers(ds.label_space(task)); }

std::vector<std::set<ClassIndex>> filter_well_supported(const SplitPlan& plan, const LabeledDataset& ds, Task task,
                                                        std::size_t min_train) {
  const auto labels = ds.labels(task);
  const std::size_t m = ds.label_space(task).size();
  std::vector<std::set<ClassIndex>> out;
  for (const auto& fold : plan.folds) {
    std::vector<std::size_t> train_count(m, 0);
    std::vector<std::size_t> test_count(m, 0);
    for (std::size_t i : fold.train) ++train_count[labels.at(i)];
    for (std::size_t i : fold.val) ++train_count[labels.at(i)];
    for (std::size_t i : fold.test) ++test_count[labels.at(i)];
    std::set<ClassIndex> keep;
    for (ClassIndex c = 0; c < m; ++c) {
      if (train_count[c] >= min_train && test_count[c] >= 1) keep.insert(c);
    }
    out.push_back(std::move(keep));
  }
  return out;
}

}  // namespace cicle
