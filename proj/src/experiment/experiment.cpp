#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "cicle/error.hpp"
#include "cicle/experiment.hpp"
#include "cicle/kernels.hpp"

namespace cicle {

FoldData prepare_fold(const LabeledDataset& ds, const Fold& fold, Task task, VectorizerMode mode) {
  const auto labels = ds.labels(task);
  auto gather = [&](const std::vector<std::size_t>& idx, std::vector<std::string>& texts, std::vector<ClassIndex>& y) {
    for (std::size_t i : idx) {
      texts.push_back(ds.record(i).title);
      y.push_back(labels.at(i));
    }
  };
  FoldData d;
  std::vector<std::string> train_t, val_t, test_t;
  gather(fold.train, train_t, d.train_y);
  gather(fold.val, val_t, d.val_y);
  gather(fold.test, test_t, d.test_y);
  d.vectorizer = fit_vectorizer(train_t, mode);
  d.train_X = transform_all(d.vectorizer, train_t);
  d.val_X = transform_all(d.vectorizer, val_t);
  d.test_X = transform_all(d.vectorizer, test_t);
  return d;
}

EvalSubsets eval_subsets(const LabeledDataset& ds, const SplitPlan& plan, std::size_t fold, Task task,
                         const ConfusionMatrix& cm, std::size_t min_train) {
  EvalSubsets s;
  SupportTiers tiers = support_tiers(ds, task);
  s.well_supported_only = !is_category_task(task);
  if (s.well_supported_only) {
    s.all = filter_well_supported(plan, ds, task, min_train).at(fold);
  } else {
    s.all = cm.present_classes();
  }
  for (ClassIndex c : tiers.high) {
    if (!s.well_supported_only || s.all.contains(c)) s.high.insert(c);
  }
  for (ClassIndex c : tiers.low) {
    if (!s.well_supported_only || s.all.contains(c)) s.low.insert(c);
  }
  return s;
}

FoldScores score_fold(const ConfusionMatrix& cm, const EvalSubsets& subsets, TierMode mode) {
  FoldScores f;
  f.all = f1_report(cm, subsets.all, subsets.well_supported_only ? "well-supported" : "all", TierMode::CountAsErrors);
  f.high = f1_report(cm, subsets.high, "high", mode);
  f.low = f1_report(cm, subsets.low, "low", mode);
  return f;
}

Aggregates aggregate(const std::vector<FoldScores>& folds) {
  std::vector<MetricsReport> all, high, low;
  for (const auto& f : folds) {
    all.push_back(f.all);
    high.push_back(f.high);
    low.push_back(f.low);
  }
  return {aggregate_folds(all), aggregate_folds(high), aggregate_folds(low)};
}

void for_each_fold(std::size_t n_folds, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || n_folds <= 1) {
    for (std::size_t f = 0; f < n_folds; ++f) body(f);
    return;
  }
  // Share the OpenMP budget between concurrently running folds.
  const int saved = kernels::parallel::max_threads();
  const std::size_t workers = std::min(jobs, n_folds);
  kernels::parallel::set_threads(std::max(1, saved / static_cast<int>(workers)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex guard;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next.fetch_add(1); f < n_folds; f = next.fetch_add(1)) {
          try {
            body(f);
          } catch (...) {
            std::lock_guard<std::mutex> lock(guard);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  kernels::parallel::set_threads(saved);
  if (failure) std::rethrow_exception(failure);
}

ClassicalResult run_classical(const LabeledDataset& ds, const SplitPlan& plan, const ClassicalOptions& options) {
  if (plan.folds.empty()) throw InvalidArgument("split plan has no folds");
  const std::size_t m = ds.label_space(options.task).size();
  std::vector<GridCandidate> grid = options.grid.empty() ? default_grid(options.classifier, options.seed) : options.grid;

  ClassicalResult result;
  result.folds.resize(plan.folds.size());
  for_each_fold(plan.folds.size(), options.jobs, [&](std::size_t f) {
    FoldData d = prepare_fold(ds, plan.folds[f], options.task, options.mode);
    const std::size_t dim = d.vectorizer.dimension();
    ClassicalFold out;
    out.grid = grid_search(grid, d.train_X, d.train_y, d.val_X, d.val_y, m, dim);
    auto model = FittedClassifier::fit(out.grid.best(), d.train_X, d.train_y, m, dim);
    auto pred = model.predict_all(d.test_X);
    if (model.linear()) out.model = *model.linear();
    out.vectorizer = std::move(d.vectorizer);
    out.confusion = confusion(std::span<const ClassIndex>(pred), d.test_y, m);
    auto subsets = eval_subsets(ds, plan, f, options.task, out.confusion, options.min_train);
    out.scores = score_fold(out.confusion, subsets, options.tier_mode);
    result.folds[f] = std::move(out);
  });
  std::vector<FoldScores> scores;
  for (const auto& f : result.folds) scores.push_back(f.scores);
  result.summary = aggregate(scores);
  return result;
}

std::string_view backend_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Http: return "http";
    case BackendKind::Perfect: return "perfect";
    case BackendKind::RandomShot: return "random-shot";
    case BackendKind::Scripted: return "scripted";
  }
  return "?";
}

BackendKind parse_backend(std::string_view name) {
  if (name == "http") return BackendKind::Http;
  if (name == "perfect") return BackendKind::Perfect;
  if (name == "random-shot" || name == "random") return BackendKind::RandomShot;
  if (name == "scripted") return BackendKind::Scripted;
  throw InvalidArgument("unknown backend '" + std::string(name) + "' (expected http, perfect, random-shot or scripted)");
}

PromptRunResult run_prompting(const LabeledDataset& ds, const SplitPlan& plan, const PromptRunOptions& options,
                              CompletionBackend& backend, TranscriptWriter* transcript) {
  if (plan.folds.empty()) throw InvalidArgument("split plan has no folds");
  if (options.strategy == Strategy::Cicle && !(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw InvalidArgument("alpha must lie in (0, 1)");
  }
  if ((options.strategy == Strategy::SimK || options.strategy == Strategy::MaxK) && options.k == 0) {
    throw InvalidArgument("k must be at least 1");
  }
  const Task task = options.task;
  const LabelSpace& space = ds.label_space(task);
  const std::size_t m = space.size();
  const std::string description = options.description.value_or(default_description(task));
  const bool needs_base = options.strategy == Strategy::MaxK || options.strategy == Strategy::Cicle;
  std::vector<GridCandidate> base_grid =
      options.base_grid.empty() ? default_grid(ClassifierKind::LogReg, options.seed) : options.base_grid;
  const LabelMatcher matcher(space, options.matching);

  PromptRunResult result;
  result.folds.resize(plan.folds.size());
  for_each_fold(plan.folds.size(), options.jobs, [&](std::size_t f) {
    const Fold& fold = plan.folds[f];
    FoldData d = prepare_fold(ds, fold, task, options.vectorizer_mode);
    const std::size_t dim = d.vectorizer.dimension();
    std::vector<std::string> train_texts;
    for (std::size_t i : fold.train) train_texts.push_back(ds.record(i).title);
    ExemplarPool pool(std::move(train_texts), d.train_X, d.train_y, space);

    PromptFold out;
    std::vector<ClassDistribution> test_probs;
    if (needs_base) {
      auto report = grid_search(base_grid, d.train_X, d.train_y, d.val_X, d.val_y, m, dim);
      auto base = FittedClassifier::fit(report.best(), d.train_X, d.train_y, m, dim);
      if (!base.has_probabilities()) throw InvalidArgument("the base classifier must produce probabilities");
      test_probs = base.predict_proba_all(d.test_X);
      std::size_t top1 = 0;
      for (std::size_t i = 0; i < test_probs.size(); ++i) top1 += test_probs[i].argmax() == d.test_y[i] ? 1 : 0;
      out.base_accuracy = static_cast<double>(top1) / static_cast<double>(std::max<std::size_t>(1, test_probs.size()));
      if (options.strategy == Strategy::Cicle) {
        auto val_probs = base.predict_proba_all(d.val_X);
        std::string fp = base.linear() ? model_fingerprint(*base.linear()) : report.best().describe();
        out.calibration = calibrate(val_probs, d.val_y, options.alpha, fp);
        out.set_coverage = empirical_coverage(*out.calibration, test_probs, d.test_y);
      }
    }

    std::vector<PromptOutcome> outcomes(fold.test.size());
    kernels::parallel::for_each(fold.test.size(), [&](std::size_t i) {
      Query q{ds.record(fold.test[i]).title, d.test_X[i]};
      switch (options.strategy) {
        case Strategy::All: outcomes[i].spec = build_all(pool, q, description); break;
        case Strategy::SimK: outcomes[i].spec = build_sim_k(pool, q, options.k, description); break;
        case Strategy::MaxK: outcomes[i].spec = build_max_k(test_probs[i], pool, q, options.k, description); break;
        case Strategy::Cicle: outcomes[i] = build_cicle(*out.calibration, test_probs[i], pool, q, description); break;
      }
    });

    std::vector<std::string> gold_labels;
    std::vector<std::uint64_t> ids;
    for (std::size_t i : fold.test) {
      gold_labels.push_back(ds.record(i).label(task));
      ids.push_back(i);
    }
    auto decisions =
        classify_batch(outcomes, backend, options.request, gold_labels, ids, matcher, options.concurrency, transcript);

    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      preds.push_back(decisions[i].prediction);
      out.telemetry.push_back(decisions[i].telemetry);
      Json rec = telemetry_json(outcomes[i], space);
      rec["sample"] = fold.test[i];
      rec["gold"] = gold_labels[i];
      rec["prediction"] = decisions[i].prediction ? Json(space.label(*decisions[i].prediction)) : Json(nullptr);
      out.prompt_records.push_back(std::move(rec));
    }
    out.confusion = confusion(std::span<const Prediction>(preds), d.test_y, m);
    out.accuracy = accuracy(out.confusion);
    out.telemetry_summary = telemetry_report(out.telemetry);
    auto subsets = eval_subsets(ds, plan, f, task, out.confusion, options.min_train);
    out.scores = score_fold(out.confusion, subsets, options.tier_mode);
    result.folds[f] = std::move(out);
  });

  std::vector<FoldScores> scores;
  std::vector<SampleTelemetry> all_telemetry;
  for (const auto& f : result.folds) {
    scores.push_back(f.scores);
    all_telemetry.insert(all_telemetry.end(), f.telemetry.begin(), f.telemetry.end());
  }
  result.summary = aggregate(scores);
  result.telemetry = telemetry_report(all_telemetry);
  return result;
}

}  // namespace cicle
