// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion.
//
//   acceptance            desk-scale criteria (synthetic data and fixtures)
//   acceptance --dataset  criteria that need the published incidents CSV,
//                         read from $CICLE_DATASET; exits 77 when unset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "cicle/classify.hpp"
#include "cicle/conformal.hpp"
#include "cicle/eval.hpp"
#include "cicle/experiment.hpp"
#include "cicle/llm.hpp"
#include "cicle/prompt.hpp"
#include "cicle/random.hpp"
#include "cicle/text.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace cicle;

namespace {

struct Check {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int g_failures = 0;

void run(const std::string& id, const std::string& name, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!c.pass) ++g_failures;
  std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "):" << c.detail.str() << " ["
            << std::fixed << std::setprecision(2) << secs << " s]" << std::endl;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// Two-class calibration fixture with distinct known scores.
void ladder(std::size_t n, std::uint64_t seed, std::vector<ClassDistribution>& probs, std::vector<ClassIndex>& labels,
            std::vector<double>& sorted_scores) {
  std::vector<double> p_true(n);
  for (std::size_t i = 0; i < n; ++i) p_true[i] = 1.0 - static_cast<double>(i + 1) / static_cast<double>(2 * n + 1);
  std::mt19937_64 rng(seed);
  shuffle_in_place(std::span<double>(p_true), rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<ClassIndex>(i % 2);
    std::vector<double> p(2);
    p[y] = p_true[i];
    p[1 - y] = 1.0 - p_true[i];
    probs.push_back(ClassDistribution{p});
    labels.push_back(y);
    sorted_scores.push_back(1.0 - p_true[i]);
  }
  std::sort(sorted_scores.begin(), sorted_scores.end());
}

// ---------------------------------------------------------------- desk

void criterion_coverage(Check& c) {
  auto train = cicle::testing::gaussian_task(1, 600);
  auto calib = cicle::testing::gaussian_task(2, 500);
  auto test = cicle::testing::gaussian_task(3, 2000);
  auto model = train_logreg_ovr(train.X, train.y, TrainConfig{}, 3, train.dim);
  std::vector<ClassDistribution> cp, tp;
  for (const auto& x : calib.X) cp.push_back(predict_proba(model, x));
  for (const auto& x : test.X) tp.push_back(predict_proba(model, x));
  auto cal = calibrate(cp, calib.y, 0.1);
  const double cov = empirical_coverage(cal, tp, test.y);
  double size = 0;
  for (const auto& p : tp) size += static_cast<double>(predict_set(cal, p).size());
  c.detail << " coverage " << fmt(cov) << " (N_cal 500, N_test 2000, alpha 0.1), mean set size "
           << fmt(size / static_cast<double>(tp.size()), 3);
  c.require(cov >= 0.88 && cov <= 0.94, "coverage in [0.88, 0.94]");
}

void criterion_quantile(Check& c) {
  {
    std::vector<ClassDistribution> p;
    std::vector<ClassIndex> y;
    std::vector<double> s;
    ladder(19, 1, p, y, s);
    auto cal = calibrate(p, y, 0.05);
    c.detail << " N=19/alpha=0.05 rank " << cal.rank;
    c.require(cal.q_hat == s.back(), "q_hat is the maximum score");
  }
  {
    std::vector<ClassDistribution> p;
    std::vector<ClassIndex> y;
    std::vector<double> s;
    ladder(99, 2, p, y, s);
    auto cal = calibrate(p, y, 0.1);
    c.detail << ", N=99/alpha=0.1 rank " << cal.rank;
    c.require(cal.q_hat == s[89], "q_hat is the 90th smallest score");
  }
}

void criterion_bounds_fixture(Check& c) {
  auto ds = cicle::testing::synthetic_recalls(300, 11);
  SplitOptions so;
  so.stratify_task = Task::HazardCategory;
  auto plan = make_cv_splits(ds, so);
  PromptRunOptions opt;
  opt.strategy = Strategy::All;
  OracleBackend perfect(OracleKind::Perfect, 42);
  auto upper = run_prompting(ds, plan, opt, perfect);
  c.detail << " MAX-ALL macro-F1 mean " << fmt(upper.summary.all.macro_f1.mean) << " max "
           << fmt(upper.summary.all.macro_f1.max);
  for (const auto& f : upper.folds) c.require(f.scores.all.macro_f1 == 1.0, "MAX-ALL macro-F1 = 1 on every fold");

  // MIN bound: the exact expected accuracy of a uniformly random shot label,
  // enumerated over the shots of every prompt, against 1/M.
  const std::size_t m = ds.label_space(Task::HazardCategory).size();
  double expected = 0;
  std::size_t n = 0;
  for (const auto& fold : plan.folds) {
    FoldData d = prepare_fold(ds, fold, Task::HazardCategory, VectorizerMode::TfIdf);
    std::vector<std::string> texts;
    for (std::size_t i : fold.train) texts.push_back(ds.record(i).title);
    ExemplarPool pool(texts, d.train_X, d.train_y, ds.label_space(Task::HazardCategory));
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
      auto spec = build_all(pool, Query{ds.record(fold.test[i]).title, d.test_X[i]}, "d");
      std::size_t hit = 0;
      for (const auto& s : spec.shots) hit += s.cls == d.test_y[i] ? 1 : 0;
      expected += static_cast<double>(hit) / static_cast<double>(spec.shots.size());
      ++n;
    }
  }
  expected /= static_cast<double>(n);
  OracleBackend random(OracleKind::RandomShot, 42);
  auto lower = run_prompting(ds, plan, opt, random);
  double acc = 0;
  std::size_t total = 0;
  for (const auto& f : lower.folds) {
    acc += *f.accuracy * static_cast<double>(f.confusion.total());
    total += f.confusion.total();
  }
  acc /= static_cast<double>(total);
  const double floor = 1.0 / static_cast<double>(m);
  const double tol = 4.0 * std::sqrt(expected * (1 - expected) / static_cast<double>(total));
  c.detail << "; MIN-ALL expected accuracy " << fmt(expected) << ", observed " << fmt(acc) << ", floor 1/" << m;
  c.require(expected >= floor - 1e-12, "expected random-shot accuracy >= 1/M");
  c.require(std::abs(acc - expected) <= tol, "observed random-shot accuracy within 4 sigma of its expectation");
}

void criterion_cicle_vs_base(Check& c) {
  std::size_t folds = 0;
  for (double alpha : {0.05, 0.2, 0.4}) {
    for (std::uint64_t seed : {3, 4}) {
      auto ds = cicle::testing::synthetic_recalls(300, seed);
      SplitOptions so;
      so.seed = seed;
      auto plan = make_cv_splits(ds, so);
      PromptRunOptions opt;
      opt.strategy = Strategy::Cicle;
      opt.alpha = alpha;
      opt.task = Task::Hazard;
      OracleBackend perfect(OracleKind::Perfect, seed);
      auto r = run_prompting(ds, plan, opt, perfect);
      for (const auto& f : r.folds) {
        ++folds;
        c.require(*f.accuracy == *f.set_coverage, "CICLe accuracy equals set coverage exactly");
        c.require(*f.set_coverage >= *f.base_accuracy, "set coverage >= base top-1 accuracy");
      }
    }
  }
  // Random distributions with hand-set thresholds, outside the pipeline.
  std::mt19937_64 rng(5);
  std::size_t fixtures = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = 2 + uniform_index(rng, 6);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < m; ++k) names.push_back("class " + std::to_string(k));
    auto space = LabelSpace::from_labels(names);
    std::vector<std::string> texts;
    std::vector<FeatureVector> vecs;
    std::vector<ClassIndex> ys;
    for (std::size_t i = 0; i < 2 * m; ++i) {
      texts.push_back("t" + std::to_string(i));
      vecs.push_back(FeatureVector::from_weights({{static_cast<std::uint32_t>(i % 5), 1.0}}));
      ys.push_back(static_cast<ClassIndex>(i % m));
    }
    ExemplarPool pool(texts, vecs, ys, space);
    CalibrationModel cal;
    cal.q_hat = uniform_unit(rng);
    std::vector<PromptOutcome> outcomes;
    std::vector<std::string> gold;
    std::vector<std::uint64_t> ids;
    std::size_t covered = 0, top1 = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      std::vector<double> p(m);
      double s = 0;
      for (auto& v : p) s += v = std::pow(uniform_unit(rng), 2.0);
      for (auto& v : p) v /= s;
      ClassDistribution d{p};
      const auto y = static_cast<ClassIndex>(uniform_index(rng, m));
      outcomes.push_back(build_cicle(cal, d, pool, Query{"q", vecs[i % vecs.size()]}, "d"));
      covered += outcomes.back().set->contains(y) ? 1 : 0;
      top1 += d.argmax() == y ? 1 : 0;
      gold.push_back(space.label(y));
      ids.push_back(i);
    }
    OracleBackend perfect(OracleKind::Perfect, 9);
    auto dec = classify_batch(outcomes, perfect, CompletionRequest{}, gold, ids, LabelMatcher(space), 2);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dec.size(); ++i) correct += dec[i].prediction && space.label(*dec[i].prediction) == gold[i];
    c.require(correct == covered, "fixture: correct == covered");
    c.require(covered >= top1, "fixture: covered >= top-1 hits");
    ++fixtures;
  }
  c.detail << " " << folds << " pipeline folds and " << fixtures << " fixtures: accuracy == coverage >= base top-1";
}

void criterion_numerics(Check& c, const std::filesystem::path& data_dir) {
  // Logistic gradient against central differences.
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const std::size_t dim = 8;
    std::vector<FeatureVector> X;
    std::vector<int> t;
    for (int i = 0; i < 6; ++i) {
      std::vector<FeatureEntry> e;
      for (std::uint32_t v = 0; v < dim; ++v) {
        if (uniform_unit(rng) < 0.5) e.push_back({v, 0.1 + uniform_unit(rng)});
      }
      e.push_back({static_cast<std::uint32_t>(uniform_index(rng, dim)), 0.5});
      X.push_back(FeatureVector::from_weights(std::move(e)));
      t.push_back(uniform_unit(rng) < 0.5 ? 1 : -1);
    }
    BinaryProblem bp{X, t, dim};
    std::vector<double> w(dim);
    for (auto& x : w) x = 2 * uniform_unit(rng) - 1;
    double b = 2 * uniform_unit(rng) - 1;
    TrainConfig cfg;
    cfg.C = 0.5 + uniform_unit(rng);
    std::vector<double> g(dim + 1);
    logistic_smooth_gradient(bp, w, b, cfg, g);
    const double h = 1e-5;
    for (std::size_t v = 0; v <= dim; ++v) {
      auto wp = w, wm = w;
      double bpl = b, bm = b;
      if (v < dim) {
        wp[v] += h;
        wm[v] -= h;
      } else {
        bpl += h;
        bm -= h;
      }
      const double fd =
          (logistic_smooth_objective(bp, wp, bpl, cfg) - logistic_smooth_objective(bp, wm, bm, cfg)) / (2 * h);
      worst = std::max(worst, std::abs(g[v] - fd) / std::max({std::abs(g[v]), std::abs(fd), 1e-3}));
    }
  }
  c.detail << " gradient max rel. error " << std::scientific << std::setprecision(2) << worst << std::fixed;
  c.require(worst < 1e-4, "gradient relative error < 1e-4");

  // KNN against an exhaustive scan.
  std::mt19937_64 rng(77);
  std::size_t knn_bad = 0, instances = 0;
  for (int inst = 0; inst < 300; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 50);
    const std::size_t m = 1 + uniform_index(rng, 4);
    std::vector<FeatureVector> X;
    std::vector<ClassIndex> y;
    auto vec = [&] {
      std::vector<FeatureEntry> e;
      for (std::uint32_t v = 0; v < 6; ++v) {
        if (uniform_unit(rng) < 0.4) e.push_back({v, 0.05 + uniform_unit(rng)});
      }
      return FeatureVector::from_weights(std::move(e));
    };
    for (std::size_t i = 0; i < n; ++i) {
      X.push_back(uniform_index(rng, 3) == 0 && i > 0 ? X[uniform_index(rng, i)] : vec());
      y.push_back(static_cast<ClassIndex>(uniform_index(rng, m)));
    }
    auto q = vec();
    const std::size_t k = 1 + uniform_index(rng, n);
    auto res = knn_predict(X, y, q, k, m);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (const auto& a : X[i].entries()) {
        for (const auto& bq : q.entries()) {
          if (a.index == bq.index) s += a.weight * bq.weight;
        }
      }
      all.push_back({s, i});
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::size_t> votes(m, 0);
    bool same = res.neighbors.size() == k;
    for (std::size_t j = 0; same && j < k; ++j) {
      same = res.neighbors[j].index == all[j].second;
      ++votes[y[all[j].second]];
    }
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    for (std::size_t j = 0; same && j < k; ++j) {
      if (votes[y[all[j].second]] == top) {
        same = res.predicted == y[all[j].second];
        break;
      }
    }
    knn_bad += same ? 0 : 1;
    ++instances;
  }
  c.detail << "; KNN " << instances - knn_bad << "/" << instances << " instances equal the exhaustive scan";
  c.require(knn_bad == 0, "KNN equals brute force");

  // Porter stemmer against the reference vocabulary.
  std::ifstream in(data_dir / "porter_vocabulary.tsv");
  c.require(static_cast<bool>(in), "reference vocabulary readable");
  std::string line;
  std::size_t words = 0, mismatches = 0;
  while (std::getline(in, line)) {
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    ++words;
    if (porter_stem(line.substr(0, t1)) != line.substr(t1 + 1, t2 - t1 - 1)) ++mismatches;
  }
  c.detail << "; Porter " << mismatches << " mismatches over " << words << " words";
  c.require(words > 20000 && mismatches == 0, "Porter 0 mismatches");
}

void criterion_metric_identities(Check& c) {
  std::mt19937_64 rng(8);
  std::size_t fixtures = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + uniform_index(rng, 10);
    std::vector<ClassIndex> gold, pred;
    const std::size_t n = 1 + uniform_index(rng, 100);
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(static_cast<ClassIndex>(uniform_index(rng, m)));
      pred.push_back(uniform_unit(rng) < 0.5 ? gold.back() : static_cast<ClassIndex>(uniform_index(rng, m)));
    }
    auto cm = confusion(std::span<const ClassIndex>(pred), gold, m);
    std::set<ClassIndex> every;
    for (ClassIndex k = 0; k < m; ++k) every.insert(k);
    c.require(f1_report(cm, every).micro_f1 == accuracy(cm), "micro-F1 == accuracy");
    ++fixtures;
  }
  c.detail << " micro-F1 == accuracy on " << fixtures << " fixtures";

  std::vector<std::string> a = {"x", "x", "y", "y"}, b = {"x", "y", "x", "y"};
  c.require(cohen_kappa(a, a) == 1.0, "kappa of identical sequences is 1");
  c.require(std::abs(cohen_kappa(a, b)) < 1e-15, "kappa po=pe=0.5 is 0");
  std::vector<std::string> f = {"x", "x", "x", "y", "y"}, g = {"x", "x", "y", "y", "x"};
  c.require(std::abs(cohen_kappa(f, g) - (0.6 - 0.52) / 0.48) < 1e-12, "kappa hand fixture");
  double worst = 0;
  const std::vector<std::string> labels = {"a", "b", "c", "d"};
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::string> u, v;
    for (int i = 0; i < 10000; ++i) {
      u.push_back(labels[uniform_index(rng, 4)]);
      v.push_back(labels[uniform_index(rng, 4)]);
    }
    worst = std::max(worst, std::abs(cohen_kappa(u, v)));
  }
  c.detail << "; kappa fixtures exact, independent labelings max |kappa| " << fmt(worst);
  c.require(worst < 0.05, "independent labelings |kappa| < 0.05");
}

// ------------------------------------------------------------- dataset

struct DatasetRun {
  LabeledDataset ds;
  SplitPlan plan;
};

void criterion_table2(Check& c, const DatasetRun& d) {
  struct Row {
    ClassifierKind kind;
    double target, tol;
  };
  for (Row row : {Row{ClassifierKind::LogReg, 0.55, 0.05}, Row{ClassifierKind::Svm, 0.58, 0.05},
                  Row{ClassifierKind::Majority, 0.05, 0.01}}) {
    ClassicalOptions opt;
    opt.classifier = row.kind;
    auto r = run_classical(d.ds, d.plan, opt);
    const double mean = r.summary.all.macro_f1.mean;
    c.detail << " " << classifier_name(row.kind) << " macro-F1 " << fmt(mean, 3) << " (target " << fmt(row.target, 2)
             << "±" << fmt(row.tol, 2) << ")";
    c.require(std::abs(mean - row.target) <= row.tol + 1e-12, std::string(classifier_name(row.kind)) + " within tolerance");
  }
}

void criterion_table3(Check& c, const DatasetRun& d) {
  PromptRunOptions opt;
  opt.strategy = Strategy::Cicle;
  opt.alpha = 0.05;
  OracleBackend perfect(OracleKind::Perfect, 42);
  auto cicle_run = run_prompting(d.ds, d.plan, opt, perfect);
  const auto& t = cicle_run.telemetry;
  c.detail << " LLM usage " << fmt(100 * t.llm_usage, 1) << "% (60±10), classes/prompt "
           << fmt(t.mean_classes_per_prompt.value_or(0), 2) << " (2.6±0.5)";
  c.require(std::abs(t.llm_usage - 0.60) <= 0.10, "LLM usage 60% ± 10 pp");
  c.require(t.mean_classes_per_prompt && std::abs(*t.mean_classes_per_prompt - 2.6) <= 0.5, "classes/prompt 2.6 ± 0.5");

  opt.strategy = Strategy::All;
  auto all_run = run_prompting(d.ds, d.plan, opt, perfect);
  const double bytes = all_run.telemetry.mean_prompt_bytes.value_or(0);
  c.detail << ", GPT-ALL prompt " << fmt(bytes, 1) << " bytes (2301.7±15%)";
  c.require(std::abs(bytes - 2301.7) <= 0.15 * 2301.7, "GPT-ALL prompt size within 15%");
}

void criterion_bounds_dataset(Check& c, const DatasetRun& d) {
  PromptRunOptions opt;
  opt.strategy = Strategy::All;
  OracleBackend perfect(OracleKind::Perfect, 42);
  auto r = run_prompting(d.ds, d.plan, opt, perfect);
  c.detail << " MAX-ALL macro-F1 mean " << fmt(r.summary.all.macro_f1.mean) << " min over folds ";
  double lo = 1.0;
  for (const auto& f : r.folds) lo = std::min(lo, f.scores.all.macro_f1);
  c.detail << fmt(lo);
  c.require(lo == 1.0, "MAX-ALL macro-F1 = 1.00 on every fold");
}

}  // namespace

int main(int argc, char** argv) {
  const bool dataset_mode = argc > 1 && std::string(argv[1]) == "--dataset";
  if (!dataset_mode) {
    run("1", "conformal coverage", criterion_coverage);
    run("2", "quantile arithmetic", criterion_quantile);
    run("5a", "bound oracles on fixtures", criterion_bounds_fixture);
    run("6", "CICLe vs base with the perfect oracle", criterion_cicle_vs_base);
    run("7", "numerical soundness", [](Check& c) { criterion_numerics(c, CICLE_TEST_DATA); });
    run("8", "metric identities", criterion_metric_identities);
    return g_failures == 0 ? 0 : 1;
  }

  const char* path = std::getenv("CICLE_DATASET");
  if (!path || !std::filesystem::exists(path)) {
    for (const char* line : {"3 (classical classifiers, 5-fold CV)", "4 (prompt telemetry)", "5b (bound oracles on the dataset)"}) {
      std::cout << "SKIP criterion " << line << ": set CICLE_DATASET to the incidents CSV" << std::endl;
    }
    return 77;
  }
  DatasetRun d{load_csv(path), {}};
  SplitOptions so;
  so.stratify_task = Task::HazardCategory;
  d.plan = make_cv_splits(d.ds, so);
  run("3", "classical classifiers, 5-fold CV", [&](Check& c) { criterion_table2(c, d); });
  run("4", "prompt telemetry", [&](Check& c) { criterion_table3(c, d); });
  run("5b", "bound oracles on the dataset", [&](Check& c) { criterion_bounds_dataset(c, d); });
  return g_failures == 0 ? 0 : 1;
}
