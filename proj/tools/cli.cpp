#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "cicle/classify.hpp"
#include "cicle/conformal.hpp"
#include "cicle/corpus.hpp"
#include "cicle/error.hpp"
#include "cicle/eval.hpp"
#include "cicle/experiment.hpp"
#include "cicle/llm.hpp"
#include "cicle/prompt.hpp"
#include "cicle/text.hpp"

namespace fs = std::filesystem;

namespace cicle::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

// Bad flags or config values; reported with exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Settings {
  std::string dataset;
  std::string task = "hazard-category";
  std::string out = "out";
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::size_t k_folds = 5;
  double val_fraction = 0.1;
  std::string stratify = "auto";
  std::string splits;
  std::string vectorizer = "tfidf";
  std::string classifier = "tfidf-lr";
  std::vector<double> C;
  std::vector<std::string> regularization;
  std::vector<std::size_t> knn_k;
  std::string tier_mode = "errors";
  std::size_t min_train = 4;
  // prompting
  std::string strategy = "cicle";
  std::size_t k = 5;
  double alpha = 0.05;
  std::string backend = "perfect";
  std::string script;
  std::string endpoint;
  std::string model;
  int max_tokens = 20;
  int timeout_ms = 30000;
  int max_retries = 5;
  std::size_t concurrency = 4;
  bool strict_labels = false;
  std::string description;
  // eval
  std::string predictions;
};

// Settings turned into library types.
struct Resolved {
  Task task = Task::HazardCategory;
  VectorizerMode mode = VectorizerMode::TfIdf;
  ClassifierKind classifier = ClassifierKind::LogReg;
  std::vector<GridCandidate> grid;
  TierMode tier_mode = TierMode::CountAsErrors;
  std::optional<Task> stratify;
  Strategy strategy = Strategy::Cicle;
  BackendKind backend = BackendKind::Perfect;
};

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string fnv_hex(std::string_view s) { return prompt_hash(s); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("'" + path.string() + "' is not valid JSON");
  return j;
}

class Runner {
 public:
  Runner(const Settings& s, const std::string& command, const std::string& effective, std::ostream& out)
      : s_(s), command_(command), effective_(effective), out_(out) {}

  int run() {
    resolve();
    if (command_ == "ingest") return ingest();
    if (command_ == "split") return split();
    if (command_ == "train") return train();
    if (command_ == "grid-search") return grid_search_cmd();
    if (command_ == "calibrate") return calibrate_cmd();
    if (command_ == "prompt-run") return prompt_run();
    if (command_ == "eval") return eval_cmd();
    if (command_ == "spans") return spans_cmd();
    if (command_ == "report") return report_cmd();
    throw UsageError("unknown command '" + command_ + "'");
  }

 private:
  void resolve() {
    as_usage([&] {
      r_.task = parse_task(s_.task);
      std::string cls = s_.classifier;
      r_.mode = parse_mode(s_.vectorizer);
      if (cls.starts_with("bow-")) r_.mode = VectorizerMode::Bow;
      if (cls.starts_with("tfidf-") || cls.starts_with("tf-idf-")) r_.mode = VectorizerMode::TfIdf;
      r_.classifier = parse_classifier(cls);
      if (s_.tier_mode == "errors") {
        r_.tier_mode = TierMode::CountAsErrors;
      } else if (s_.tier_mode == "drop") {
        r_.tier_mode = TierMode::DropOutside;
      } else {
        throw UsageError("--tier-mode must be 'errors' or 'drop'");
      }
      if (s_.stratify == "auto") {
        if (is_category_task(r_.task)) r_.stratify = r_.task;
      } else if (s_.stratify != "none") {
        r_.stratify = parse_task(s_.stratify);
      }
      r_.strategy = parse_strategy(s_.strategy);
      r_.backend = parse_backend(s_.backend);
      r_.grid = build_grid(r_.classifier);
      if (command_ == "prompt-run" || command_ == "calibrate") {
        if (!(s_.alpha > 0.0 && s_.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
        if (s_.k < 1) throw UsageError("--k must be at least 1");
      }
      if (s_.jobs < 1) throw UsageError("--jobs must be at least 1");
      return 0;
    });
  }

  std::vector<GridCandidate> build_grid(ClassifierKind kind) const {
    bool fixed = !s_.C.empty() || !s_.regularization.empty() || !s_.knn_k.empty();
    if (!fixed) return default_grid(kind, s_.seed);
    std::vector<GridCandidate> grid;
    TrainConfig base;
    base.seed = s_.seed;
    std::vector<double> cs = s_.C.empty() ? std::vector<double>{1.0} : s_.C;
    std::vector<std::string> regs = s_.regularization.empty() ? std::vector<std::string>{"l2"} : s_.regularization;
    for (const auto& reg : regs) {
      if (reg != "l1" && reg != "l2") throw UsageError("--regularization must be l1 or l2");
    }
    switch (kind) {
      case ClassifierKind::Knn:
        for (std::size_t k : s_.knn_k.empty() ? std::vector<std::size_t>{4} : s_.knn_k) grid.push_back({kind, base, k});
        break;
      case ClassifierKind::LogReg:
        for (const auto& reg : regs) {
          for (double c : cs) {
            TrainConfig cfg = base;
            cfg.regularization = reg == "l1" ? Regularization::L1 : Regularization::L2;
            cfg.C = c;
            grid.push_back({kind, cfg, 0});
          }
        }
        break;
      case ClassifierKind::Svm:
        for (double c : cs) {
          TrainConfig cfg = default_grid(ClassifierKind::Svm, s_.seed).front().config;
          cfg.C = c;
          grid.push_back({kind, cfg, 0});
        }
        break;
      default: return default_grid(kind, s_.seed);
    }
    for (const auto& g : grid) {
      if (!(g.config.C > 0.0)) throw UsageError("--C values must be positive");
    }
    return grid;
  }

  const LabeledDataset& dataset() {
    if (!ds_) {
      if (s_.dataset.empty()) throw UsageError("--dataset is required for '" + command_ + "'");
      if (!fs::exists(s_.dataset)) throw UsageError("--dataset: file '" + s_.dataset + "' does not exist");
      ds_ = load_csv(s_.dataset);
      if (ds_->empty()) throw Error("dataset '" + s_.dataset + "' has no records");
    }
    return *ds_;
  }

  SplitPlan plan() {
    if (!s_.splits.empty()) return split_plan_from_json(read_json(s_.splits));
    SplitOptions o;
    o.k = s_.k_folds;
    o.val_fraction = s_.val_fraction;
    o.stratify_task = r_.stratify;
    o.seed = s_.seed;
    return as_usage([&] { return make_cv_splits(dataset(), o); });
  }

  fs::path dir(const std::string& sub) const { return fs::path(s_.out) / sub; }

  void manifest(const fs::path& where) {
    Json m{{"tool", "cicle"},
           {"version", kVersion},
           {"command", command_},
           {"config", effective_},
           {"config_hash", fnv_hex(effective_)},
           {"seed", s_.seed}};
    write_json(where / "manifest.json", m);
  }

  std::string classifier_tag() const {
    return std::string(mode_name(r_.mode)) + "-" + std::string(classifier_name(r_.classifier));
  }

  static Json scores_json(const FoldScores& s, const LabelSpace& space) {
    return {{"all", to_json(s.all, &space)}, {"high", to_json(s.high, &space)}, {"low", to_json(s.low, &space)}};
  }

  static Json summary_json(const Aggregates& a) {
    return {{"all", to_json(a.all)}, {"high", to_json(a.high)}, {"low", to_json(a.low)}};
  }

  int ingest() {
    const auto& ds = dataset();
    Json j{{"records", ds.size()}};
    Json tasks = Json::object();
    for (Task t : kAllTasks) {
      const auto& space = ds.label_space(t);
      auto tiers = support_tiers(ds, t);
      auto tier_json = [&](const std::vector<ClassIndex>& tier) {
        std::size_t n = 0;
        for (ClassIndex c : tier) n += space.support(c);
        return Json{{"classes", tier.size()}, {"samples", n}};
      };
      tasks[std::string(task_name(t))] = {{"classes", space.size()},
                                          {"high", tier_json(tiers.high)},
                                          {"medium", tier_json(tiers.medium)},
                                          {"low", tier_json(tiers.low)}};
      out_ << task_name(t) << ": " << space.size() << " classes, high " << tiers.high.size() << ", low "
           << tiers.low.size() << "\n";
    }
    j["tasks"] = std::move(tasks);
    out_ << "records: " << ds.size() << "\n";
    write_json(dir("ingest") / "summary.json", j);
    manifest(dir("ingest"));
    return 0;
  }

  int split() {
    SplitPlan p = plan();
    write_json(fs::path(s_.out) / "splits.json", to_json(p));
    for (std::size_t f = 0; f < p.folds.size(); ++f) {
      out_ << "fold " << f << ": train " << p.folds[f].train.size() << ", val " << p.folds[f].val.size() << ", test "
           << p.folds[f].test.size() << "\n";
    }
    manifest(fs::path(s_.out));
    return 0;
  }

  int train() {
    const auto& ds = dataset();
    ClassicalOptions o;
    o.task = r_.task;
    o.mode = r_.mode;
    o.classifier = r_.classifier;
    o.grid = r_.grid;
    o.tier_mode = r_.tier_mode;
    o.min_train = s_.min_train;
    o.seed = s_.seed;
    o.jobs = s_.jobs;
    SplitPlan p = plan();
    ClassicalResult res = run_classical(ds, p, o);

    const auto& space = ds.label_space(r_.task);
    fs::path base = dir("train") / std::string(task_name(r_.task)) / classifier_tag();
    Json folds = Json::array();
    for (std::size_t f = 0; f < res.folds.size(); ++f) {
      const auto& fold = res.folds[f];
      fs::path fd = base / ("fold-" + std::to_string(f));
      write_json(fd / "vectorizer.json", to_json(fold.vectorizer));
      if (fold.model) write_json(fd / "model.json", to_json(*fold.model));
      write_json(fd / "confusion.json", to_json(fold.confusion));
      write_json(fd / "grid.json", to_json(fold.grid));
      Json fj = scores_json(fold.scores, space);
      fj["grid"] = to_json(fold.grid);
      folds.push_back(std::move(fj));
      out_ << "fold " << f << ": " << fold.grid.best().describe() << " macro-F1 " << fold.scores.all.macro_f1 << "\n";
    }
    Json report{{"task", std::string(task_name(r_.task))},
                {"classifier", classifier_tag()},
                {"tier_mode", s_.tier_mode},
                {"folds", std::move(folds)},
                {"summary", summary_json(res.summary)}};
    write_json(base / "report.json", report);
    std::vector<std::pair<std::string, AggregateReport>> rows{{classifier_tag(), res.summary.all},
                                                               {classifier_tag(), res.summary.high},
                                                               {classifier_tag(), res.summary.low}};
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    write_text(base / "metrics.csv", csv.str());
    out_ << "macro-F1 mean " << res.summary.all.macro_f1.mean << " max " << res.summary.all.macro_f1.max << "\n";
    manifest(base);
    return 0;
  }

  int grid_search_cmd() {
    const auto& ds = dataset();
    SplitPlan p = plan();
    const std::size_t m = ds.label_space(r_.task).size();
    Json folds = Json::array();
    std::vector<GridSearchReport> reports(p.folds.size());
    for_each_fold(p.folds.size(), s_.jobs, [&](std::size_t f) {
      FoldData d = prepare_fold(ds, p.folds[f], r_.task, r_.mode);
      reports[f] = grid_search(r_.grid, d.train_X, d.train_y, d.val_X, d.val_y, m, d.vectorizer.dimension());
    });
    for (std::size_t f = 0; f < reports.size(); ++f) {
      folds.push_back(to_json(reports[f]));
      out_ << "fold " << f << ": chose " << reports[f].best().describe() << "\n";
    }
    fs::path base = dir("grid-search") / std::string(task_name(r_.task)) / classifier_tag();
    write_json(base / "grid.json", {{"task", std::string(task_name(r_.task))}, {"folds", std::move(folds)}});
    manifest(base);
    return 0;
  }

  int calibrate_cmd() {
    const auto& ds = dataset();
    SplitPlan p = plan();
    const std::size_t m = ds.label_space(r_.task).size();
    std::vector<Json> folds(p.folds.size());
    std::vector<GridCandidate> grid = r_.classifier == ClassifierKind::LogReg || r_.classifier == ClassifierKind::Knn
                                          ? r_.grid
                                          : default_grid(ClassifierKind::LogReg, s_.seed);
    for_each_fold(p.folds.size(), s_.jobs, [&](std::size_t f) {
      FoldData d = prepare_fold(ds, p.folds[f], r_.task, r_.mode);
      auto report = grid_search(grid, d.train_X, d.train_y, d.val_X, d.val_y, m, d.vectorizer.dimension());
      auto base = FittedClassifier::fit(report.best(), d.train_X, d.train_y, m, d.vectorizer.dimension());
      auto val_probs = base.predict_proba_all(d.val_X);
      auto test_probs = base.predict_proba_all(d.test_X);
      std::string fp = base.linear() ? model_fingerprint(*base.linear()) : report.best().describe();
      auto cal = calibrate(val_probs, d.val_y, s_.alpha, fp);
      double size = 0.0;
      for (const auto& pr : test_probs) size += static_cast<double>(predict_set(cal, pr).size());
      Json j = to_json(cal);
      j["test_coverage"] = empirical_coverage(cal, test_probs, d.test_y);
      j["mean_set_size"] = test_probs.empty() ? 0.0 : size / static_cast<double>(test_probs.size());
      j["base"] = report.best().describe();
      folds[f] = std::move(j);
    });
    for (std::size_t f = 0; f < folds.size(); ++f) {
      out_ << "fold " << f << ": q_hat " << folds[f]["q_hat"].get<double>() << ", coverage "
           << folds[f]["test_coverage"].get<double>() << "\n";
    }
    fs::path base = dir("calibrate") / std::string(task_name(r_.task));
    write_json(base / "calibration.json", {{"alpha", s_.alpha}, {"folds", folds}});
    manifest(base);
    return 0;
  }

  std::unique_ptr<CompletionBackend> make_backend() {
    switch (r_.backend) {
      case BackendKind::Perfect: return std::make_unique<OracleBackend>(OracleKind::Perfect, s_.seed);
      case BackendKind::RandomShot: return std::make_unique<OracleBackend>(OracleKind::RandomShot, s_.seed);
      case BackendKind::Scripted: {
        if (s_.script.empty()) throw UsageError("--script is required for the scripted backend");
        Json j = read_json(s_.script);
        if (!j.is_object()) throw UsageError("--script must hold a JSON object of prompt hash -> reply");
        std::unordered_map<std::string, std::string> replies;
        for (auto& [k, v] : j.items()) replies.emplace(k, v.get<std::string>());
        return std::make_unique<ScriptedBackend>(std::move(replies));
      }
      case BackendKind::Http: {
        HttpConfig cfg;
        cfg.url = s_.endpoint;
        if (const char* v = std::getenv("CICLE_ENDPOINT_URL"); v && cfg.url.empty()) cfg.url = v;
        if (const char* v = std::getenv("CICLE_API_KEY")) cfg.api_key = v;
        cfg.model = s_.model;
        if (const char* v = std::getenv("CICLE_MODEL"); v && cfg.model.empty()) cfg.model = v;
        if (cfg.url.empty()) throw UsageError("--endpoint (or CICLE_ENDPOINT_URL) is required for the http backend");
        cfg.max_retries = s_.max_retries;
        cfg.max_in_flight = std::max<std::size_t>(1, s_.concurrency);
        cfg.jitter_seed = s_.seed;
        return as_usage([&] { return std::make_unique<HttpBackend>(cfg); });
      }
    }
    throw UsageError("unknown backend");
  }

  std::string strategy_tag() const {
    switch (r_.strategy) {
      case Strategy::All: return "all";
      case Strategy::SimK: return "sim-" + std::to_string(s_.k);
      case Strategy::MaxK: return "max-" + std::to_string(s_.k);
      case Strategy::Cicle: {
        std::ostringstream a;
        a << "cicle-" << s_.alpha;
        return a.str();
      }
    }
    return "?";
  }

  int prompt_run() {
    const auto& ds = dataset();
    auto backend = make_backend();
    PromptRunOptions o;
    o.task = r_.task;
    o.strategy = r_.strategy;
    o.vectorizer_mode = r_.mode;
    o.k = s_.k;
    o.alpha = s_.alpha;
    if (!s_.description.empty()) o.description = s_.description;
    if (r_.classifier == ClassifierKind::LogReg || r_.classifier == ClassifierKind::Knn) o.base_grid = r_.grid;
    o.tier_mode = r_.tier_mode;
    o.matching = s_.strict_labels ? LabelMatching::Strict : LabelMatching::Lenient;
    o.request.max_tokens = s_.max_tokens;
    o.request.model = s_.model;
    o.request.timeout = std::chrono::milliseconds(s_.timeout_ms);
    o.concurrency = s_.concurrency;
    o.min_train = s_.min_train;
    o.seed = s_.seed;
    o.jobs = s_.jobs;
    SplitPlan p = plan();

    fs::path base = dir("prompt-run") / std::string(task_name(r_.task)) / (strategy_tag() + "-" + s_.backend);
    fs::create_directories(base);
    std::ofstream transcript_file(base / "transcript.jsonl", std::ios::binary);
    TranscriptWriter transcript(transcript_file);
    PromptRunResult res = run_prompting(ds, p, o, *backend, &transcript);

    const auto& space = ds.label_space(r_.task);
    std::string prompts;
    Json folds = Json::array();
    for (std::size_t f = 0; f < res.folds.size(); ++f) {
      const auto& fold = res.folds[f];
      for (const auto& rec : fold.prompt_records) {
        Json line = rec;
        line["fold"] = f;
        prompts += line.dump() + "\n";
      }
      Json fj = scores_json(fold.scores, space);
      fj["telemetry"] = to_json(fold.telemetry_summary);
      if (fold.calibration) fj["calibration"] = to_json(*fold.calibration);
      if (fold.set_coverage) fj["set_coverage"] = *fold.set_coverage;
      if (fold.base_accuracy) fj["base_accuracy"] = *fold.base_accuracy;
      if (fold.accuracy) fj["accuracy"] = *fold.accuracy;
      folds.push_back(std::move(fj));
      out_ << "fold " << f << ": macro-F1 " << fold.scores.all.macro_f1 << ", llm usage "
           << fold.telemetry_summary.llm_usage << ", bypassed "
           << (fold.telemetry_summary.n_samples - fold.telemetry_summary.n_prompted) << "\n";
    }
    write_text(base / "prompts.jsonl", prompts);
    Json report{{"task", std::string(task_name(r_.task))},
                {"strategy", strategy_tag()},
                {"backend", s_.backend},
                {"folds", std::move(folds)},
                {"summary", summary_json(res.summary)},
                {"telemetry", to_json(res.telemetry)}};
    write_json(base / "report.json", report);
    std::vector<std::pair<std::string, TelemetryReport>> rows{{strategy_tag(), res.telemetry}};
    std::ostringstream csv;
    write_telemetry_csv(csv, rows);
    write_text(base / "telemetry.csv", csv.str());
    out_ << "llm usage " << res.telemetry.llm_usage << ", bypassed "
         << (res.telemetry.n_samples - res.telemetry.n_prompted) << " of " << res.telemetry.n_samples << "\n";
    manifest(base);
    return 0;
  }

  int eval_cmd() {
    if (s_.predictions.empty()) throw UsageError("--predictions is required for 'eval'");
    std::ifstream in(s_.predictions, std::ios::binary);
    if (!in) throw UsageError("--predictions: cannot open '" + s_.predictions + "'");
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      Json j = Json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("gold") || !j["gold"].is_string()) {
        throw SchemaError("predictions line " + std::to_string(n) + ": expected an object with a 'gold' label");
      }
      gold.push_back(j["gold"].get<std::string>());
      pred.push_back(j.contains("prediction") && j["prediction"].is_string()
                         ? std::optional<std::string>(j["prediction"].get<std::string>())
                         : std::nullopt);
    }
    if (gold.empty()) throw Error("no predictions in '" + s_.predictions + "'");

    LabelSpace space;
    std::optional<SupportTiers> tiers;
    if (!s_.dataset.empty()) {
      space = dataset().label_space(r_.task);
      tiers = support_tiers(space);
    } else {
      std::vector<std::string> observed = gold;
      for (const auto& p : pred) {
        if (p) observed.push_back(*p);
      }
      space = LabelSpace::from_labels(observed);
    }
    ConfusionMatrix cm(space.size());
    std::vector<std::string> pred_text;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      auto g = space.find(gold[i]);
      if (!g) throw SchemaError("gold label '" + gold[i] + "' is not in the label space");
      Prediction p;
      if (pred[i]) p = space.find(*pred[i]);
      cm.add(*g, p);
      pred_text.push_back(pred[i].value_or(""));
    }
    Json report{{"samples", cm.total()},
                {"accuracy", accuracy(cm)},
                {"failures", cm.total_failures()},
                {"all", to_json(f1_report(cm), &space)},
                {"kappa", cohen_kappa(gold, pred_text)},
                {"confusion", to_json(cm)},
                {"labels", space.labels()}};
    if (tiers) {
      std::set<ClassIndex> high(tiers->high.begin(), tiers->high.end());
      std::set<ClassIndex> low(tiers->low.begin(), tiers->low.end());
      report["high"] = to_json(f1_report(cm, high, "high", r_.tier_mode), &space);
      report["low"] = to_json(f1_report(cm, low, "low", r_.tier_mode), &space);
    }
    write_json(dir("eval") / "report.json", report);
    out_ << "accuracy " << accuracy(cm) << ", macro-F1 " << f1_report(cm).macro_f1 << "\n";
    manifest(dir("eval"));
    return 0;
  }

  int spans_cmd() {
    const auto& ds = dataset();
    auto titles = ds.titles();
    VectorizerModel vec = fit_vectorizer(titles, VectorizerMode::TfIdf);
    auto X = transform_all(vec, titles);
    auto y = ds.labels(r_.task);
    TrainConfig cfg;
    cfg.seed = s_.seed;
    if (!s_.C.empty()) cfg.C = s_.C.front();
    if (!s_.regularization.empty() && s_.regularization.front() == "l1") cfg.regularization = Regularization::L1;
    const auto& space = ds.label_space(r_.task);
    LinearModel model = train_logreg_ovr(X, y, cfg, space.size(), vec.dimension());

    std::ostringstream csv;
    csv << "index,label,predicted_spans,gold_spans\n";
    std::size_t empty = 0;
    std::vector<std::string> pred_tokens;
    std::vector<std::string> gold_tokens;
    const bool hazard = is_hazard_task(r_.task);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& rec = ds.record(i);
      auto spans = extract_spans(model, vec, rec.title, y[i]);
      if (spans.empty()) ++empty;
      const auto& gold = hazard ? rec.hazard_title_spans : rec.product_title_spans;
      csv << i << ",\"" << space.label(y[i]) << "\",\"" << format_spans(spans) << "\",\""
          << (gold ? format_spans(*gold) : "") << "\"\n";
      if (!gold) continue;
      auto inside = [](const std::vector<CharSpan>& ss, const TokenSpan& t) {
        return std::any_of(ss.begin(), ss.end(), [&](const CharSpan& s) { return t.start >= s.start && t.end <= s.end; });
      };
      for (const auto& tok : tokenize(rec.title)) {
        pred_tokens.push_back(inside(spans, tok) ? "1" : "0");
        gold_tokens.push_back(inside(*gold, tok) ? "1" : "0");
      }
    }
    auto mean_classes = mean_classes_per_informative_token(model);
    Json summary{{"task", std::string(task_name(r_.task))},
                 {"records", ds.size()},
                 {"records_without_spans", empty},
                 {"fraction_without_spans", static_cast<double>(empty) / static_cast<double>(ds.size())},
                 {"mean_classes_per_informative_token", mean_classes ? Json(*mean_classes) : Json(nullptr)},
                 {"token_kappa_vs_gold", pred_tokens.empty() ? Json(nullptr) : Json(cohen_kappa(pred_tokens, gold_tokens))}};
    fs::path base = dir("spans") / std::string(task_name(r_.task));
    write_text(base / "spans.csv", csv.str());
    write_json(base / "summary.json", summary);
    out_ << "records without spans: " << empty << " of " << ds.size() << "\n";
    manifest(base);
    return 0;
  }

  int report_cmd() {
    fs::path root(s_.out);
    if (!fs::exists(root)) throw UsageError("--out: directory '" + s_.out + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, AggregateReport>> metric_rows;
    std::vector<std::pair<std::string, TelemetryReport>> telemetry_rows;
    auto summary_from = [](const Json& j) {
      Summary s;
      s.mean = j.at("mean").get<double>();
      s.max = j.at("max").get<double>();
      s.mean_deviation = j.at("mean_deviation").get<double>();
      return s;
    };
    for (const auto& f : files) {
      Json j = read_json(f);
      if (!j.contains("summary") || !j.contains("task")) continue;
      std::string name = j.at("task").get<std::string>() + "/" +
                         (j.contains("classifier") ? j.at("classifier").get<std::string>()
                                                   : j.at("strategy").get<std::string>() + "-" +
                                                         j.at("backend").get<std::string>());
      for (const char* tier : {"all", "high", "low"}) {
        const Json& a = j.at("summary").at(tier);
        AggregateReport r;
        r.subset = a.at("subset").get<std::string>();
        r.n_folds = a.at("n_folds").get<std::size_t>();
        r.micro_f1 = summary_from(a.at("micro_f1"));
        r.macro_f1 = summary_from(a.at("macro_f1"));
        r.macro_precision = summary_from(a.at("macro_precision"));
        r.macro_recall = summary_from(a.at("macro_recall"));
        metric_rows.emplace_back(name, r);
      }
      if (j.contains("telemetry")) {
        const Json& t = j.at("telemetry");
        TelemetryReport r;
        r.n_samples = t.at("n_samples").get<std::size_t>();
        r.n_prompted = t.at("n_prompted").get<std::size_t>();
        r.llm_usage = t.at("llm_usage").get<double>();
        auto opt = [&](const char* key) {
          return t.at(key).is_null() ? std::nullopt : std::optional<double>(t.at(key).get<double>());
        };
        r.mean_prompt_bytes = opt("mean_prompt_bytes");
        r.mean_classes_per_prompt = opt("mean_classes_per_prompt");
        r.mean_samples_per_class = opt("mean_samples_per_class");
        r.failure_rate = opt("failure_rate");
        telemetry_rows.emplace_back(name, r);
      }
    }
    std::ostringstream m;
    write_metrics_csv(m, metric_rows);
    std::ostringstream t;
    write_telemetry_csv(t, telemetry_rows);
    write_text(dir("report") / "metrics.csv", m.str());
    write_text(dir("report") / "telemetry.csv", t.str());
    out_ << m.str() << "\n" << t.str();
    manifest(dir("report"));
    return 0;
  }

  const Settings& s_;
  std::string command_;
  std::string effective_;
  std::ostream& out_;
  Resolved r_;
  std::optional<LabeledDataset> ds_;
};

void add_options(CLI::App& app, Settings& s) {
  app.add_option("--dataset", s.dataset, "Dataset CSV");
  app.add_option("--task", s.task, "hazard, hazard-category, product or product-category")->capture_default_str();
  app.add_option("--out", s.out, "Output directory")->capture_default_str();
  app.add_option("--seed", s.seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", s.jobs, "Folds run concurrently")->capture_default_str();
  app.add_option("--k-folds", s.k_folds, "Cross-validation folds")->capture_default_str();
  app.add_option("--val-fraction", s.val_fraction, "Validation holdout of each fold's non-test part")
      ->capture_default_str();
  app.add_option("--stratify", s.stratify, "auto, none or a task name")->capture_default_str();
  app.add_option("--splits", s.splits, "Reuse a splits.json instead of splitting");
  app.add_option("--vectorizer", s.vectorizer, "bow or tfidf")->capture_default_str();
  app.add_option("--classifier", s.classifier, "random, majority, knn, lr, svm (optionally bow-/tfidf- prefixed)")
      ->capture_default_str();
  app.add_option("--C", s.C, "Fixed C values instead of the default grid");
  app.add_option("--regularization", s.regularization, "Fixed LR penalties (l1, l2)");
  app.add_option("--knn-k", s.knn_k, "Fixed KNN neighbour counts");
  app.add_option("--tier-mode", s.tier_mode, "errors or drop")->capture_default_str();
  app.add_option("--min-train", s.min_train, "Minimum train support of well-supported classes")->capture_default_str();
  app.add_option("--strategy", s.strategy, "all, sim-k, max-k or cicle")->capture_default_str();
  app.add_option("--k", s.k, "k for sim-k and max-k")->capture_default_str();
  app.add_option("--alpha", s.alpha, "Conformal error level")->capture_default_str();
  app.add_option("--backend", s.backend, "http, perfect, random-shot or scripted")->capture_default_str();
  app.add_option("--script", s.script, "JSON object of prompt hash -> reply for the scripted backend");
  app.add_option("--endpoint", s.endpoint, "Completion endpoint URL (default CICLE_ENDPOINT_URL)");
  app.add_option("--model", s.model, "Model identifier (default CICLE_MODEL)");
  app.add_option("--max-tokens", s.max_tokens, "Completion length cap")->capture_default_str();
  app.add_option("--timeout-ms", s.timeout_ms, "Per-request timeout")->capture_default_str();
  app.add_option("--max-retries", s.max_retries, "Retries on 429/5xx")->capture_default_str();
  app.add_option("--concurrency", s.concurrency, "Completions in flight")->capture_default_str();
  app.add_flag("--strict-labels", s.strict_labels, "Byte-exact label matching");
  app.add_option("--description", s.description, "Override the task description line");
  app.add_option("--predictions", s.predictions, "JSON-lines predictions for 'eval'");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app{"CICLe: conformal in-context learning for large label spaces", "cicle"};
  app.set_config("--config", "", "Key-value config file; flags override it");
  app.set_version_flag("--version", kVersion);
  add_options(app, s);
  app.fallthrough();
  app.require_subcommand(1, 1);
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"ingest", "Load the dataset and report label statistics"},
      {"split", "Write cross-validation splits"},
      {"train", "Grid-search, train and evaluate a classifier on every fold"},
      {"grid-search", "Score the hyperparameter grid on each fold's validation split"},
      {"calibrate", "Calibrate conformal thresholds per fold"},
      {"prompt-run", "Build prompts, query a backend and score the answers"},
      {"eval", "Score a predictions file"},
      {"spans", "Estimate evidence spans from LR coefficients"},
      {"report", "Collect report.json files into CSV tables"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << "\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::string effective = app.config_to_str(true, false);
  out << "# effective config (" << command << ")\n" << effective;
  try {
    Runner runner(s, command, effective, out);
    return runner.run();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << "\n";
    return 1;
  }
}

}  // namespace cicle::cli
