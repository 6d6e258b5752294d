#include <algorithm>
#include <sstream>

#include "cicle/classify.hpp"
#include "cicle/error.hpp"
#include "cicle/eval.hpp"
#include "cicle/kernels.hpp"
#include "cicle/random.hpp"

namespace cicle {

KnnResult knn_predict(std::span<const FeatureVector> train_X, std::span<const ClassIndex> train_y,
                      const FeatureVector& x, std::size_t k, std::size_t n_classes) {
  if (train_X.empty()) throw InvalidArgument("KNN needs a non-empty training set");
  if (train_X.size() != train_y.size()) throw InvalidArgument("feature and label counts differ");
  if (k == 0 || k > train_X.size()) {
    throw InvalidArgument("k=" + std::to_string(k) + " must lie in [1, " + std::to_string(train_X.size()) + "]");
  }
  std::vector<double> sims(train_X.size());
  kernels::parallel::similarity_scan(train_X, x, sims);

  std::vector<std::size_t> order(train_X.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto closer = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);

  KnnResult r;
  std::vector<std::size_t> votes(n_classes, 0);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t i = order[j];
    if (train_y[i] >= n_classes) throw InvalidArgument("label index out of range");
    r.neighbors.push_back({i, sims[i]});
    ++votes[train_y[i]];
  }
  std::size_t best = *std::max_element(votes.begin(), votes.end());
  for (const auto& nb : r.neighbors) {
    if (votes[train_y[nb.index]] == best) {
      r.predicted = train_y[nb.index];
      break;
    }
  }
  r.distribution.probs.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    r.distribution.probs[c] = static_cast<double>(votes[c]) / static_cast<double>(k);
  }
  return r;
}

RandomBaseline::RandomBaseline(std::size_t n_classes, std::uint64_t seed) : n_classes_(n_classes), rng_(seed) {
  if (n_classes == 0) throw InvalidArgument("label space is empty");
}

ClassIndex RandomBaseline::predict() { return static_cast<ClassIndex>(uniform_index(rng_, n_classes_)); }

ClassIndex majority_class(std::span<const ClassIndex> train_y, std::size_t n_classes) {
  if (train_y.empty()) throw InvalidArgument("majority baseline needs training labels");
  std::vector<std::size_t> counts(n_classes, 0);
  for (ClassIndex c : train_y) ++counts.at(c);
  return static_cast<ClassIndex>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::string_view classifier_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::Random: return "random";
    case ClassifierKind::Majority: return "majority";
    case ClassifierKind::Knn: return "knn";
    case ClassifierKind::LogReg: return "lr";
    case ClassifierKind::Svm: return "svm";
  }
  return "?";
}

ClassifierKind parse_classifier(std::string_view name) {
  // Accepts the bare names and the "<features>-<name>" forms used in configs.
  std::string n(name);
  for (auto& ch : n) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (std::string_view prefix : {"tfidf-", "tf-idf-", "bow-"}) {
    if (n.starts_with(prefix)) n = n.substr(prefix.size());
  }
  if (n == "random") return ClassifierKind::Random;
  if (n == "majority") return ClassifierKind::Majority;
  if (n == "knn") return ClassifierKind::Knn;
  if (n == "lr" || n == "logreg") return ClassifierKind::LogReg;
  if (n == "svm") return ClassifierKind::Svm;
  throw InvalidArgument("unknown classifier '" + std::string(name) + "'");
}

std::string GridCandidate::describe() const {
  std::ostringstream s;
  s << classifier_name(kind);
  if (kind == ClassifierKind::Knn) s << "(k=" << k << ")";
  if (kind == ClassifierKind::LogReg) s << "(" << regularization_name(config.regularization) << ", C=" << config.C << ")";
  if (kind == ClassifierKind::Svm) s << "(C=" << config.C << ")";
  return s.str();
}

std::vector<GridCandidate> default_grid(ClassifierKind kind, std::uint64_t seed) {
  std::vector<GridCandidate> grid;
  TrainConfig base;
  base.seed = seed;
  switch (kind) {
    case ClassifierKind::Random:
    case ClassifierKind::Majority: grid.push_back({kind, base, 0}); break;
    case ClassifierKind::Knn:
      for (std::size_t k : {2, 4, 8}) grid.push_back({kind, base, k});
      break;
    case ClassifierKind::LogReg:
      for (Regularization r : {Regularization::L1, Regularization::L2}) {
        for (double c : {0.5, 1.0, 2.0}) {
          TrainConfig cfg = base;
          cfg.regularization = r;
          cfg.C = c;
          grid.push_back({kind, cfg, 0});
        }
      }
      break;
    case ClassifierKind::Svm:
      for (double c : {0.5, 1.0, 2.0}) {
        TrainConfig cfg = base;
        cfg.C = c;
        // liblinear's default stopping rule for the dual solver.
        cfg.tolerance = 0.1;
        cfg.max_epochs = 1000;
        grid.push_back({kind, cfg, 0});
      }
      break;
  }
  return grid;
}

FittedClassifier FittedClassifier::fit(const GridCandidate& candidate, std::span<const FeatureVector> X,
                                       std::span<const ClassIndex> y, std::size_t n_classes, std::size_t dim) {
  if (X.empty()) throw InvalidArgument("training set is empty");
  if (X.size() != y.size()) throw InvalidArgument("feature and label counts differ");
  FittedClassifier f;
  f.candidate_ = candidate;
  f.n_classes_ = n_classes;
  switch (candidate.kind) {
    case ClassifierKind::Random: break;
    case ClassifierKind::Majority: f.majority_ = majority_class(y, n_classes); break;
    case ClassifierKind::Knn:
      if (candidate.k == 0 || candidate.k > X.size()) throw InvalidArgument("KNN k exceeds the training set");
      f.train_X_.assign(X.begin(), X.end());
      f.train_y_.assign(y.begin(), y.end());
      break;
    case ClassifierKind::LogReg: f.linear_ = train_logreg_ovr(X, y, candidate.config, n_classes, dim); break;
    case ClassifierKind::Svm: f.linear_ = train_svm_ovr(X, y, candidate.config, n_classes, dim); break;
  }
  return f;
}

bool FittedClassifier::has_probabilities() const noexcept {
  return candidate_.kind == ClassifierKind::LogReg || candidate_.kind == ClassifierKind::Knn;
}

std::vector<ClassIndex> FittedClassifier::predict_all(std::span<const FeatureVector> X) const {
  std::vector<ClassIndex> out(X.size(), 0);
  switch (candidate_.kind) {
    case ClassifierKind::Random: {
      RandomBaseline rb(n_classes_, candidate_.config.seed);
      for (auto& p : out) p = rb.predict();
      break;
    }
    case ClassifierKind::Majority: std::fill(out.begin(), out.end(), majority_); break;
    case ClassifierKind::Knn:
      kernels::parallel::for_each(X.size(), [&](std::size_t i) {
        out[i] = knn_predict(train_X_, train_y_, X[i], candidate_.k, n_classes_).predicted;
      });
      break;
    case ClassifierKind::LogReg:
    case ClassifierKind::Svm:
      kernels::parallel::for_each(X.size(), [&](std::size_t i) { out[i] = predict_linear(*linear_, X[i]); });
      break;
  }
  return out;
}

ClassDistribution FittedClassifier::predict_proba(const FeatureVector& x) const {
  if (candidate_.kind == ClassifierKind::LogReg) return cicle::predict_proba(*linear_, x);
  if (candidate_.kind == ClassifierKind::Knn) return knn_predict(train_X_, train_y_, x, candidate_.k, n_classes_).distribution;
  throw InvalidArgument(std::string(classifier_name(candidate_.kind)) + " does not produce class probabilities");
}

std::vector<ClassDistribution> FittedClassifier::predict_proba_all(std::span<const FeatureVector> X) const {
  if (!has_probabilities()) {
    throw InvalidArgument(std::string(classifier_name(candidate_.kind)) + " does not produce class probabilities");
  }
  std::vector<ClassDistribution> out(X.size());
  kernels::parallel::for_each(X.size(), [&](std::size_t i) { out[i] = predict_proba(X[i]); });
  return out;
}

GridSearchReport grid_search(std::span<const GridCandidate> grid, std::span<const FeatureVector> train_X,
                             std::span<const ClassIndex> train_y, std::span<const FeatureVector> val_X,
                             std::span<const ClassIndex> val_y, std::size_t n_classes, std::size_t dim) {
  if (grid.empty()) throw InvalidArgument("empty hyperparameter grid");
  if (val_X.empty()) throw InvalidArgument("grid search needs a validation set");
  std::set<ClassIndex> val_classes(val_y.begin(), val_y.end());
  GridSearchReport report;
  for (const auto& candidate : grid) {
    auto model = FittedClassifier::fit(candidate, train_X, train_y, n_classes, dim);
    auto pred = model.predict_all(val_X);
    auto cm = confusion(std::span<const ClassIndex>(pred), val_y, n_classes);
    double score = f1_report(cm, val_classes, "val").macro_f1;
    report.entries.push_back({candidate, score});
    if (score > report.entries[report.chosen].score) report.chosen = report.entries.size() - 1;
  }
  return report;
}

namespace {

Json candidate_json(const GridCandidate& c) {
  Json j{{"classifier", std::string(classifier_name(c.kind))}, {"describe", c.describe()}};
  if (c.kind == ClassifierKind::Knn) j["k"] = c.k;
  if (c.kind == ClassifierKind::LogReg || c.kind == ClassifierKind::Svm) j["config"] = to_json(c.config);
  return j;
}

}  // namespace

Json to_json(const GridSearchReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    Json j = candidate_json(e.candidate);
    j["score"] = e.score;
    entries.push_back(std::move(j));
  }
  return {{"metric", report.metric}, {"chosen", report.chosen}, {"entries", std::move(entries)}};
}

std::vector<CharSpan> extract_spans(const LinearModel& model, const VectorizerModel& vectorizer,
                                    std::string_view title, ClassIndex cls) {
  if (cls >= model.n_classes) throw InvalidArgument("class index out of range");
  std::vector<CharSpan> spans;
  bool extend = false;
  for (const auto& tok : tokenize(title)) {
    std::int64_t v = vectorizer.vocabulary.find(tok.stem);
    bool selected = v >= 0 && static_cast<std::size_t>(v) < model.dim && model.weight(cls, static_cast<std::uint32_t>(v)) > 0.0;
    if (selected && extend) {
      spans.back().end = tok.end;
    } else if (selected) {
      spans.push_back({tok.start, tok.end});
    }
    extend = selected;
  }
  return spans;
}

std::optional<double> mean_classes_per_informative_token(const LinearModel& model) {
  std::size_t tokens = 0;
  std::size_t classes = 0;
  for (std::size_t v = 0; v < model.dim; ++v) {
    std::size_t n = 0;
    for (std::size_t c = 0; c < model.n_classes; ++c) {
      if (model.weights[c * model.dim + v] > 0.0) ++n;
    }
    if (n > 0) {
      ++tokens;
      classes += n;
    }
  }
  if (tokens == 0) return std::nullopt;
  return static_cast<double>(classes) / static_cast<double>(tokens);
}

}  // namespace cicle
