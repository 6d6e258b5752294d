#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "cicle/error.hpp"
#include "cicle/eval.hpp"

namespace cicle {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : m_(n_classes), counts_(n_classes * (n_classes + 1), 0) {}

void ConfusionMatrix::add(ClassIndex gold, Prediction predicted) {
  if (gold >= m_) throw InvalidArgument("gold class " + std::to_string(gold) + " out of range");
  if (predicted && *predicted >= m_) throw InvalidArgument("predicted class " + std::to_string(*predicted) + " out of range");
  ++counts_[gold * (m_ + 1) + (predicted ? *predicted : m_)];
  ++total_;
}

std::size_t ConfusionMatrix::total_failures() const {
  std::size_t n = 0;
  for (ClassIndex g = 0; g < m_; ++g) n += failures(g);
  return n;
}

std::size_t ConfusionMatrix::row_sum(ClassIndex gold) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p <= m_; ++p) n += counts_[gold * (m_ + 1) + p];
  return n;
}

std::size_t ConfusionMatrix::column_sum(ClassIndex predicted) const {
  std::size_t n = 0;
  for (std::size_t g = 0; g < m_; ++g) n += counts_[g * (m_ + 1) + predicted];
  return n;
}

std::set<ClassIndex> ConfusionMatrix::present_classes() const {
  std::set<ClassIndex> out;
  for (ClassIndex c = 0; c < m_; ++c) {
    if (row_sum(c) > 0 || column_sum(c) > 0) out.insert(c);
  }
  return out;
}

ConfusionMatrix confusion(std::span<const Prediction> predicted, std::span<const ClassIndex> gold, std::size_t n_classes) {
  if (predicted.size() != gold.size()) throw InvalidArgument("prediction and gold counts differ");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
  return cm;
}

ConfusionMatrix confusion(std::span<const ClassIndex> predicted, std::span<const ClassIndex> gold, std::size_t n_classes) {
  std::vector<Prediction> p(predicted.begin(), predicted.end());
  return confusion(std::span<const Prediction>(p), gold, n_classes);
}

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

double harmonic(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricsReport f1_report(const ConfusionMatrix& cm, const std::set<ClassIndex>& subset, std::string subset_name,
                        TierMode mode) {
  const std::size_t m = cm.n_classes();
  MetricsReport r;
  r.subset = std::move(subset_name);

  // A gold row takes part unless it is outside the subset in drop mode.
  auto row_in = [&](ClassIndex g) { return mode == TierMode::CountAsErrors || subset.contains(g); };
  for (ClassIndex g = 0; g < m; ++g) {
    if (row_in(g)) r.n_samples += cm.row_sum(g);
  }

  std::size_t tp_sum = 0;
  std::size_t fp_sum = 0;
  std::size_t fn_sum = 0;
  double p_sum = 0.0;
  double r_sum = 0.0;
  double f_sum = 0.0;
  for (ClassIndex c : subset) {
    if (c >= m) throw InvalidArgument("subset class out of range");
    std::size_t tp = cm.at(c, c);
    std::size_t fn = cm.row_sum(c) - tp;
    std::size_t fp = 0;
    for (ClassIndex g = 0; g < m; ++g) {
      if (g != c && row_in(g)) fp += cm.at(g, c);
    }
    ClassScore s;
    s.cls = c;
    s.support = cm.row_sum(c);
    s.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    s.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    s.f1 = harmonic(s.precision, s.recall);
    r.per_class.push_back(s);
    tp_sum += tp;
    fp_sum += fp;
    fn_sum += fn;
    p_sum += s.precision;
    r_sum += s.recall;
    f_sum += s.f1;
  }
  if (!subset.empty()) {
    const double k = static_cast<double>(subset.size());
    r.macro_precision = p_sum / k;
    r.macro_recall = r_sum / k;
    r.macro_f1 = f_sum / k;
  }
  r.micro_f1 = ratio(2.0 * static_cast<double>(tp_sum), static_cast<double>(2 * tp_sum + fp_sum + fn_sum));
  return r;
}

MetricsReport f1_report(const ConfusionMatrix& cm) { return f1_report(cm, cm.present_classes(), "all"); }

double accuracy(const ConfusionMatrix& cm) {
  std::size_t correct = 0;
  for (ClassIndex c = 0; c < cm.n_classes(); ++c) correct += cm.at(c, c);
  return ratio(static_cast<double>(correct), static_cast<double>(cm.total()));
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("cannot summarize an empty list");
  Summary s;
  double total = 0.0;
  s.max = values[0];
  for (double v : values) {
    total += v;
    s.max = std::max(s.max, v);
  }
  s.mean = total / static_cast<double>(values.size());
  double dev = 0.0;
  for (double v : values) dev += std::abs(v - s.mean);
  s.mean_deviation = dev / static_cast<double>(values.size());
  return s;
}

AggregateReport aggregate_folds(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw InvalidArgument("no fold reports to aggregate");
  AggregateReport a;
  a.subset = reports.front().subset;
  a.n_folds = reports.size();
  auto field = [&](double MetricsReport::*member) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.*member);
    return summarize(v);
  };
  a.micro_f1 = field(&MetricsReport::micro_f1);
  a.macro_f1 = field(&MetricsReport::macro_f1);
  a.macro_precision = field(&MetricsReport::macro_precision);
  a.macro_recall = field(&MetricsReport::macro_recall);
  return a;
}

TelemetryReport telemetry_report(std::span<const SampleTelemetry> records) {
  TelemetryReport t;
  t.n_samples = records.size();
  double bytes = 0.0;
  double classes = 0.0;
  double per_class = 0.0;
  std::size_t per_class_n = 0;
  std::size_t failures = 0;
  for (const auto& r : records) {
    if (r.bypassed) continue;
    ++t.n_prompted;
    bytes += static_cast<double>(r.prompt_bytes);
    classes += static_cast<double>(r.classes_in_prompt);
    if (r.classes_in_prompt > 0) {
      per_class += static_cast<double>(r.shots) / static_cast<double>(r.classes_in_prompt);
      ++per_class_n;
    }
    if (r.parse_failure) ++failures;
  }
  t.llm_usage = ratio(static_cast<double>(t.n_prompted), static_cast<double>(t.n_samples));
  if (t.n_prompted > 0) {
    const double n = static_cast<double>(t.n_prompted);
    t.mean_prompt_bytes = bytes / n;
    t.mean_classes_per_prompt = classes / n;
    t.failure_rate = static_cast<double>(failures) / n;
  }
  if (per_class_n > 0) t.mean_samples_per_class = per_class / static_cast<double>(per_class_n);
  return t;
}

double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) throw InvalidArgument("annotation sequences differ in length");
  if (a.empty()) throw InvalidArgument("cannot compute agreement of empty sequences");
  const double n = static_cast<double>(a.size());
  std::map<std::string, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) agree += 1.0;
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [label, counts] : marginals) pe += (counts.first / n) * (counts.second / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

Json to_json(const MetricsReport& r, const LabelSpace* space) {
  Json j{{"subset", r.subset},
         {"n_samples", r.n_samples},
         {"n_classes", r.per_class.size()},
         {"micro_f1", r.micro_f1},
         {"macro_f1", r.macro_f1},
         {"macro_precision", r.macro_precision},
         {"macro_recall", r.macro_recall}};
  Json rows = Json::array();
  for (const auto& s : r.per_class) {
    Json row{{"class", s.cls}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    if (space) row["label"] = space->label(s.cls);
    rows.push_back(std::move(row));
  }
  j["per_class"] = std::move(rows);
  return j;
}

Json to_json(const Summary& s) { return {{"mean", s.mean}, {"max", s.max}, {"mean_deviation", s.mean_deviation}}; }

Json to_json(const AggregateReport& r) {
  return {{"subset", r.subset},
          {"n_folds", r.n_folds},
          {"micro_f1", to_json(r.micro_f1)},
          {"macro_f1", to_json(r.macro_f1)},
          {"macro_precision", to_json(r.macro_precision)},
          {"macro_recall", to_json(r.macro_recall)}};
}

Json to_json(const TelemetryReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"n_samples", r.n_samples},
          {"n_prompted", r.n_prompted},
          {"llm_usage", r.llm_usage},
          {"mean_prompt_bytes", opt(r.mean_prompt_bytes)},
          {"mean_classes_per_prompt", opt(r.mean_classes_per_prompt)},
          {"mean_samples_per_class", opt(r.mean_samples_per_class)},
          {"failure_rate", opt(r.failure_rate)}};
}

Json to_json(const ConfusionMatrix& cm) {
  Json rows = Json::array();
  for (ClassIndex g = 0; g < cm.n_classes(); ++g) {
    Json row = Json::array();
    for (ClassIndex p = 0; p < cm.n_classes(); ++p) row.push_back(cm.at(g, p));
    row.push_back(cm.failures(g));
    rows.push_back(std::move(row));
  }
  return {{"n_classes", cm.n_classes()}, {"total", cm.total()}, {"rows", std::move(rows)}};
}

namespace {

std::string fixed(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string(); }

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const std::pair<std::string, AggregateReport>> rows) {
  out << "name,subset,folds";
  for (const char* metric : {"macro_f1", "micro_f1", "macro_precision", "macro_recall"}) {
    out << ',' << metric << "_mean," << metric << "_max," << metric << "_mean_dev";
  }
  out << '\n';
  for (const auto& [name, a] : rows) {
    out << csv_text(name) << ',' << csv_text(a.subset) << ',' << a.n_folds;
    for (const Summary* s : {&a.macro_f1, &a.micro_f1, &a.macro_precision, &a.macro_recall}) {
      out << ',' << fixed(s->mean) << ',' << fixed(s->max) << ',' << fixed(s->mean_deviation);
    }
    out << '\n';
  }
}

void write_telemetry_csv(std::ostream& out, std::span<const std::pair<std::string, TelemetryReport>> rows) {
  out << "name,samples,llm_usage,prompt_bytes,classes_per_prompt,samples_per_class,failure_rate\n";
  for (const auto& [name, t] : rows) {
    out << csv_text(name) << ',' << t.n_samples << ',' << fixed(t.llm_usage) << ',' << fixed(t.mean_prompt_bytes) << ','
        << fixed(t.mean_classes_per_prompt) << ',' << fixed(t.mean_samples_per_class) << ',' << fixed(t.failure_rate)
        << '\n';
  }
}

}  // namespace cicle
