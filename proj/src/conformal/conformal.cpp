#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>

#include "cicle/conformal.hpp"
#include "cicle/error.hpp"

namespace cicle {

std::size_t quantile_rank(std::size_t n, double alpha) {
  if (n == 0) throw InvalidArgument("calibration set is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  // The epsilon keeps products such as 20 * 0.95 from rounding up to 20 + ulp.
  double target = static_cast<double>(n + 1) * (1.0 - alpha);
  auto rank = static_cast<std::size_t>(std::ceil(target - 1e-9));
  return std::clamp<std::size_t>(rank, 1, n);
}

CalibrationModel calibrate(std::span<const ClassDistribution> cal_probs, std::span<const ClassIndex> cal_labels,
                           double alpha, std::string fingerprint) {
  if (cal_probs.size() != cal_labels.size()) throw InvalidArgument("calibration probabilities and labels differ in count");
  std::size_t rank = quantile_rank(cal_probs.size(), alpha);
  std::vector<double> scores;
  scores.reserve(cal_probs.size());
  for (std::size_t i = 0; i < cal_probs.size(); ++i) {
    if (cal_labels[i] >= cal_probs[i].size()) throw InvalidArgument("calibration label out of range");
    scores.push_back(1.0 - cal_probs[i][cal_labels[i]]);
  }
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(rank - 1), scores.end());
  CalibrationModel cal;
  cal.q_hat = scores[rank - 1];
  cal.alpha = alpha;
  cal.n_cal = cal_probs.size();
  cal.rank = rank;
  cal.fingerprint = std::move(fingerprint);
  return cal;
}

bool PredictionSet::contains(ClassIndex c) const { return std::find(classes.begin(), classes.end(), c) != classes.end(); }

PredictionSet predict_set(const CalibrationModel& cal, const ClassDistribution& probs) {
  if (probs.size() == 0) throw InvalidArgument("empty class distribution");
  const double threshold = 1.0 - cal.q_hat;
  PredictionSet set;
  for (ClassIndex c = 0; c < probs.size(); ++c) {
    if (probs[c] >= threshold) set.classes.push_back(c);
  }
  if (set.classes.empty()) {
    set.classes.push_back(probs.argmax());
    set.provenance = SetProvenance::EmptyFallback;
  }
  std::stable_sort(set.classes.begin(), set.classes.end(),
                   [&](ClassIndex a, ClassIndex b) { return probs[a] > probs[b]; });
  for (ClassIndex c : set.classes) set.probs.push_back(probs[c]);
  return set;
}

double empirical_coverage(const CalibrationModel& cal, std::span<const ClassDistribution> test_probs,
                          std::span<const ClassIndex> test_labels) {
  if (test_probs.size() != test_labels.size()) throw InvalidArgument("test probabilities and labels differ in count");
  if (test_probs.empty()) throw InvalidArgument("empty test set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test_probs.size(); ++i) {
    if (predict_set(cal, test_probs[i]).contains(test_labels[i])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(test_probs.size());
}

std::string model_fingerprint(const LinearModel& model) {
  // FNV-1a over the raw bits of every coefficient.
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  for (double w : model.weights) mix(std::bit_cast<std::uint64_t>(w));
  for (double b : model.bias) mix(std::bit_cast<std::uint64_t>(b));
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  std::string kind = model.kind == LinearKind::LogReg ? "logreg" : "svm";
  return kind + "/" + std::string(regularization_name(model.config.regularization)) + "/C=" +
         std::to_string(model.config.C) + "/" + std::to_string(model.n_classes) + "x" + std::to_string(model.dim) +
         "/" + hex;
}

Json to_json(const CalibrationModel& cal) {
  return {{"format", "cicle-calibration"}, {"version", 1},      {"alpha", cal.alpha},
          {"q_hat", cal.q_hat},            {"n_cal", cal.n_cal}, {"rank", cal.rank},
          {"fingerprint", cal.fingerprint}};
}

CalibrationModel calibration_from_json(const Json& j) {
  if (j.value("format", "") != "cicle-calibration" || j.value("version", 0) != 1) {
    throw SchemaError("not a version-1 cicle-calibration document");
  }
  CalibrationModel cal;
  cal.alpha = j.at("alpha").get<double>();
  cal.q_hat = j.at("q_hat").get<double>();
  cal.n_cal = j.at("n_cal").get<std::size_t>();
  cal.rank = j.value("rank", std::size_t{0});
  cal.fingerprint = j.value("fingerprint", "");
  return cal;
}

}  // namespace cicle
