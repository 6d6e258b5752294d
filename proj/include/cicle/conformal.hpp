#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cicle/classify.hpp"
#include "cicle/json.hpp"

namespace cicle {

struct CalibrationModel {
  double q_hat = 1.0;
  double alpha = 0.1;
  std::size_t n_cal = 0;
  std::size_t rank = 0;  // 1-based rank of q_hat among the sorted scores
  std::string fingerprint;  // identifies the base classifier
};

// Scores are 1 - p(true class). q = ceil((N+1)(1-alpha)) / N, capped at 1,
// and q_hat is the ceil(qN)-th smallest score.
CalibrationModel calibrate(std::span<const ClassDistribution> cal_probs, std::span<const ClassIndex> cal_labels,
                           double alpha, std::string fingerprint = {});

// 1-based rank used by calibrate for a calibration set of size n.
std::size_t quantile_rank(std::size_t n, double alpha);

enum class SetProvenance { Normal, EmptyFallback };

struct PredictionSet {
  std::vector<ClassIndex> classes;  // descending probability, ties by index
  std::vector<double> probs;        // aligned with classes
  SetProvenance provenance = SetProvenance::Normal;

  std::size_t size() const noexcept { return classes.size(); }
  bool contains(ClassIndex c) const;
};

// {j : p_j >= 1 - q_hat}; an empty set falls back to the argmax class.
PredictionSet predict_set(const CalibrationModel& cal, const ClassDistribution& probs);

double empirical_coverage(const CalibrationModel& cal, std::span<const ClassDistribution> test_probs,
                          std::span<const ClassIndex> test_labels);

// Fingerprint of a trained linear model: kind, shape, config and a hash of
// the coefficients.
std::string model_fingerprint(const LinearModel& model);

Json to_json(const CalibrationModel& cal);
CalibrationModel calibration_from_json(const Json& j);

}  // namespace cicle
