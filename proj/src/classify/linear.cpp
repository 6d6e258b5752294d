#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cicle/classify.hpp"
#include "cicle/error.hpp"
#include "cicle/kernels.hpp"
#include "cicle/random.hpp"

namespace cicle {
namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

double data_scale(const BinaryProblem& p, const TrainConfig& cfg) {
  return cfg.scaling == LossScaling::Mean ? 1.0 / static_cast<double>(p.X.size()) : 1.0;
}

double margin(const FeatureVector& x, std::span<const double> w, double b) {
  double m = b;
  for (const auto& e : x.entries()) {
    if (e.index < w.size()) m += w[e.index] * e.weight;
  }
  return m;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

void check_problem(std::span<const FeatureVector> X, std::span<const ClassIndex> y, const TrainConfig& cfg,
                   std::size_t n_classes) {
  cfg.validate();
  if (X.empty()) throw InvalidArgument("training set is empty");
  if (X.size() != y.size()) throw InvalidArgument("feature and label counts differ");
  if (n_classes == 0) throw InvalidArgument("label space is empty");
  for (ClassIndex c : y) {
    if (c >= n_classes) throw InvalidArgument("label index " + std::to_string(c) + " out of range");
  }
}

BinaryProblem one_vs_rest(std::span<const FeatureVector> X, std::span<const ClassIndex> y, ClassIndex c,
                          std::size_t dim) {
  BinaryProblem p;
  p.X = X;
  p.dim = dim;
  p.targets.reserve(y.size());
  for (ClassIndex label : y) p.targets.push_back(label == c ? 1 : -1);
  return p;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw InvalidArgument("C must be positive");
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
}

std::string_view regularization_name(Regularization r) { return r == Regularization::L1 ? "l1" : "l2"; }

Json to_json(const TrainConfig& cfg) {
  return {{"regularization", std::string(regularization_name(cfg.regularization))},
          {"C", cfg.C},
          {"max_epochs", cfg.max_epochs},
          {"tolerance", cfg.tolerance},
          {"seed", cfg.seed},
          {"scaling", cfg.scaling == LossScaling::Sum ? "sum" : "mean"}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig cfg;
  auto reg = j.at("regularization").get<std::string>();
  if (reg != "l1" && reg != "l2") throw SchemaError("unknown regularization '" + reg + "'");
  cfg.regularization = reg == "l1" ? Regularization::L1 : Regularization::L2;
  cfg.C = j.at("C").get<double>();
  cfg.max_epochs = j.at("max_epochs").get<int>();
  cfg.tolerance = j.at("tolerance").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.scaling = j.value("scaling", "sum") == "mean" ? LossScaling::Mean : LossScaling::Sum;
  return cfg;
}

ClassIndex ClassDistribution::argmax() const {
  if (probs.empty()) throw InvalidArgument("argmax of an empty distribution");
  return static_cast<ClassIndex>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---------------------------------------------------------------------------
// Logistic regression

double logistic_smooth_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.X.size(); ++i) loss += softplus(-p.targets[i] * margin(p.X[i], w, b));
  double f = data_scale(p, cfg) * loss;
  if (cfg.regularization == Regularization::L2) f += squared_norm(w) / (2.0 * cfg.C);
  return f;
}

void logistic_smooth_gradient(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg,
                              std::span<double> grad) {
  const double s = data_scale(p, cfg);
  std::fill(grad.begin(), grad.end(), 0.0);
  double gb = 0.0;
  for (std::size_t i = 0; i < p.X.size(); ++i) {
    double y = p.targets[i];
    double r = -y * sigmoid(-y * margin(p.X[i], w, b)) * s;
    for (const auto& e : p.X[i].entries()) {
      if (e.index < p.dim) grad[e.index] += r * e.weight;
    }
    gb += r;
  }
  if (cfg.regularization == Regularization::L2) {
    for (std::size_t j = 0; j < p.dim; ++j) grad[j] += w[j] / cfg.C;
  }
  grad[p.dim] = gb;
}

double logistic_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg) {
  double f = logistic_smooth_objective(p, w, b, cfg);
  if (cfg.regularization == Regularization::L1) f += l1_norm(w) / cfg.C;
  return f;
}

// Monotone FISTA (Beck & Teboulle 2009) with backtracking on the Lipschitz
// estimate. The L1 penalty is handled by soft-thresholding; the bias is never
// penalized.
BinaryFit fit_logistic_binary(const BinaryProblem& p, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t d = p.dim;
  const std::size_t n = d + 1;
  const bool l1 = cfg.regularization == Regularization::L1;

  std::size_t pos = 0;
  for (int t : p.targets) pos += t > 0 ? 1 : 0;
  const std::size_t neg = p.targets.size() - pos;

  BinaryFit fit;
  fit.w.assign(d, 0.0);
  if (pos == 0 || neg == 0) {
    // The unpenalized bias has no finite optimum; use the smoothed prior.
    fit.b = std::log((static_cast<double>(pos) + 0.5) / (static_cast<double>(neg) + 0.5));
    fit.converged = true;
    return fit;
  }

  auto smooth = [&](const std::vector<double>& z) {
    return logistic_smooth_objective(p, std::span<const double>(z.data(), d), z[d], cfg);
  };
  auto full = [&](const std::vector<double>& z, double f_smooth) {
    return l1 ? f_smooth + l1_norm(std::span<const double>(z.data(), d)) / cfg.C : f_smooth;
  };

  std::vector<double> x(n, 0.0);
  x[d] = std::log(static_cast<double>(pos) / static_cast<double>(neg));
  std::vector<double> y = x;
  std::vector<double> z(n);
  std::vector<double> grad(n);
  std::vector<double> x_prev;
  double fx = full(x, smooth(x));
  double t = 1.0;
  double L = 1.0;
  double g0 = -1.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double fy = smooth(y);
    logistic_smooth_gradient(p, std::span<const double>(y.data(), d), y[d], cfg, grad);
    double fz = 0.0;
    for (;;) {
      for (std::size_t j = 0; j < n; ++j) z[j] = y[j] - grad[j] / L;
      if (l1) {
        const double thr = 1.0 / (cfg.C * L);
        for (std::size_t j = 0; j < d; ++j) {
          double v = z[j];
          z[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
        }
      }
      fz = smooth(z);
      double lin = 0.0;
      double sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double diff = z[j] - y[j];
        lin += grad[j] * diff;
        sq += diff * diff;
      }
      if (fz <= fy + lin + 0.5 * L * sq + 1e-12 * std::abs(fy)) break;
      L *= 2.0;
    }

    double step_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) step_norm += (y[j] - z[j]) * (y[j] - z[j]);
    double gmap = L * std::sqrt(step_norm);
    if (g0 < 0) g0 = gmap;

    double Fz = full(z, fz);
    // Gradient restart: drop the momentum once it points uphill.
    double uphill = 0.0;
    for (std::size_t j = 0; j < n; ++j) uphill += (y[j] - z[j]) * (z[j] - x[j]);
    x_prev = x;
    if (Fz <= fx) {
      x = z;
      fx = Fz;
    }
    if (uphill > 0.0 || Fz > fx) {
      t = 1.0;
      y = x;
    } else {
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      for (std::size_t j = 0; j < n; ++j) {
        y[j] = x[j] + (t / t_next) * (z[j] - x[j]) + ((t - 1.0) / t_next) * (x[j] - x_prev[j]);
      }
      t = t_next;
    }
    fit.objective_trace.push_back(fx);
    fit.epochs = epoch;
    if (gmap <= cfg.tolerance * std::max(g0, 1e-300)) {
      fit.converged = true;
      break;
    }
  }
  fit.w.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  fit.b = x[d];
  return fit;
}

// ---------------------------------------------------------------------------
// Linear SVM

double hinge_objective(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.X.size(); ++i) loss += std::max(0.0, 1.0 - p.targets[i] * margin(p.X[i], w, b));
  return (squared_norm(w) + b * b) / (2.0 * cfg.C) + data_scale(p, cfg) * loss;
}

void hinge_subgradient(const BinaryProblem& p, std::span<const double> w, double b, const TrainConfig& cfg,
                       std::span<double> grad) {
  const double s = data_scale(p, cfg);
  for (std::size_t j = 0; j < p.dim; ++j) grad[j] = w[j] / cfg.C;
  grad[p.dim] = b / cfg.C;
  for (std::size_t i = 0; i < p.X.size(); ++i) {
    double y = p.targets[i];
    if (1.0 - y * margin(p.X[i], w, b) <= 0.0) continue;
    for (const auto& e : p.X[i].entries()) {
      if (e.index < p.dim) grad[e.index] -= s * y * e.weight;
    }
    grad[p.dim] -= s * y;
  }
}

// Dual coordinate descent (Hsieh et al. 2008), the liblinear L1-loss solver.
// Minimizing (1/(2C))|w~|^2 + s * sum hinge equals the dual box 0 <= a <= C s.
BinaryFit fit_hinge_binary(const BinaryProblem& p, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = p.X.size();
  const std::size_t d = p.dim;
  const double upper = cfg.C * data_scale(p, cfg);

  BinaryFit fit;
  fit.w.assign(d, 0.0);
  double b = 0.0;
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qdiag(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 1.0;
    for (const auto& e : p.X[i].entries()) {
      if (e.index < d) sq += e.weight * e.weight;
    }
    qdiag[i] = sq;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_in_place(std::span<std::size_t>(order), rng);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const double y = p.targets[i];
      const double g = y * margin(p.X[i], fit.w, b) - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] == upper) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-12) {
        double old = alpha[i];
        alpha[i] = std::min(std::max(old - g / qdiag[i], 0.0), upper);
        double delta = (alpha[i] - old) * y;
        for (const auto& e : p.X[i].entries()) {
          if (e.index < d) fit.w[e.index] += delta * e.weight;
        }
        b += delta;
      }
    }
    fit.epochs = epoch;
    if (pg_max - pg_min <= cfg.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.b = b;
  return fit;
}

// ---------------------------------------------------------------------------
// One-vs-rest

namespace {

LinearModel train_ovr(LinearKind kind, std::span<const FeatureVector> X, std::span<const ClassIndex> y,
                      const TrainConfig& cfg, std::size_t n_classes, std::size_t dim) {
  check_problem(X, y, cfg, n_classes);
  LinearModel model;
  model.kind = kind;
  model.n_classes = n_classes;
  model.dim = dim;
  model.config = cfg;
  model.weights.assign(n_classes * dim, 0.0);
  model.bias.assign(n_classes, 0.0);
  kernels::parallel::for_each(n_classes, [&](std::size_t c) {
    BinaryProblem prob = one_vs_rest(X, y, static_cast<ClassIndex>(c), dim);
    TrainConfig class_cfg = cfg;
    class_cfg.seed = mix_seed(cfg.seed, c);
    BinaryFit fit = kind == LinearKind::LogReg ? fit_logistic_binary(prob, class_cfg) : fit_hinge_binary(prob, class_cfg);
    std::copy(fit.w.begin(), fit.w.end(), model.weights.begin() + static_cast<std::ptrdiff_t>(c * dim));
    model.bias[c] = fit.b;
  });
  return model;
}

}  // namespace

LinearModel train_logreg_ovr(std::span<const FeatureVector> X, std::span<const ClassIndex> y, const TrainConfig& cfg,
                             std::size_t n_classes, std::size_t dim) {
  return train_ovr(LinearKind::LogReg, X, y, cfg, n_classes, dim);
}

LinearModel train_svm_ovr(std::span<const FeatureVector> X, std::span<const ClassIndex> y, const TrainConfig& cfg,
                          std::size_t n_classes, std::size_t dim) {
  return train_ovr(LinearKind::Svm, X, y, cfg, n_classes, dim);
}

std::vector<double> linear_scores(const LinearModel& model, const FeatureVector& x) {
  std::vector<double> out(model.n_classes);
  kernels::DenseLinear view{model.weights, model.bias, model.n_classes, model.dim};
  kernels::parallel::linear_scores(view, x, out);
  return out;
}

ClassDistribution predict_proba(const LinearModel& model, const FeatureVector& x) {
  // log sigmoid(s) = -softplus(-s); normalize in the log domain so that very
  // negative scores do not all underflow to zero.
  std::vector<double> logp = linear_scores(model, x);
  for (double& s : logp) s = -softplus(-s);
  double top = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& v : logp) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logp) v /= total;
  return ClassDistribution{std::move(logp)};
}

std::vector<double> svm_decision(const LinearModel& model, const FeatureVector& x) { return linear_scores(model, x); }

ClassIndex predict_linear(const LinearModel& model, const FeatureVector& x) {
  auto s = linear_scores(model, x);
  return static_cast<ClassIndex>(std::max_element(s.begin(), s.end()) - s.begin());
}

Json to_json(const LinearModel& model) {
  Json j;
  j["format"] = "cicle-linear-model";
  j["version"] = 1;
  j["kind"] = model.kind == LinearKind::LogReg ? "logreg" : "svm";
  j["n_classes"] = model.n_classes;
  j["dim"] = model.dim;
  j["config"] = to_json(model.config);
  j["bias"] = model.bias;
  Json rows = Json::array();
  for (std::size_t c = 0; c < model.n_classes; ++c) {
    Json idx = Json::array();
    Json val = Json::array();
    for (std::size_t v = 0; v < model.dim; ++v) {
      double w = model.weights[c * model.dim + v];
      if (w != 0.0) {
        idx.push_back(v);
        val.push_back(w);
      }
    }
    rows.push_back({{"indices", std::move(idx)}, {"values", std::move(val)}});
  }
  j["weights"] = std::move(rows);
  return j;
}

LinearModel linear_model_from_json(const Json& j) {
  if (j.value("format", "") != "cicle-linear-model" || j.value("version", 0) != 1) {
    throw SchemaError("not a version-1 cicle-linear-model document");
  }
  LinearModel m;
  auto kind = j.at("kind").get<std::string>();
  if (kind != "logreg" && kind != "svm") throw SchemaError("unknown model kind '" + kind + "'");
  m.kind = kind == "logreg" ? LinearKind::LogReg : LinearKind::Svm;
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.dim = j.at("dim").get<std::size_t>();
  m.config = train_config_from_json(j.at("config"));
  m.bias = j.at("bias").get<std::vector<double>>();
  if (m.bias.size() != m.n_classes || j.at("weights").size() != m.n_classes) {
    throw SchemaError("model dimensions do not match");
  }
  m.weights.assign(m.n_classes * m.dim, 0.0);
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    const auto& row = j.at("weights")[c];
    auto idx = row.at("indices").get<std::vector<std::size_t>>();
    auto val = row.at("values").get<std::vector<double>>();
    if (idx.size() != val.size()) throw SchemaError("weight row " + std::to_string(c) + " is malformed");
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= m.dim) throw SchemaError("weight index out of range");
      m.weights[c * m.dim + idx[k]] = val[k];
    }
  }
  return m;
}

}  // namespace cicle
