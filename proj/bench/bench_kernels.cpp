// Times the serial reference kernels against their OpenMP counterparts.
// Usage: bench_kernels [rows] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include "cicle/classify.hpp"
#include "cicle/kernels.hpp"
#include "cicle/random.hpp"

using namespace cicle;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<FeatureVector> random_rows(std::mt19937_64& rng, std::size_t n, std::uint32_t dim, std::size_t nnz) {
  std::vector<FeatureVector> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<FeatureEntry> e;
    for (std::size_t k = 0; k < nnz; ++k) {
      e.push_back({static_cast<std::uint32_t>(uniform_index(rng, dim)), uniform_unit(rng) + 0.01});
    }
    rows.push_back(FeatureVector::from_weights(std::move(e)));
  }
  return rows;
}

template <class F>
double millis(int repeats, F body) {
  auto t0 = Clock::now();
  for (int r = 0; r < repeats; ++r) body();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / repeats;
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-22s %10.3f %10.3f %8.2fx  %s\n", name, serial, parallel, serial / parallel, same ? "equal" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 20000;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 20;
  const std::uint32_t dim = 5000;
  std::mt19937_64 rng(2024);
  auto rows = random_rows(rng, n, dim, 12);
  auto query = random_rows(rng, 1, dim, 12).front();

  std::printf("threads %d, rows %zu, repeats %d\n", kernels::parallel::max_threads(), n, repeats);
  std::printf("%-22s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  std::vector<double> a(n), b(n);
  double s = millis(repeats, [&] { kernels::serial::similarity_scan(rows, query, a); });
  double p = millis(repeats, [&] { kernels::parallel::similarity_scan(rows, query, b); });
  row("similarity_scan", s, p, a == b);

  const std::size_t classes = 1000;
  std::vector<double> w(classes * dim), bias(classes);
  for (auto& v : w) v = uniform_unit(rng) - 0.5;
  for (auto& v : bias) v = uniform_unit(rng) - 0.5;
  kernels::DenseLinear model{w, bias, classes, dim};
  std::vector<double> la(classes), lb(classes);
  s = millis(repeats * 50, [&] { kernels::serial::linear_scores(model, query, la); });
  p = millis(repeats * 50, [&] { kernels::parallel::linear_scores(model, query, lb); });
  row("linear_scores", s, p, la == lb);

  // One-vs-rest training parallelizes over classes; one thread is the serial baseline.
  const std::size_t train_n = std::min<std::size_t>(n, 3000), train_classes = 20;
  std::vector<FeatureVector> X(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(train_n));
  std::vector<ClassIndex> y(train_n);
  for (auto& c : y) c = static_cast<ClassIndex>(uniform_index(rng, train_classes));
  TrainConfig cfg;
  cfg.max_epochs = 50;
  LinearModel m1, mp;
  kernels::parallel::set_threads(1);
  s = millis(1, [&] { m1 = train_logreg_ovr(X, y, cfg, train_classes, dim); });
  kernels::parallel::set_threads(0);
  p = millis(1, [&] { mp = train_logreg_ovr(X, y, cfg, train_classes, dim); });
  row("train_logreg_ovr", s, p, m1.weights == mp.weights);
  kernels::parallel::set_threads(1);
  s = millis(1, [&] { m1 = train_svm_ovr(X, y, cfg, train_classes, dim); });
  kernels::parallel::set_threads(0);
  p = millis(1, [&] { mp = train_svm_ovr(X, y, cfg, train_classes, dim); });
  row("train_svm_ovr", s, p, m1.weights == mp.weights);
  return 0;
}
