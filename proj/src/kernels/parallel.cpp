#include "cicle/kernels.hpp"

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cicle::kernels::parallel {
namespace {
int g_threads = 0;

int team_size() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

int max_threads() { return team_size(); }

void set_threads(int n) { g_threads = n > 0 ? n : 0; }

void similarity_scan(std::span<const FeatureVector> rows, const FeatureVector& query, std::span<double> out) {
  std::uint32_t dim = 0;
  for (const auto& e : query.entries()) dim = e.index + 1;
  std::vector<double> dense(dim, 0.0);
  for (const auto& e : query.entries()) dense[e.index] = e.weight;
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static) num_threads(team_size()) if (n > 2048)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (const auto& e : rows[static_cast<std::size_t>(i)].entries()) {
      if (e.index < dim) dot += e.weight * dense[e.index];
    }
    out[static_cast<std::size_t>(i)] = dot;
  }
}

void linear_scores(const DenseLinear& model, const FeatureVector& x, std::span<double> out) {
  const auto m = static_cast<std::ptrdiff_t>(model.rows);
#pragma omp parallel for schedule(static) num_threads(team_size()) if (m > 512)
  for (std::ptrdiff_t c = 0; c < m; ++c) {
    const double* w = model.weights.data() + static_cast<std::size_t>(c) * model.cols;
    double s = model.bias[static_cast<std::size_t>(c)];
    for (const auto& e : x.entries()) {
      if (e.index < model.cols) s += w[e.index] * e.weight;
    }
    out[static_cast<std::size_t>(c)] = s;
  }
}

void for_each(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::exception_ptr failure;
  std::mutex guard;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(team_size())
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cicle::kernels::parallel
