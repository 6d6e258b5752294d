#include "cicle/kernels.hpp"

namespace cicle::kernels::serial {

// The query is scattered into a dense buffer once; each row then costs one
// lookup per entry. Summation runs over the row's entries in index order.
void similarity_scan(std::span<const FeatureVector> rows, const FeatureVector& query, std::span<double> out) {
  std::uint32_t dim = 0;
  for (const auto& e : query.entries()) dim = e.index + 1;
  std::vector<double> dense(dim, 0.0);
  for (const auto& e : query.entries()) dense[e.index] = e.weight;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double dot = 0.0;
    for (const auto& e : rows[i].entries()) {
      if (e.index < dim) dot += e.weight * dense[e.index];
    }
    out[i] = dot;
  }
}

void linear_scores(const DenseLinear& model, const FeatureVector& x, std::span<double> out) {
  for (std::size_t c = 0; c < model.rows; ++c) {
    const double* w = model.weights.data() + c * model.cols;
    double s = model.bias[c];
    for (const auto& e : x.entries()) {
      if (e.index < model.cols) s += w[e.index] * e.weight;
    }
    out[c] = s;
  }
}

void for_each(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace cicle::kernels::serial
