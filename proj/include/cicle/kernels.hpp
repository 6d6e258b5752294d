#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "cicle/text.hpp"

namespace cicle::kernels {

// Row-major M x V weight matrix with one bias per row.
struct DenseLinear {
  std::span<const double> weights;
  std::span<const double> bias;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Every kernel exists twice with identical results: `serial` is the
// reference, `parallel` splits the outer loop across OpenMP threads. Each
// output element is computed by one thread in the same order as the serial
// code, so both agree bit for bit.

namespace serial {
// out[i] = cosine(rows[i], query)
void similarity_scan(std::span<const FeatureVector> rows, const FeatureVector& query, std::span<double> out);
// out[c] = W[c] . x + b[c]; indices >= cols are ignored.
void linear_scores(const DenseLinear& model, const FeatureVector& x, std::span<double> out);
void for_each(std::size_t n, const std::function<void(std::size_t)>& body);
}  // namespace serial

namespace parallel {
void similarity_scan(std::span<const FeatureVector> rows, const FeatureVector& query, std::span<double> out);
void linear_scores(const DenseLinear& model, const FeatureVector& x, std::span<double> out);
// Dynamic schedule; `body` must only touch data owned by its index.
void for_each(std::size_t n, const std::function<void(std::size_t)>& body);
int max_threads();
// Caps threads used by later parallel regions; <= 0 restores the default.
void set_threads(int n);
}  // namespace parallel

}  // namespace cicle::kernels
