#pragma once

#include "msgtl/matrix.hpp"

#include <span>

// Dense kernels behind the forward and backward passes. Two implementations
// share one contract: `serial` is the textbook reference, `parallel` is the
// OpenMP version the engine runs. Every output element is accumulated in the
// same order by both, so their results are bit-identical for any thread count.
namespace msgtl::kernels {

namespace serial {

/// out = in * weights + bias (bias broadcast over rows).
void affine(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);
/// grad = in^T * delta
void weight_grad(const Matrix& in, const Matrix& delta, Matrix& grad);
/// grad[j] = sum_i delta(i, j)
void bias_grad(const Matrix& delta, std::span<double> grad);
/// grad_in = delta * weights^T
void input_grad(const Matrix& delta, const Matrix& weights, Matrix& grad_in);

}  // namespace serial

namespace parallel {

void affine(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);
void weight_grad(const Matrix& in, const Matrix& delta, Matrix& grad);
void bias_grad(const Matrix& delta, std::span<double> grad);
void input_grad(const Matrix& delta, const Matrix& weights, Matrix& grad_in);

}  // namespace parallel

}  // namespace msgtl::kernels
