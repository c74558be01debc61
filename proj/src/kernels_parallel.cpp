#include "msgtl/kernels.hpp"

#include <omp.h>

#include <stdexcept>

namespace msgtl::kernels::parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

bool worth_parallel(std::size_t work) { return work >= kParallelThreshold && omp_get_max_threads() > 1; }

}  // namespace

void affine(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
    if (in.cols() != weights.rows() || bias.size() != weights.cols()) {
        throw std::invalid_argument("affine: shape mismatch");
    }
    const std::size_t m = in.rows(), n = in.cols(), h = weights.cols();
    out = Matrix(m, h);
    const double* w = weights.data();
    const double* b = bias.data();
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * h))
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* o = out.data() + static_cast<std::size_t>(i) * h;
        const double* a = in.data() + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < h; ++j) o[j] = b[j];
        for (std::size_t k = 0; k < n; ++k) {
            const double ak = a[k];
            const double* wk = w + k * h;
            for (std::size_t j = 0; j < h; ++j) o[j] += ak * wk[j];
        }
    }
}

void weight_grad(const Matrix& in, const Matrix& delta, Matrix& grad) {
    if (in.rows() != delta.rows()) throw std::invalid_argument("weight_grad: row mismatch");
    const std::size_t m = in.rows(), n = in.cols(), h = delta.cols();
    grad = Matrix(n, h);
    const auto cols = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * h))
    for (std::ptrdiff_t k = 0; k < cols; ++k) {
        double* g = grad.data() + static_cast<std::size_t>(k) * h;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = in(i, static_cast<std::size_t>(k));
            const double* d = delta.data() + i * h;
            for (std::size_t j = 0; j < h; ++j) g[j] += a * d[j];
        }
    }
}

void bias_grad(const Matrix& delta, std::span<double> grad) {
    if (grad.size() != delta.cols()) throw std::invalid_argument("bias_grad: size mismatch");
    const std::size_t h = delta.cols();
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        const double* d = delta.data() + i * h;
        for (std::size_t j = 0; j < h; ++j) grad[j] += d[j];
    }
}

void input_grad(const Matrix& delta, const Matrix& weights, Matrix& grad_in) {
    if (delta.cols() != weights.cols()) throw std::invalid_argument("input_grad: shape mismatch");
    const std::size_t m = delta.rows(), h = delta.cols(), n = weights.rows();
    grad_in = Matrix(m, n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * h))
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* d = delta.data() + static_cast<std::size_t>(i) * h;
        double* g = grad_in.data() + static_cast<std::size_t>(i) * n;
        for (std::size_t k = 0; k < n; ++k) {
            const double* wk = weights.data() + k * h;
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) acc += d[j] * wk[j];
            g[k] = acc;
        }
    }
}

}  // namespace msgtl::kernels::parallel
