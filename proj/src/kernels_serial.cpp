#include "msgtl/kernels.hpp"

#include <stdexcept>

namespace msgtl::kernels::serial {

void affine(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
    if (in.cols() != weights.rows() || bias.size() != weights.cols()) {
        throw std::invalid_argument("affine: shape mismatch");
    }
    out = Matrix(in.rows(), weights.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        for (std::size_t j = 0; j < weights.cols(); ++j) {
            double acc = bias[j];
            for (std::size_t k = 0; k < in.cols(); ++k) acc += in(i, k) * weights(k, j);
            out(i, j) = acc;
        }
    }
}

void weight_grad(const Matrix& in, const Matrix& delta, Matrix& grad) {
    if (in.rows() != delta.rows()) throw std::invalid_argument("weight_grad: row mismatch");
    grad = Matrix(in.cols(), delta.cols());
    for (std::size_t k = 0; k < in.cols(); ++k) {
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < in.rows(); ++i) acc += in(i, k) * delta(i, j);
            grad(k, j) = acc;
        }
    }
}

void bias_grad(const Matrix& delta, std::span<double> grad) {
    if (grad.size() != delta.cols()) throw std::invalid_argument("bias_grad: size mismatch");
    for (std::size_t j = 0; j < delta.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < delta.rows(); ++i) acc += delta(i, j);
        grad[j] = acc;
    }
}

void input_grad(const Matrix& delta, const Matrix& weights, Matrix& grad_in) {
    if (delta.cols() != weights.cols()) throw std::invalid_argument("input_grad: shape mismatch");
    grad_in = Matrix(delta.rows(), weights.rows());
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        for (std::size_t k = 0; k < weights.rows(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < delta.cols(); ++j) acc += delta(i, j) * weights(k, j);
            grad_in(i, k) = acc;
        }
    }
}

}  // namespace msgtl::kernels::serial
