#include "msgtl/engine.hpp"

#include "msgtl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace msgtl {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double clamp_score(double s) { return std::clamp(s, kScoreEpsilon, 1.0 - kScoreEpsilon); }

void check_finite(const Matrix& g, std::size_t layer, const char* what) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g.values()[i])) {
            throw NumericError(std::string("non-finite ") + what + " gradient in layer " + std::to_string(layer) +
                               " at entry (" + std::to_string(i / g.cols()) + ", " +
                               std::to_string(i % g.cols()) + ")");
        }
    }
}

void check_finite(const std::vector<double>& g, std::size_t layer) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
            throw NumericError("non-finite bias gradient in layer " + std::to_string(layer) + " at entry " +
                               std::to_string(i));
        }
    }
}

struct AdamStep {
    double beta1, beta2, eps, lr, correction1, correction2;

    void operator()(double& w, double g, double& m, double& v) const {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double mhat = m / correction1;
        const double vhat = v / correction2;
        w -= lr * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace

ForwardCache forward(const StageNetwork& net, const Matrix& batch, double dropout_p, PassMode mode, Rng* rng) {
    const auto& widths = net.topology.widths;
    if (batch.cols() != net.topology.input_width()) {
        throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                                    std::to_string(net.topology.input_width()));
    }
    if (net.layers.size() + 1 != widths.size()) throw std::invalid_argument("forward: network/topology mismatch");
    const bool use_dropout = mode == PassMode::train && dropout_p > 0.0;
    if (use_dropout && rng == nullptr) throw std::invalid_argument("forward: dropout requires an rng");

    ForwardCache cache;
    cache.revision = net.revision;
    cache.activations.reserve(widths.size());
    cache.activations.push_back(batch);
    cache.effective.reserve(net.layers.size());

    const double keep_scale = use_dropout ? 1.0 / (1.0 - dropout_p) : 1.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        cache.effective.push_back(effective_weights(net.layers[l]));
        const auto& eff = cache.effective.back();
        Matrix z;
        kernels::parallel::affine(cache.activations.back(), eff.weights, eff.bias, z);
        Matrix a(z.rows(), z.cols());
        const bool last = l + 1 == net.layers.size();
        if (last) {
            for (std::size_t i = 0; i < z.size(); ++i) a.values()[i] = sigmoid(z.values()[i]);
        } else {
            for (std::size_t i = 0; i < z.size(); ++i) a.values()[i] = std::max(0.0, z.values()[i]);
            if (use_dropout) {
                Matrix mask(z.rows(), z.cols());
                for (std::size_t i = 0; i < mask.size(); ++i) {
                    mask.values()[i] = rng->bernoulli(dropout_p) ? 0.0 : keep_scale;
                    a.values()[i] *= mask.values()[i];
                }
                cache.dropout.push_back(std::move(mask));
            }
        }
        cache.pre_activations.push_back(std::move(z));
        cache.activations.push_back(std::move(a));
    }
    return cache;
}

std::vector<double> infer(const StageNetwork& net, const Matrix& batch) {
    auto cache = forward(net, batch, 0.0, PassMode::infer, nullptr);
    return cache.activations.back().values();
}

double beta_of(std::span<const std::uint8_t> labels) {
    if (labels.empty()) throw std::invalid_argument("beta_of: empty label vector");
    std::size_t positives = 0;
    for (auto y : labels) positives += y != 0;
    return 1.0 - static_cast<double>(positives) / static_cast<double>(labels.size());
}

double balanced_ce(std::span<const double> scores, std::span<const std::uint8_t> labels, double beta) {
    if (scores.size() != labels.size()) throw std::invalid_argument("balanced_ce: length mismatch");
    if (scores.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = clamp_score(scores[i]);
        total -= labels[i] ? beta * std::log(s) : (1.0 - beta) * std::log(1.0 - s);
    }
    return total / static_cast<double>(scores.size());
}

Gradients Gradients::zeros_like(const StageNetwork& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
        g.weights.emplace_back(layer.fan_in(), layer.fan_out());
        g.bias.emplace_back(layer.fan_out(), 0.0);
    }
    return g;
}

Gradients backward(const StageNetwork& net, const ForwardCache& cache, std::span<const std::uint8_t> labels,
                   double beta, const BackwardOptions& options) {
    const std::size_t depth = net.layers.size();
    if (cache.revision != net.revision || cache.activations.size() != depth + 1 ||
        cache.effective.size() != depth) {
        throw std::invalid_argument("backward: activation cache does not belong to this network state");
    }
    for (std::size_t l = 0; l <= depth; ++l) {
        if (cache.activations[l].cols() != net.topology.widths[l]) {
            throw std::invalid_argument("backward: activation cache shape mismatch at layer " + std::to_string(l));
        }
    }
    const std::size_t rows = cache.activations[0].rows();
    if (labels.empty() || labels.size() > rows) throw std::invalid_argument("backward: label count mismatch");
    const bool has_dropout = !cache.dropout.empty();
    if (options.extra.grad != nullptr) {
        const auto& g = *options.extra.grad;
        if (options.extra.layer == 0 || options.extra.layer >= depth || g.rows() != rows ||
            g.cols() != net.topology.widths[options.extra.layer]) {
            throw std::invalid_argument("backward: injected hidden gradient has the wrong shape");
        }
    }

    // d loss / d output pre-activation for sigmoid + balanced cross-entropy.
    Matrix delta(rows, 1);
    const double inv_m = 1.0 / static_cast<double>(labels.size());
    const auto& scores = cache.activations.back();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double s = scores(i, 0);
        delta(i, 0) = (labels[i] ? -beta * (1.0 - s) : (1.0 - beta) * s) * inv_m;
    }

    Gradients grads;
    grads.weights.resize(depth);
    grads.bias.resize(depth);
    for (std::size_t step = 0; step < depth; ++step) {
        const std::size_t l = depth - 1 - step;
        const auto& layer = net.layers[l];
        kernels::parallel::weight_grad(cache.activations[l], delta, grads.weights[l]);
        grads.bias[l].assign(layer.fan_out(), 0.0);
        kernels::parallel::bias_grad(delta, grads.bias[l]);

        // Entries presenting their snapshot do not depend on the live value.
        if (layer.transferred.rows > 0) {
            const std::size_t cols = layer.fan_out();
            for (std::size_t r = 0; r < layer.transferred.rows; ++r) {
                for (std::size_t c = 0; c < layer.transferred.cols; ++c) {
                    if (layer.pf_weights[r * cols + c] == 0) grads.weights[l](r, c) = 0.0;
                }
            }
            for (std::size_t c = 0; c < layer.transferred.cols; ++c) {
                if (layer.pf_bias[c] == 0) grads.bias[l][c] = 0.0;
            }
        }

        if (l == 0 && !options.want_input_grad) break;
        Matrix upstream;
        kernels::parallel::input_grad(delta, cache.effective[l].weights, upstream);
        if (l == 0) {
            grads.input = std::move(upstream);
            break;
        }
        if (options.extra.grad != nullptr && options.extra.layer == l) {
            const auto& extra = options.extra.grad->values();
            for (std::size_t i = 0; i < upstream.size(); ++i) upstream.values()[i] += extra[i];
        }
        if (has_dropout) {
            const auto& mask = cache.dropout[l - 1].values();
            for (std::size_t i = 0; i < upstream.size(); ++i) upstream.values()[i] *= mask[i];
        }
        const auto& pre = cache.pre_activations[l - 1].values();
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            if (!(pre[i] > 0.0)) upstream.values()[i] = 0.0;
        }
        delta = std::move(upstream);
    }
    return grads;
}

double inverse_decay_rate(double eta0, double decay_omega, double decay_phi, double progress) {
    return eta0 / std::pow(1.0 + decay_omega * progress, decay_phi);
}

OptimizerState OptimizerState::for_network(const StageNetwork& net) {
    OptimizerState s;
    for (const auto& layer : net.layers) {
        s.m_weights.emplace_back(layer.fan_in(), layer.fan_out());
        s.v_weights.emplace_back(layer.fan_in(), layer.fan_out());
        s.m_bias.emplace_back(layer.fan_out(), 0.0);
        s.v_bias.emplace_back(layer.fan_out(), 0.0);
    }
    return s;
}

void apply_update(StageNetwork& net, const Gradients& grads, OptimizerState& state, std::size_t step_index,
                  std::size_t total_steps, const TrainConfig& config) {
    const std::size_t depth = net.layers.size();
    if (grads.weights.size() != depth || grads.bias.size() != depth || state.m_weights.size() != depth) {
        throw std::invalid_argument("apply_update: gradient/state shape mismatch");
    }
    for (std::size_t l = 0; l < depth; ++l) {
        check_finite(grads.weights[l], l, "weight");
        check_finite(grads.bias[l], l);
    }
    const double progress =
        total_steps == 0 ? 0.0 : std::min(1.0, static_cast<double>(step_index) / static_cast<double>(total_steps));
    const double lr = inverse_decay_rate(config.eta0, config.decay_omega, config.decay_phi, progress);
    const double t = static_cast<double>(step_index + 1);
    const AdamStep adam{config.adam_beta1,
                        config.adam_beta2,
                        config.adam_epsilon,
                        lr,
                        1.0 - std::pow(config.adam_beta1, t),
                        1.0 - std::pow(config.adam_beta2, t)};
    const bool use_adam = config.optimizer == OptimizerKind::adam;

    for (std::size_t l = 0; l < depth; ++l) {
        auto& layer = net.layers[l];
        auto& w = layer.live_weights.values();
        const auto& g = grads.weights[l].values();
        auto& m = state.m_weights[l].values();
        auto& v = state.v_weights[l].values();
        const auto n = static_cast<std::ptrdiff_t>(w.size());
#pragma omp parallel for schedule(static) if (n > (1 << 16))
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            if (layer.pb_weights[static_cast<std::size_t>(i)] == 0) continue;
            if (use_adam) adam(w[i], g[i], m[i], v[i]);
            else w[i] -= lr * g[i];
        }
        for (std::size_t c = 0; c < layer.live_bias.size(); ++c) {
            if (layer.pb_bias[c] == 0) continue;
            if (use_adam) adam(layer.live_bias[c], grads.bias[l][c], state.m_bias[l][c], state.v_bias[l][c]);
            else layer.live_bias[c] -= lr * grads.bias[l][c];
        }
    }
    ++net.revision;
}

}  // namespace msgtl
