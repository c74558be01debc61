#include "msgtl/adversarial.hpp"

#include "msgtl/engine.hpp"
#include "msgtl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msgtl {

namespace {

struct HeadPass {
    Matrix z1, a1, z2;
    std::vector<double> scores;
};

HeadPass head_forward(const AdversarialHead& head, const Matrix& features) {
    if (features.cols() != head.w1.rows()) throw std::invalid_argument("adversarial head: feature width mismatch");
    HeadPass p;
    kernels::parallel::affine(features, head.w1, head.b1, p.z1);
    p.a1 = p.z1;
    for (auto& v : p.a1.values()) v = std::max(0.0, v);
    kernels::parallel::affine(p.a1, head.w2, head.b2, p.z2);
    p.scores.resize(p.z2.rows());
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
        const double z = p.z2(i, 0);
        p.scores[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return p;
}

void adam_update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 double lr, double c1, double c2) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

}  // namespace

AdversarialHead AdversarialHead::create(std::size_t gamma, std::size_t hidden, double lambda, Rng& rng) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw std::invalid_argument("AdversarialHead: lambda must be >= 0");
    AdversarialHead h;
    h.lambda = lambda;
    h.w1 = Matrix(gamma, hidden);
    h.b1.assign(hidden, 0.0);
    h.w2 = Matrix(hidden, 1);
    h.b2.assign(1, 0.0);
    const double s1 = std::sqrt(2.0 / static_cast<double>(gamma));
    const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
    for (auto& w : h.w1.values()) w = s1 * rng.normal();
    for (auto& w : h.w2.values()) w = s2 * rng.normal();
    return h;
}

std::array<double, 2> domain_class_weights(std::span<const std::uint8_t> domains) {
    std::array<std::size_t, 2> counts{0, 0};
    for (auto d : domains) ++counts[d ? 1 : 0];
    const double total = static_cast<double>(domains.size());
    std::array<double, 2> w{0.0, 0.0};
    for (std::size_t k = 0; k < 2; ++k) {
        w[k] = counts[k] == 0 ? 0.0 : total / (2.0 * static_cast<double>(counts[k]));
    }
    return w;
}

double discriminator_loss(const AdversarialHead& head, const Matrix& features, std::span<const std::uint8_t> domains) {
    if (domains.size() != features.rows()) throw std::invalid_argument("discriminator_loss: row mismatch");
    const auto weights = domain_class_weights(domains);
    const auto pass = head_forward(head, features);
    double total = 0.0;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        const double s = std::clamp(pass.scores[i], kScoreEpsilon, 1.0 - kScoreEpsilon);
        total -= weights[domains[i] ? 1 : 0] * (domains[i] ? std::log(s) : std::log(1.0 - s));
    }
    return total / static_cast<double>(domains.size());
}

GrlResult grl_step(const Matrix& features, std::span<const std::uint8_t> domains, AdversarialHead& head) {
    if (domains.size() != features.rows()) throw std::invalid_argument("grl_step: row mismatch");
    GrlResult out;
    const auto weights = domain_class_weights(domains);
    if (weights[0] == 0.0 || weights[1] == 0.0) {
        ++head.single_domain_batches;
        out.skipped = true;
        out.trunk_grad = Matrix(features.rows(), features.cols());
        out.head = {Matrix(head.w1.rows(), head.w1.cols()), std::vector<double>(head.b1.size(), 0.0),
                    Matrix(head.w2.rows(), head.w2.cols()), std::vector<double>(1, 0.0)};
        return out;
    }
    head.domain_weights = weights;
    const auto pass = head_forward(head, features);
    const std::size_t m = domains.size();
    const double inv_m = 1.0 / static_cast<double>(m);

    Matrix dz2(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = domains[i] ? 1.0 : 0.0;
        const double s = std::clamp(pass.scores[i], kScoreEpsilon, 1.0 - kScoreEpsilon);
        out.loss -= weights[domains[i] ? 1 : 0] * (domains[i] ? std::log(s) : std::log(1.0 - s));
        dz2(i, 0) = weights[domains[i] ? 1 : 0] * (pass.scores[i] - d) * inv_m;
    }
    out.loss *= inv_m;

    kernels::parallel::weight_grad(pass.a1, dz2, out.head.w2);
    out.head.b2.assign(1, 0.0);
    kernels::parallel::bias_grad(dz2, out.head.b2);
    Matrix dz1;
    kernels::parallel::input_grad(dz2, head.w2, dz1);
    for (std::size_t i = 0; i < dz1.size(); ++i) {
        if (!(pass.z1.values()[i] > 0.0)) dz1.values()[i] = 0.0;
    }
    kernels::parallel::weight_grad(features, dz1, out.head.w1);
    out.head.b1.assign(head.b1.size(), 0.0);
    kernels::parallel::bias_grad(dz1, out.head.b1);
    kernels::parallel::input_grad(dz1, head.w1, out.trunk_grad);
    for (auto& v : out.trunk_grad.values()) v *= -head.lambda;
    return out;
}

HeadOptimizer HeadOptimizer::for_head(const AdversarialHead& head) {
    HeadOptimizer o;
    o.m = {Matrix(head.w1.rows(), head.w1.cols()), std::vector<double>(head.b1.size(), 0.0),
           Matrix(head.w2.rows(), head.w2.cols()), std::vector<double>(head.b2.size(), 0.0)};
    o.v = o.m;
    return o;
}

void update_head(AdversarialHead& head, const HeadGradients& grads, HeadOptimizer& opt, double learning_rate) {
    ++opt.steps;
    const double t = static_cast<double>(opt.steps);
    const double c1 = 1.0 - std::pow(0.9, t), c2 = 1.0 - std::pow(0.999, t);
    adam_update(head.w1.values(), grads.w1.values(), opt.m.w1.values(), opt.v.w1.values(), learning_rate, c1, c2);
    adam_update(head.b1, grads.b1, opt.m.b1, opt.v.b1, learning_rate, c1, c2);
    adam_update(head.w2.values(), grads.w2.values(), opt.m.w2.values(), opt.v.w2.values(), learning_rate, c1, c2);
    adam_update(head.b2, grads.b2, opt.m.b2, opt.v.b2, learning_rate, c1, c2);
}

}  // namespace msgtl
