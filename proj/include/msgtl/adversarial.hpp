#pragma once

#include "msgtl/matrix.hpp"
#include "msgtl/rng.hpp"

#include <array>
#include <cstdint>
#include <span>

namespace msgtl {

/// Domain discriminator attached behind a gradient reversal layer at the
/// gamma layer: gamma -> hidden (ReLU) -> 1 (sigmoid). Domain 1 = source
/// (previous stage), 0 = target (current stage).
struct AdversarialHead {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
    double lambda = 0.0;
    /// Class weights used by the most recent step: {target, source}.
    std::array<double, 2> domain_weights{1.0, 1.0};
    /// Batches skipped because they held a single domain.
    std::size_t single_domain_batches = 0;

    static AdversarialHead create(std::size_t gamma, std::size_t hidden, double lambda, Rng& rng);
};

struct HeadGradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
};

struct GrlResult {
    double loss = 0.0;
    HeadGradients head;
    /// Gradient handed to the trunk at the gamma layer: -lambda times the
    /// discriminator loss gradient with respect to its input features.
    Matrix trunk_grad;
    bool skipped = false;
};

/// total / (2 * count_of_domain) for each domain.
std::array<double, 2> domain_class_weights(std::span<const std::uint8_t> domains);

/// Weighted binary cross-entropy of the discriminator, batch mean.
double discriminator_loss(const AdversarialHead& head, const Matrix& features, std::span<const std::uint8_t> domains);

/// Forward + backward through the discriminator and the reversal layer. A
/// batch with a single domain is a no-op (skipped, counter incremented).
GrlResult grl_step(const Matrix& features, std::span<const std::uint8_t> domains, AdversarialHead& head);

/// Adam state for the discriminator parameters.
struct HeadOptimizer {
    HeadGradients m, v;
    std::size_t steps = 0;
    static HeadOptimizer for_head(const AdversarialHead& head);
};

void update_head(AdversarialHead& head, const HeadGradients& grads, HeadOptimizer& opt, double learning_rate);

}  // namespace msgtl
