#pragma once

#include "msgtl/config.hpp"
#include "msgtl/matrix.hpp"
#include "msgtl/network.hpp"
#include "msgtl/rng.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace msgtl {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kScoreEpsilon = 1e-12;

enum class PassMode { train, infer };

/// Everything backward() needs from a forward pass.
struct ForwardCache {
    /// activations[0] is the input batch, activations.back() the m x 1 scores.
    std::vector<Matrix> activations;
    /// Pre-activations of layers 1..L-1 (index l-1 holds layer l).
    std::vector<Matrix> pre_activations;
    /// Inverted-dropout multipliers per hidden layer (empty when inactive).
    std::vector<Matrix> dropout;
    std::vector<EffectiveLayer> effective;
    std::uint64_t revision = 0;

    std::span<const double> scores() const { return activations.back().values(); }
};

/// Dense forward pass through effective weights. ReLU hidden units, sigmoid
/// output. In train mode with dropout_p > 0 each hidden activation is
/// zeroed with probability p and survivors are scaled by 1/(1-p).
ForwardCache forward(const StageNetwork& net, const Matrix& batch, double dropout_p, PassMode mode, Rng* rng);

/// Scores only, infer mode.
std::vector<double> infer(const StageNetwork& net, const Matrix& batch);

/// 1 - (positives / count). Throws std::invalid_argument on empty input.
double beta_of(std::span<const std::uint8_t> labels);

/// Batch mean of -[beta*y*log(s) + (1-beta)*(1-y)*log(1-s)], s clamped to
/// [eps, 1-eps].
double balanced_ce(std::span<const double> scores, std::span<const std::uint8_t> labels, double beta);

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
    /// d loss / d input batch; filled only when requested.
    Matrix input;

    static Gradients zeros_like(const StageNetwork& net);
};

/// Extra gradient injected at a hidden layer's activations (used by the
/// adversarial head, whose loss reaches the trunk through that layer).
struct HiddenGradient {
    std::size_t layer = 0;
    const Matrix* grad = nullptr;
};

struct BackwardOptions {
    bool want_input_grad = false;
    HiddenGradient extra{};
};

/// Gradient of balanced_ce with respect to the live parameters. `labels`
/// covers the leading rows of the batch; trailing rows (if any) carry no
/// classification loss. Gradients where pf = 0 are zero by construction.
Gradients backward(const StageNetwork& net, const ForwardCache& cache, std::span<const std::uint8_t> labels,
                   double beta, const BackwardOptions& options = {});

/// eta0 / (1 + decay_omega * progress)^decay_phi
double inverse_decay_rate(double eta0, double decay_omega, double decay_phi, double progress);

/// First and second moments per parameter, shaped like the network.
struct OptimizerState {
    std::vector<Matrix> m_weights, v_weights;
    std::vector<std::vector<double>> m_bias, v_bias;

    static OptimizerState for_network(const StageNetwork& net);
};

/// One optimizer step (Adam or SGD per config) at learning rate
/// inverse_decay_rate(progress = step_index / total_steps). Entries with
/// pb = 0 are left untouched, moments included. Throws NumericError on a
/// non-finite gradient.
void apply_update(StageNetwork& net, const Gradients& grads, OptimizerState& state, std::size_t step_index,
                  std::size_t total_steps, const TrainConfig& config);

}  // namespace msgtl
