#include "msgtl/network.hpp"

#include <stdexcept>
#include <string>

namespace msgtl {

LayerParams LayerParams::zeros(std::size_t fan_in, std::size_t fan_out) {
    LayerParams p;
    p.live_weights = Matrix(fan_in, fan_out);
    p.snapshot_weights = Matrix(fan_in, fan_out);
    p.live_bias.assign(fan_out, 0.0);
    p.snapshot_bias.assign(fan_out, 0.0);
    p.pf_weights.assign(fan_in * fan_out, 1);
    p.pb_weights.assign(fan_in * fan_out, 1);
    p.pf_bias.assign(fan_out, 1);
    p.pb_bias.assign(fan_out, 1);
    return p;
}

void LayerParams::validate() const {
    const std::size_t rows = live_weights.rows(), cols = live_weights.cols();
    if (snapshot_weights.rows() != rows || snapshot_weights.cols() != cols || live_bias.size() != cols ||
        snapshot_bias.size() != cols || pf_weights.size() != rows * cols || pb_weights.size() != rows * cols ||
        pf_bias.size() != cols || pb_bias.size() != cols) {
        throw std::logic_error("LayerParams: inconsistent array shapes");
    }
    if (transferred.rows > rows || transferred.cols > cols) {
        throw std::logic_error("LayerParams: transferred region exceeds matrix");
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto f = pf_weights[r * cols + c], b = pb_weights[r * cols + c];
            if (f > 1 || b > 1) throw std::logic_error("LayerParams: mask entry not binary");
            if (!transferred.contains(r, c) && (f == 0 || b == 0)) {
                throw std::logic_error("LayerParams: zero mask outside transferred region at (" +
                                       std::to_string(r) + ", " + std::to_string(c) + ")");
            }
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        if (pf_bias[c] > 1 || pb_bias[c] > 1) throw std::logic_error("LayerParams: bias mask entry not binary");
        const bool inside = transferred.rows > 0 && c < transferred.cols;
        if (!inside && (pf_bias[c] == 0 || pb_bias[c] == 0)) {
            throw std::logic_error("LayerParams: zero bias mask outside transferred region");
        }
    }
}

std::size_t StageNetwork::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
}

void StageNetwork::validate() const {
    if (layers.size() != topology.matrix_count()) throw std::logic_error("StageNetwork: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].fan_in() != topology.widths[l] || layers[l].fan_out() != topology.widths[l + 1]) {
            throw std::logic_error("StageNetwork: layer " + std::to_string(l) + " does not match topology");
        }
        layers[l].validate();
    }
    if (output != Activation::sigmoid) throw std::logic_error("StageNetwork: output activation must be sigmoid");
}

bool StageNetwork::same_parameters(const StageNetwork& other) const {
    return topology == other.topology && layers == other.layers && hidden == other.hidden && output == other.output;
}

StageNetwork zero_network(const Topology& topology) {
    StageNetwork net;
    net.topology = topology;
    for (std::size_t l = 0; l < topology.matrix_count(); ++l) {
        net.layers.push_back(LayerParams::zeros(topology.widths[l], topology.widths[l + 1]));
    }
    return net;
}

EffectiveLayer effective_weights(const LayerParams& layer) {
    EffectiveLayer eff{layer.live_weights, layer.live_bias};
    if (layer.transferred.rows == 0) return eff;
    const std::size_t cols = layer.fan_out();
    for (std::size_t r = 0; r < layer.transferred.rows; ++r) {
        for (std::size_t c = 0; c < layer.transferred.cols; ++c) {
            if (layer.pf_weights[r * cols + c] == 0) eff.weights(r, c) = layer.snapshot_weights(r, c);
        }
    }
    for (std::size_t c = 0; c < layer.transferred.cols; ++c) {
        if (layer.pf_bias[c] == 0) eff.bias[c] = layer.snapshot_bias[c];
    }
    return eff;
}

}  // namespace msgtl
