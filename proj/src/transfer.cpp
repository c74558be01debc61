#include "msgtl/transfer.hpp"

#include <cmath>
#include <stdexcept>

namespace msgtl {

StageNetwork init_network(const Topology& topology, Rng& rng) {
    StageNetwork net = zero_network(topology);
    for (auto& layer : net.layers) {
        const double sd = std::sqrt(2.0 / static_cast<double>(layer.fan_in()));
        for (auto& w : layer.live_weights.values()) w = sd * rng.normal();
    }
    return net;
}

std::pair<StageNetwork, TransferReport> transfer_weights(const StageNetwork& prev, StageNetwork next, double rho,
                                                         bool shared_mask, std::uint64_t mask_seed,
                                                         std::size_t stage_index) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("transfer_weights: rho must lie in [0, 1]");
    const EmbeddingPlan plan = embedding_plan(prev.topology, next.topology);
    Rng rng(mask_seed);

    TransferReport report;
    report.stage_index = stage_index;
    report.mask_seed = mask_seed;
    report.regions.assign(next.layers.size(), Region{});
    std::size_t pf_ones = 0, pb_ones = 0;

    auto draw = [&](std::uint8_t& pf, std::uint8_t& pb) {
        pf = rng.bernoulli(rho) ? 1 : 0;
        pb = shared_mask ? pf : (rng.bernoulli(rho) ? 1 : 0);
        pf_ones += pf;
        pb_ones += pb;
    };

    for (const auto& pair : plan.pairs) {
        // What the previous network computes with: snapshot where pf = 0.
        const EffectiveLayer src = effective_weights(prev.layers[pair.old_layer]);
        auto& dst = next.layers[pair.new_layer];
        const std::size_t cols = dst.fan_out();
        for (std::size_t r = 0; r < pair.rows; ++r) {
            for (std::size_t c = 0; c < pair.cols; ++c) {
                const double v = src.weights(r, c);
                dst.live_weights(r, c) = v;
                dst.snapshot_weights(r, c) = v;
                draw(dst.pf_weights[r * cols + c], dst.pb_weights[r * cols + c]);
            }
        }
        for (std::size_t c = 0; c < pair.cols; ++c) {
            dst.live_bias[c] = src.bias[c];
            dst.snapshot_bias[c] = src.bias[c];
            draw(dst.pf_bias[c], dst.pb_bias[c]);
        }
        dst.transferred = Region{pair.rows, pair.cols};
        report.regions[pair.new_layer] = dst.transferred;
        report.transferred_parameters += pair.rows * pair.cols + pair.cols;
    }
    report.fresh_parameters = next.parameter_count() - report.transferred_parameters;
    if (report.transferred_parameters > 0) {
        report.pf_ones_fraction = static_cast<double>(pf_ones) / static_cast<double>(report.transferred_parameters);
        report.pb_ones_fraction = static_cast<double>(pb_ones) / static_cast<double>(report.transferred_parameters);
    }
    ++next.revision;
    return {std::move(next), report};
}

bool snapshot_equals_transfer(const StageNetwork& net, const StageNetwork& prev) {
    if (net.layers.size() < prev.layers.size()) return false;
    for (std::size_t l = 0; l < prev.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const EffectiveLayer src = effective_weights(prev.layers[l]);
        const Region expected{src.weights.rows(), src.weights.cols()};
        if (layer.transferred != expected) return false;
        for (std::size_t r = 0; r < expected.rows; ++r) {
            for (std::size_t c = 0; c < expected.cols; ++c) {
                if (layer.snapshot_weights(r, c) != src.weights(r, c)) return false;
            }
        }
        for (std::size_t c = 0; c < expected.cols; ++c) {
            if (layer.snapshot_bias[c] != src.bias[c]) return false;
        }
    }
    return true;
}

}  // namespace msgtl
