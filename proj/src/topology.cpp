#include "msgtl/topology.hpp"

#include <string>

namespace msgtl {

namespace {

// ceil(log2(n / gamma)) for n > gamma, in exact integer arithmetic:
// the smallest k with gamma * 2^k >= n.
std::size_t ceil_log2_ratio(std::size_t n, std::size_t gamma) {
    std::size_t k = 0;
    std::size_t reach = gamma;
    while (reach < n) {
        reach *= 2;
        ++k;
    }
    return k;
}

void check_args(std::size_t n, std::size_t gamma, std::size_t omega) {
    if (n == 0) throw TopologyError("layer_count: feature count must be positive");
    if (gamma == 0) throw TopologyError("layer_count: gamma must be positive");
    if (omega < 3) throw TopologyError("layer_count: omega must be at least 3, got " + std::to_string(omega));
}

}  // namespace

std::size_t layer_count(std::size_t n, std::size_t gamma, std::size_t omega) {
    check_args(n, gamma, omega);
    if (n <= gamma) return 3;
    const std::size_t uncapped = ceil_log2_ratio(n, gamma) + 2;
    return uncapped >= omega ? omega : uncapped;
}

Topology width_schedule(std::size_t n, std::size_t gamma, std::size_t omega) {
    const std::size_t depth = layer_count(n, gamma, omega);
    Topology topo;
    topo.gamma = gamma;
    topo.omega = omega;
    topo.widths.reserve(depth);
    topo.widths.push_back(n);
    for (std::size_t l = 1; l + 2 < depth; ++l) {
        const std::size_t prev = topo.widths.back();
        topo.widths.push_back((prev + 1) / 2);
    }
    topo.widths.push_back(gamma);
    topo.widths.push_back(1);
    return topo;
}

EmbeddingPlan embedding_plan(const Topology& prev, const Topology& next) {
    if (prev.widths.size() < 2 || next.widths.size() < 2) {
        throw TopologyError("embedding_plan: topologies need at least two layers");
    }
    if (prev.gamma != next.gamma || prev.omega != next.omega) {
        throw TopologyError("embedding_plan: gamma/omega differ between stages");
    }
    if (prev.input_width() > next.input_width()) {
        throw TopologyError("embedding_plan: next stage has fewer input features (" +
                            std::to_string(next.input_width()) + " < " +
                            std::to_string(prev.input_width()) + ")");
    }
    if (prev.layer_count() > next.layer_count()) {
        throw TopologyError("embedding_plan: next stage is shallower than the previous stage");
    }
    EmbeddingPlan plan;
    for (std::size_t l = 0; l + 1 < prev.layer_count(); ++l) {
        const EmbeddingPair pair{l, l, prev.widths[l], prev.widths[l + 1]};
        if (pair.rows > next.widths[l] || pair.cols > next.widths[l + 1]) {
            throw TopologyError("embedding_plan: block for layer " + std::to_string(l) + " does not fit");
        }
        plan.pairs.push_back(pair);
    }
    return plan;
}

}  // namespace msgtl
