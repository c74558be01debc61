#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace msgtl {

class TopologyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Node counts per layer: input layer first, the gamma layer second to
/// last, the single output node last.
struct Topology {
    std::vector<std::size_t> widths;
    std::size_t gamma = 0;
    std::size_t omega = 0;

    std::size_t layer_count() const noexcept { return widths.size(); }
    std::size_t input_width() const noexcept { return widths.empty() ? 0 : widths.front(); }
    /// Number of weight matrices (connections between consecutive layers).
    std::size_t matrix_count() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
    /// Index of the layer holding `gamma` nodes.
    std::size_t gamma_layer() const noexcept { return widths.size() - 2; }

    bool operator==(const Topology&) const = default;
};

/// Where the previous stage's matrix `old_layer` lands inside the next
/// stage's matrix `new_layer`: its top-left rows x cols block.
struct EmbeddingPair {
    std::size_t old_layer = 0;
    std::size_t new_layer = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    bool operator==(const EmbeddingPair&) const = default;
};

struct EmbeddingPlan {
    std::vector<EmbeddingPair> pairs;
};

/// Layer count L for n input features:
///   3                         if n <= gamma
///   omega                     if ceil(log2(n/gamma)) + 2 >= omega
///   ceil(log2(n/gamma)) + 2   otherwise
/// Throws TopologyError for n == 0, gamma == 0 or omega < 3.
std::size_t layer_count(std::size_t n, std::size_t gamma, std::size_t omega);

/// Halving width schedule. Entries 1..L-3 are ceil-halvings of the previous
/// entry, entry L-2 is gamma and entry L-1 is the output node.
Topology width_schedule(std::size_t n, std::size_t gamma, std::size_t omega);

/// Input-side alignment of every previous-stage matrix onto the same index
/// in the next stage. Throws TopologyError if `next` is narrower, shallower,
/// or built with different gamma/omega, or if any block would not fit.
EmbeddingPlan embedding_plan(const Topology& prev, const Topology& next);

}  // namespace msgtl
